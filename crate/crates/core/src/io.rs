//! Plain-text file formats: `key=value` blocks, the sectioned solution
//! bundle, and session reports. Writers go through [`atomic_write`] so a
//! failed command never leaves a partial file behind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optimizer::{Mapping, Multipliers, OptimizationProblem, Solution, StreamSet, SweepRow};
use crate::simulator::SessionReport;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Provenance stamped into every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn for_bytes(bytes: &[u8]) -> Self {
        Self { config_hash: sha256_hex(bytes), tool_version: TOOL_VERSION.to_string() }
    }

    pub fn comment_line(&self) -> String {
        format!("# viewstream {} config_hash={}\n", self.tool_version, self.config_hash)
    }
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Serialises a solution (and optionally the per-stream-count sweep table).
pub fn write_solution_bundle(
    problem: &OptimizationProblem,
    solution: &Solution,
    sweep: Option<&[SweepRow]>,
    scheme: &str,
    prov: &Provenance,
) -> String {
    let k = problem.num_angles();
    let mut s = String::new();
    let _ = writeln!(s, "# viewstream solution bundle");
    let _ = writeln!(s, "format_version={BUNDLE_FORMAT_VERSION}");
    let _ = writeln!(s, "tool_version={}", prov.tool_version);
    let _ = writeln!(s, "config_hash={}", prov.config_hash);
    let _ = writeln!(s, "[summary]");
    let summary: [(&str, String); 18] = [
        ("scheme", scheme.to_string()),
        ("propagation_order", problem.order().as_str().to_string()),
        ("num_angles", k.to_string()),
        ("num_streams", solution.num_streams().to_string()),
        ("lambda", solution.multipliers.lambda.to_string()),
        ("mu", solution.multipliers.mu.to_string()),
        ("expected_distortion", solution.expected_distortion.to_string()),
        ("expected_mse", solution.expected_mse(problem).to_string()),
        ("expected_psnr", solution.expected_psnr(problem).to_string()),
        ("storage_rate", solution.storage_rate.to_string()),
        ("storage_budget", problem.storage_budget().to_string()),
        ("transmission_rate", solution.transmission_rate.to_string()),
        ("transmission_budget", problem.transmission_budget().to_string()),
        ("peak_stream_rate", solution.peak_stream_rate(problem).to_string()),
        ("lagrangian", solution.final_lagrangian().to_string()),
        ("iterations", solution.iterations.to_string()),
        ("converged", solution.converged.to_string()),
        ("d_max", problem.rate_model().d_max().to_string()),
    ];
    for (key, value) in summary {
        let _ = writeln!(s, "{key}={value}");
    }
    let _ = writeln!(s, "[streams]");
    let _ = writeln!(s, "stream,{}", join((1..=k).map(|l| format!("d_{l}"))));
    for (i, d) in solution.streams.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, join(d));
    }
    let _ = writeln!(s, "[mapping]");
    let _ = writeln!(s, "angle,stream");
    for (angle, &stream) in solution.mapping.as_slice().iter().enumerate() {
        let _ = writeln!(s, "{},{}", angle + 1, stream + 1);
    }
    let _ = writeln!(s, "[lagrangian_trace]");
    let _ = writeln!(s, "step,value");
    for (i, v) in solution.lagrangian_trace.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    if let Some(rows) = sweep {
        let _ = writeln!(s, "[sweep]");
        let _ = writeln!(s, "{}", SWEEP_HEADER);
        for r in rows {
            let _ = writeln!(s, "{}", sweep_row_csv(r));
        }
    }
    s
}

pub const SWEEP_HEADER: &str =
    "requested_streams,num_streams,feasible,lambda,mu,expected_distortion,expected_psnr,storage_rate,transmission_rate,iterations,note";

pub fn sweep_row_csv(r: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.requested_streams,
        r.num_streams,
        r.feasible,
        r.lambda,
        r.mu,
        r.expected_distortion,
        r.expected_psnr,
        r.storage_rate,
        r.transmission_rate,
        r.iterations,
        r.note.replace(',', ";")
    )
}

/// Contents of a solution bundle as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBundle {
    pub header: BTreeMap<String, String>,
    pub summary: BTreeMap<String, String>,
    pub streams: Vec<Vec<f64>>,
    pub mapping: Vec<usize>,
    pub multipliers: Multipliers,
}

impl SolutionBundle {
    pub fn parse(text: &str) -> Result<Self> {
        let err = |reason: String| Error::parse("solution bundle", reason);
        let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        let mut current = String::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            sections.entry(current.clone()).or_default().push(line);
        }
        let header = parse_kv(&sections.get("").map(|v| v.join("\n")).unwrap_or_default());
        match header.get("format_version").map(String::as_str) {
            Some(v) if v == BUNDLE_FORMAT_VERSION.to_string() => {}
            other => return Err(err(format!("unsupported format_version {other:?}"))),
        }
        let summary = parse_kv(&sections.get("summary").map(|v| v.join("\n")).unwrap_or_default());
        let num = |key: &str| -> Result<f64> {
            summary
                .get(key)
                .ok_or_else(|| err(format!("missing summary key {key}")))?
                .parse::<f64>()
                .map_err(|_| err(format!("bad value for {key}")))
        };
        let multipliers = Multipliers::new(num("lambda")?, num("mu")?)?;

        let rows = sections.get("streams").ok_or_else(|| err("missing [streams]".into()))?;
        let mut streams = Vec::new();
        for (i, line) in rows.iter().enumerate().skip(1) {
            let mut cells = line.split(',');
            cells.next();
            let d = cells
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| err(format!("bad number in stream row {i}")))?;
            streams.push(d);
        }
        let rows = sections.get("mapping").ok_or_else(|| err("missing [mapping]".into()))?;
        let mut mapping = Vec::new();
        for (i, line) in rows.iter().enumerate().skip(1) {
            let (_, stream) = line.split_once(',').ok_or_else(|| err(format!("bad mapping row {i}")))?;
            let stream: usize = stream.trim().parse().map_err(|_| err(format!("bad mapping row {i}")))?;
            if stream == 0 {
                return Err(err(format!("mapping row {i} uses stream 0; streams are 1-based")));
            }
            mapping.push(stream - 1);
        }
        Ok(Self { header, summary, streams, mapping, multipliers })
    }

    /// Rebuilds a [`Solution`] against `problem`, re-evaluating objective and rates.
    pub fn to_solution(&self, problem: &OptimizationProblem) -> Result<Solution> {
        let k = problem.num_angles();
        if self.mapping.len() != k {
            return Err(Error::InvalidParameter(format!(
                "bundle mapping covers {} angles, problem has K = {k}",
                self.mapping.len()
            )));
        }
        let streams = StreamSet::new(self.streams.clone(), k, problem.rate_model().d_max())?;
        let mapping = Mapping::new(self.mapping.clone(), streams.len())?;
        Ok(Solution::evaluate(problem, streams, mapping, self.multipliers))
    }
}

/// Per-frame session series as CSV.
pub fn session_csv(report: &SessionReport, prov: &Provenance) -> String {
    let mut s = String::with_capacity(report.per_frame_distortion.len() * 24);
    s.push_str(&prov.comment_line());
    s.push_str("frame,stream,distortion\n");
    for (i, (d, st)) in report.per_frame_distortion.iter().zip(&report.per_frame_stream).enumerate() {
        let _ = writeln!(s, "{},{},{}", report.first_frame + i, st + 1, d);
    }
    s
}

/// Session summary as `key=value` lines.
pub fn session_summary(report: &SessionReport, extra: &[(&str, String)], prov: &Provenance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "tool_version={}", prov.tool_version);
    let _ = writeln!(s, "config_hash={}", prov.config_hash);
    let _ = writeln!(s, "frames={}", report.per_frame_distortion.len());
    let _ = writeln!(s, "first_frame={}", report.first_frame);
    let _ = writeln!(s, "mean_distortion={}", report.mean_distortion);
    let _ = writeln!(s, "trace_mean_psnr={}", report.mean_psnr);
    let _ = writeln!(s, "switch_count={}", report.switch_count);
    let _ = writeln!(s, "transmitted_rate_mean={}", report.transmitted_rate_mean);
    let _ = writeln!(s, "stream_occupancy={}", join(&report.stream_occupancy));
    for (k, v) in extra {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# c\na=1\n b = x y \n\nnot a pair\n");
        assert_eq!(kv.len(), 2);
        assert_eq!(kv["b"], "x y");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.txt");
        atomic_write(&p, "one").unwrap();
        atomic_write(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn sha_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn bundle_rejects_unknown_version() {
        assert!(SolutionBundle::parse("format_version=9\n[summary]\nlambda=0\nmu=0\n").is_err());
    }
}
