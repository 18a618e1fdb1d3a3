//! Declarative run configuration (TOML).
//!
//! | key | unit | default | range |
//! |-----|------|---------|-------|
//! | `K` | angles | required | >= 2 |
//! | `a` | angles | required | `1 + 2a < K` |
//! | `v_max` | angles per frame | required | `1 <= v_max`, `2 v_max + 1 <= K` |
//! | `hotspots` | `[[angle (1-based), multiplier]]` | `[]` | multiplier >= 1 |
//! | `transition_csv` | path | none | replaces the linear model |
//! | `T_s` | frames | required | >= 0 |
//! | `H` | frames | 1 | >= 1 |
//! | `propagation_order` | `motion_first` / `fov_first` | `motion_first` | |
//! | `C` | rate units | required | > 0 |
//! | `B`, `Q` | rate units x s, s | required | > 0 |
//! | `sigma` | sqrt(MSE) | none | > 0; exactly one of `sigma` / `rd_samples` |
//! | `rd_samples` | path | none | CSV `distortion,rate` |
//! | `d_max` | MSE | 46 | > 0 |
//! | `rate_floor` | rate | 1e-9 | >= 0 |
//! | `max_streams` | count | 4 | `1..=K` |
//! | `restarts` | count | 4 | >= 1; rotated starts per solve |
//! | `seed` | | 0 | u64 |
//! | `duration_frames` | frames | 100000 | >= 1 |
//! | `exclude_warmup` | bool | false | |
//! | `scheme` | `adaptive` / `static` | adaptive | |
//! | `output_dir` | path | `out` | |
//! | `storage_grid` | list of `B` values | `[]` | >= 2 entries for `compare` |
//! | `tolerances.alternation` | relative | 1e-6 | > 0 |
//! | `tolerances.max_iters` | iterations | 500 | >= 1 |
//! | `tolerances.budget` | relative | 0.01 | > 0 |
//! | `tolerances.bisection` | relative | 1e-4 | > 0 |
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{OptimizationProblem, SolverOptions};
use crate::rate_distortion::{fit_rate_model, FitOptions, RateFit, RateModel, RdSampleSet};
use crate::simulator::SessionConfig;
use crate::view_model::{build_linear_transition, PropagationOrder, TransitionModel, ViewSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Adaptive,
    Static,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Adaptive => "adaptive",
            Scheme::Static => "static",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub alternation: f64,
    pub max_iters: usize,
    pub budget: f64,
    pub bisection: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self { alternation: d.tol, max_iters: d.max_iters, budget: d.budget_tolerance, bisection: d.bisection_precision }
    }
}

fn default_gop() -> usize {
    1
}
fn default_d_max() -> f64 {
    46.0
}
fn default_rate_floor() -> f64 {
    1e-9
}
fn default_max_streams() -> usize {
    4
}
fn default_restarts() -> usize {
    SolverOptions::default().restarts
}
fn default_duration() -> usize {
    100_000
}
fn default_scheme() -> Scheme {
    Scheme::Adaptive
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "K")]
    pub num_angles: usize,
    pub a: usize,
    pub v_max: usize,
    #[serde(default)]
    pub hotspots: Vec<(usize, f64)>,
    #[serde(default)]
    pub transition_csv: Option<PathBuf>,
    #[serde(rename = "T_s")]
    pub rtt_frames: usize,
    #[serde(rename = "H", default = "default_gop")]
    pub gop: usize,
    #[serde(default)]
    pub propagation_order: PropagationOrder,
    #[serde(rename = "C")]
    pub transmission_budget: f64,
    #[serde(rename = "B")]
    pub storage_bits: f64,
    #[serde(rename = "Q")]
    pub duration_secs: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub rd_samples: Option<PathBuf>,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default = "default_rate_floor")]
    pub rate_floor: f64,
    #[serde(default = "default_max_streams")]
    pub max_streams: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_frames: usize,
    #[serde(default)]
    pub exclude_warmup: bool,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub storage_grid: Vec<f64>,
}

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Effective TOML after overrides; hashed into output provenance.
    pub effective_text: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies a `key=value` override; dotted keys address nested tables.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidParameter(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::InvalidParameter(format!("override key {key} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies `overrides` and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::parse(path, e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let effective_text = toml::to_string(&table).map_err(|e| Error::parse(path, e.to_string()))?;
        let config: RunConfig =
            toml::from_str(&effective_text).map_err(|e| Error::parse(path, e.message().to_string()))?;
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = LoadedConfig { config, effective_text, base_dir };
        for p in [&loaded.config.rd_samples, &loaded.config.transition_csv].into_iter().flatten() {
            let full = loaded.resolve(p);
            if !full.is_file() {
                return Err(Error::InvalidParameter(format!("referenced file {} does not exist", full.display())));
            }
        }
        Ok(loaded)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        ViewSpace::new(self.num_angles, self.a)?;
        if self.v_max == 0 || 2 * self.v_max + 1 > self.num_angles {
            return bad(format!("v_max must satisfy 1 <= v_max and 2 v_max + 1 <= K, got {}", self.v_max));
        }
        for &(angle, m) in &self.hotspots {
            if angle == 0 || angle > self.num_angles {
                return bad(format!("hotspot angle {angle} outside 1..={}", self.num_angles));
            }
            if !(m >= 1.0) {
                return bad(format!("hotspot multiplier must be >= 1, got {m}"));
            }
        }
        if self.gop == 0 {
            return bad("H must be at least 1".into());
        }
        for (name, v) in [("C", self.transmission_budget), ("B", self.storage_bits), ("Q", self.duration_secs), ("d_max", self.d_max)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        match (self.sigma, &self.rd_samples) {
            (Some(s), None) if s > 0.0 && s.is_finite() => {}
            (Some(s), None) => return bad(format!("sigma must be positive, got {s}")),
            (None, Some(_)) => {}
            _ => return bad("set exactly one of sigma and rd_samples".into()),
        }
        if !(self.rate_floor >= 0.0) {
            return bad("rate_floor must be >= 0".into());
        }
        if self.max_streams == 0 || self.max_streams > self.num_angles {
            return bad(format!("max_streams must be in 1..={}", self.num_angles));
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.duration_frames == 0 {
            return bad("duration_frames must be at least 1".into());
        }
        let t = &self.tolerances;
        if !(t.alternation > 0.0 && t.budget > 0.0 && t.bisection > 0.0 && t.max_iters >= 1) {
            return bad("tolerances must be positive".into());
        }
        if let Some(x) = self.storage_grid.iter().find(|x| !(**x > 0.0)) {
            return bad(format!("storage_grid entries must be positive, got {x}"));
        }
        Ok(())
    }
}

impl LoadedConfig {
    pub fn view_space(&self) -> Result<ViewSpace> {
        ViewSpace::new(self.config.num_angles, self.config.a)
    }

    pub fn transition_model(&self) -> Result<TransitionModel> {
        let c = &self.config;
        let model = match &c.transition_csv {
            Some(p) => TransitionModel::from_csv_path(&self.resolve(p))?,
            None => {
                let hotspots: Vec<(usize, f64)> = c.hotspots.iter().map(|&(k, m)| (k - 1, m)).collect();
                build_linear_transition(self.view_space()?, c.v_max, &hotspots)?
            }
        };
        if model.num_angles() != c.num_angles {
            return Err(Error::InvalidParameter(format!(
                "transition matrix is {0}x{0}, config has K = {1}",
                model.num_angles(),
                c.num_angles
            )));
        }
        Ok(model)
    }

    /// Rate model from `sigma` or from fitting `rd_samples`.
    pub fn rate_model(&self) -> Result<(RateModel, Option<RateFit>)> {
        let c = &self.config;
        match (&c.rd_samples, c.sigma) {
            (Some(p), _) => {
                let samples = RdSampleSet::from_csv_path(&self.resolve(p))?;
                let fit = fit_rate_model(&samples, FitOptions { rate_floor: c.rate_floor, fallback_d_max: c.d_max })?;
                Ok((fit.model, Some(fit)))
            }
            (None, Some(sigma)) => Ok((RateModel::new(sigma, c.d_max)?, None)),
            (None, None) => Err(Error::InvalidParameter("set exactly one of sigma and rd_samples".into())),
        }
    }

    pub fn problem(&self) -> Result<OptimizationProblem> {
        let c = &self.config;
        let (rate, _) = self.rate_model()?;
        let problem = OptimizationProblem::new(
            self.view_space()?,
            self.transition_model()?,
            rate,
            c.rtt_frames,
            c.gop,
            c.transmission_budget,
            c.storage_bits,
            c.duration_secs,
        )?;
        Ok(match c.propagation_order {
            order if order == problem.order() => problem,
            order => problem.with_order(order),
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        let t = &self.config.tolerances;
        SolverOptions {
            tol: t.alternation,
            max_iters: t.max_iters,
            budget_tolerance: t.budget,
            bisection_precision: t.bisection,
            restarts: self.config.restarts,
            ..SolverOptions::default()
        }
    }

    pub fn session_config(&self) -> Result<SessionConfig> {
        let c = &self.config;
        let mut s = SessionConfig::new(c.rtt_frames, c.gop, c.duration_frames, c.seed)?;
        s.exclude_warmup = c.exclude_warmup;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
K = 12
a = 1
v_max = 1
T_s = 2
C = 4.0
B = 8.0
Q = 1.0
sigma = 3.0
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.gop, 1);
        assert_eq!(c.max_streams, 4);
        assert_eq!(c.scheme, Scheme::Adaptive);
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str(&format!("{MINIMAL}\nbandwidth = 3\n")).unwrap_err();
        assert!(err.to_string().contains("bandwidth"), "{err}");
    }

    #[test]
    fn range_checks() {
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("a = 1", "a = 6")).is_err());
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("C = 4.0", "C = -1.0")).is_err());
        assert!(RunConfig::from_toml_str(&MINIMAL.replace("sigma = 3.0", "")).is_err());
        assert!(RunConfig::from_toml_str(&format!("{MINIMAL}\nhotspots = [[13, 2.0]]\n")).is_err());
        assert!(RunConfig::from_toml_str(&format!("{MINIMAL}\nhotspots = [[3, 2.0]]\n")).is_ok());
    }

    #[test]
    fn overrides_apply() {
        let mut t: toml::Table = toml::from_str(MINIMAL).unwrap();
        apply_override(&mut t, "C=6.5").unwrap();
        apply_override(&mut t, "tolerances.budget=0.02").unwrap();
        apply_override(&mut t, "scheme=static").unwrap();
        let c: RunConfig = toml::from_str(&toml::to_string(&t).unwrap()).unwrap();
        assert_eq!(c.transmission_budget, 6.5);
        assert_eq!(c.tolerances.budget, 0.02);
        assert_eq!(c.scheme, Scheme::Static);
        assert!(apply_override(&mut t, "novalue").is_err());
    }
}
