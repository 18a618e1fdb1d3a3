//! Clipped-Laplacian rate model and the two-level quantizer used to map an
//! optimized distortion profile onto two encoder operating points.
//!
//! Rates are in normalised units: one angle coded at zero distortion costs
//! 1.0. A fitted amplitude converts to physical units when needed; the
//! budgets `C` and `B/Q` are always expressed in normalised units.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// `g(d) = U(d_max - d) exp(-d / sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    sigma: f64,
    d_max: f64,
}

impl RateModel {
    pub fn new(sigma: f64, d_max: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !(d_max.is_finite() && d_max > 0.0) {
            return Err(Error::InvalidParameter(format!("d_max must be positive, got {d_max}")));
        }
        Ok(Self { sigma, d_max })
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    #[inline]
    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Per-angle rate. Callers guarantee `d >= 0`.
    #[inline]
    pub fn g(&self, d: f64) -> f64 {
        if d >= self.d_max {
            0.0
        } else {
            (-d / self.sigma_sq()).exp()
        }
    }

    /// Checked per-angle rate.
    pub fn rate_of_distortion(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(Error::InvalidParameter(format!("distortion must be >= 0, got {d}")));
        }
        Ok(self.g(d))
    }

    /// `r(d) = sum_l g(d_l)` without validation.
    #[inline]
    pub fn rate_sum(&self, d: &[f64]) -> f64 {
        d.iter().map(|&x| self.g(x)).sum()
    }

    /// Checked stream rate for a length-`num_angles` distortion vector.
    pub fn stream_rate(&self, d: &[f64], num_angles: usize) -> Result<f64> {
        if d.len() != num_angles {
            return Err(Error::InvalidParameter(format!(
                "distortion vector has length {}, expected {num_angles}",
                d.len()
            )));
        }
        if let Some(x) = d.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::InvalidParameter(format!("distortion must be >= 0, got {x}")));
        }
        Ok(self.rate_sum(d))
    }

    /// Distortion at which `n` angles coded uniformly cost `budget` in total,
    /// clamped into `[0, d_max]`.
    pub fn uniform_distortion_for_budget(&self, budget: f64, n: usize) -> f64 {
        if n == 0 || budget <= 0.0 {
            return self.d_max;
        }
        let per_angle = budget / n as f64;
        if per_angle >= 1.0 {
            return 0.0;
        }
        (-self.sigma_sq() * per_angle.ln()).clamp(0.0, self.d_max)
    }
}

/// Empirical rate-distortion points, sorted by increasing distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct RdSampleSet {
    samples: Vec<(f64, f64)>,
}

impl RdSampleSet {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        for (row, &(d, r)) in samples.iter().enumerate() {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidSample { row, reason: format!("distortion {d} is negative") });
            }
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidSample { row, reason: format!("rate {r} is negative") });
            }
            if row > 0 {
                let (pd, pr) = samples[row - 1];
                if d <= pd {
                    return Err(Error::InvalidSample {
                        row,
                        reason: format!("distortion {d} does not increase (previous {pd})"),
                    });
                }
                if r > pr {
                    return Err(Error::InvalidSample {
                        row,
                        reason: format!("rate {r} increases (previous {pr})"),
                    });
                }
            }
        }
        Ok(Self { samples })
    }

    /// Parses `distortion,rate` CSV with a mandatory header row. Reported
    /// rows are 1-based data rows.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(Error::InsufficientSamples { needed: 3, got: 0 })?;
        let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
        if cols != ["distortion", "rate"] {
            return Err(Error::InvalidSample {
                row: 0,
                reason: format!("expected header 'distortion,rate', found {header:?}"),
            });
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = i + 1;
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 2 {
                return Err(Error::InvalidSample { row, reason: format!("expected 2 columns in {line:?}") });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::InvalidSample {
                    row,
                    reason: format!("cannot parse {s:?} as a number"),
                })
            };
            samples.push((parse(cells[0])?, parse(cells[1])?));
        }
        Self::new(samples).map_err(|e| match e {
            Error::InvalidSample { row, reason } => Error::InvalidSample { row: row + 1, reason },
            e => e,
        })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Controls how `d_max` is chosen when fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Samples with rate at or below this value count as unencoded.
    pub rate_floor: f64,
    /// `d_max` used when no sample falls to the floor.
    pub fallback_d_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { rate_floor: 1e-9, fallback_d_max: 46.0 }
    }
}

/// Result of [`fit_rate_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    /// Physical rate of one angle at zero distortion.
    pub amplitude: f64,
    /// RMS residual of the log-rate regression.
    pub residual: f64,
    pub samples_used: usize,
}

impl RateFit {
    /// `key=value` text form.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sigma={}", self.model.sigma());
        let _ = writeln!(s, "d_max={}", self.model.d_max());
        let _ = writeln!(s, "amplitude={}", self.amplitude);
        let _ = writeln!(s, "residual={}", self.residual);
        let _ = writeln!(s, "samples_used={}", self.samples_used);
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let kv = crate::io::parse_kv(text);
        let get = |key: &str| -> Result<f64> {
            kv.get(key)
                .ok_or_else(|| Error::parse("rate model", format!("missing key {key}")))?
                .parse::<f64>()
                .map_err(|_| Error::parse("rate model", format!("bad value for {key}")))
        };
        Ok(Self {
            model: RateModel::new(get("sigma")?, get("d_max")?)?,
            amplitude: get("amplitude")?,
            residual: get("residual")?,
            samples_used: get("samples_used")? as usize,
        })
    }
}

/// Least-squares fit of `log r = log A - d / sigma^2` over the encoded samples.
pub fn fit_rate_model(samples: &RdSampleSet, opts: FitOptions) -> Result<RateFit> {
    let positive = samples.samples().iter().filter(|(_, r)| *r > 0.0).count();
    if positive < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: positive });
    }
    let d_max = samples
        .samples()
        .iter()
        .find(|(_, r)| *r <= opts.rate_floor)
        .map(|(d, _)| *d)
        .unwrap_or(opts.fallback_d_max);
    let used: Vec<(f64, f64)> = samples
        .samples()
        .iter()
        .filter(|(d, r)| *r > opts.rate_floor && *d < d_max)
        .map(|&(d, r)| (d, r.ln()))
        .collect();
    if used.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: used.len() });
    }
    let n = used.len() as f64;
    let mean_d = used.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mean_d).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - mean_d) * (p.1 - mean_y)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("distortions are all equal".into()));
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::DegenerateFit(format!("rate does not decay with distortion (slope {slope})")));
    }
    let intercept = mean_y - slope * mean_d;
    let residual = (used
        .iter()
        .map(|&(d, y)| (y - intercept - slope * d).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let sigma = (-1.0 / slope).sqrt();
    Ok(RateFit {
        model: RateModel::new(sigma, d_max)?,
        amplitude: intercept.exp(),
        residual,
        samples_used: used.len(),
    })
}

/// Quantizer cell chosen for one angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantLevel {
    Low,
    High,
    Unencoded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelQuantization {
    pub levels: (f64, f64),
    pub assignment: Vec<QuantLevel>,
    pub weighted_mse: f64,
    pub iterations: usize,
}

impl TwoLevelQuantization {
    /// Distortion vector with every encoded angle replaced by its level.
    pub fn quantized(&self, d_max: f64) -> Vec<f64> {
        self.assignment
            .iter()
            .map(|a| match a {
                QuantLevel::Low => self.levels.0,
                QuantLevel::High => self.levels.1,
                QuantLevel::Unencoded => d_max,
            })
            .collect()
    }
}

/// Weighted quantile of `(value, weight)` pairs sorted by value.
fn weighted_quantile(sorted: &[(f64, f64)], total: f64, frac: f64) -> f64 {
    let target = frac * total;
    let mut acc = 0.0;
    for &(x, w) in sorted {
        acc += w;
        if acc >= target {
            return x;
        }
    }
    sorted.last().map(|p| p.0).unwrap_or(0.0)
}

/// One Lloyd-Max run from the level pair `(lo, hi)`. Returns the final levels,
/// the Low/High flag per entry of `values`, and the iteration count.
fn lloyd_run(values: &[(f64, f64)], mut lo: f64, mut hi: f64) -> (f64, f64, Vec<bool>, usize) {
    let mut high = vec![false; values.len()];
    let mut iterations = 0;
    let cap = 2 * values.len() + 10;
    loop {
        iterations += 1;
        let boundary = 0.5 * (lo + hi);
        let mut changed = iterations == 1;
        for (h, &(x, _)) in high.iter_mut().zip(values) {
            let cell = x > boundary;
            changed |= *h != cell;
            *h = cell;
        }
        let new_lo = centroid(values, &high, false).unwrap_or(lo);
        let new_hi = centroid(values, &high, true).unwrap_or(hi);
        let moved = new_lo != lo || new_hi != hi;
        lo = new_lo;
        hi = new_hi;
        if (!changed && !moved) || iterations >= cap {
            break;
        }
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
        high.iter_mut().for_each(|h| *h = !*h);
    }
    (lo, hi, high, iterations)
}

/// Weighted mean of one cell, taken as an offset from the cell minimum so a
/// cell of equal values reproduces that value exactly.
fn centroid(values: &[(f64, f64)], high: &[bool], cell: bool) -> Option<f64> {
    let members = || values.iter().zip(high).filter(move |(_, &h)| h == cell).map(|(v, _)| *v);
    let base = members().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let (sw, swx) = members().fold((0.0, 0.0), |(sw, swx), (x, w)| (sw + w, swx + w * (x - base)));
    (sw > 0.0).then(|| base + swx / sw)
}

fn cell_error(values: &[(f64, f64)], high: &[bool], lo: f64, hi: f64) -> f64 {
    values.iter().zip(high).map(|(&(x, w), &h)| w * (x - if h { hi } else { lo }).powi(2)).sum()
}

/// Two-level Lloyd-Max quantization of the encoded (`< d_max`) entries of `d`.
///
/// Runs Lloyd-Max from the weighted 25th/75th percentiles and from the
/// centroids of every split of the sorted entries, keeping the lowest error.
pub fn lloyd_max_two_level(d: &[f64], weights: &[f64], d_max: f64) -> Result<TwoLevelQuantization> {
    if d.len() != weights.len() {
        return Err(Error::InvalidParameter("distortion and weight lengths differ".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be non-negative".into()));
    }
    let encoded: Vec<usize> = (0..d.len()).filter(|&l| d[l] < d_max).collect();
    if encoded.is_empty() {
        return Err(Error::AllUnencoded);
    }
    let mut total: f64 = encoded.iter().map(|&l| weights[l]).sum();
    let uniform = total <= 0.0;
    if uniform {
        total = encoded.len() as f64;
    }
    let values: Vec<(f64, f64)> = encoded.iter().map(|&l| (d[l], if uniform { 1.0 } else { weights[l] })).collect();

    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut starts = vec![(weighted_quantile(&sorted, total, 0.25), weighted_quantile(&sorted, total, 0.75))];
    for cut in 1..sorted.len() {
        if sorted[cut - 1].0 == sorted[cut].0 {
            continue;
        }
        let split: Vec<bool> = (0..sorted.len()).map(|i| i >= cut).collect();
        if let (Some(lo), Some(hi)) = (centroid(&sorted, &split, false), centroid(&sorted, &split, true)) {
            starts.push((lo, hi));
        }
    }

    let mut best: Option<(f64, f64, Vec<bool>, usize, f64)> = None;
    for (lo, hi) in starts {
        let (lo, hi, high, iterations) = lloyd_run(&values, lo, hi);
        let err = cell_error(&values, &high, lo, hi);
        if best.as_ref().map_or(true, |b| err < b.4) {
            best = Some((lo, hi, high, iterations, err));
        }
    }
    let (lo, hi, high, iterations, err) = best.expect("at least one start");

    let mut assignment = vec![QuantLevel::Unencoded; d.len()];
    for (&l, &h) in encoded.iter().zip(&high) {
        assignment[l] = if h { QuantLevel::High } else { QuantLevel::Low };
    }
    Ok(TwoLevelQuantization { levels: (lo, hi), assignment, weighted_mse: err / total, iterations })
}
