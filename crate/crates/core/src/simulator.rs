//! Discrete-time streaming session.
//!
//! Every frame the client reports its head angle. A report takes `T_s` frames
//! to reach the server and the server only switches at GOP boundaries, so
//! the GOP starting at frame `n` is served by `f(theta[n - T_s])`. Frames
//! before the first report arrives play the stream chosen for `theta[0]`.
//!
//! Head traces are drawn with ChaCha8 seeded through `seed_from_u64`; a
//! uniform variate is the top 53 bits of `next_u64` scaled by `2^-53`, and
//! categorical draws invert the cumulative distribution in index order.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::optimizer::{Mapping, Multipliers, OptimizationProblem, Solution, StreamSet};
use crate::rate_distortion::RateModel;
use crate::view_model::{circular_distance, TransitionModel, ViewSpace};

/// PSNR reported for a zero MSE.
pub const PSNR_CEILING_DB: f64 = 99.0;

/// `10 log10(255^2 / mse)`; zero MSE maps to [`PSNR_CEILING_DB`].
pub fn psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CEILING_DB
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    pub rtt_frames: usize,
    pub gop: usize,
    pub duration_frames: usize,
    pub seed: u64,
    /// Leave frames `[0, T_s)` out of the report.
    pub exclude_warmup: bool,
    /// Keep a log of every switch decision.
    pub record_decisions: bool,
}

impl SessionConfig {
    pub fn new(rtt_frames: usize, gop: usize, duration_frames: usize, seed: u64) -> Result<Self> {
        if duration_frames == 0 {
            return Err(Error::InvalidParameter("duration must be at least one frame".into()));
        }
        if gop == 0 {
            return Err(Error::InvalidParameter("GOP length must be at least 1".into()));
        }
        Ok(Self { rtt_frames, gop, duration_frames, seed, exclude_warmup: false, record_decisions: false })
    }
}

/// Sequence of 0-based head angles, one per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadTrace {
    angles: Vec<usize>,
}

impl HeadTrace {
    pub fn new(angles: Vec<usize>, num_angles: usize) -> Result<Self> {
        if let Some((i, a)) = angles.iter().enumerate().find(|(_, &a)| a >= num_angles) {
            return Err(Error::InvalidParameter(format!("trace frame {i}: angle {a} out of range for K = {num_angles}")));
        }
        Ok(Self { angles })
    }

    pub fn angles(&self) -> &[usize] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Largest circular step between consecutive frames.
    pub fn max_step(&self, num_angles: usize) -> usize {
        self.angles.windows(2).map(|w| circular_distance(w[0], w[1], num_angles)).max().unwrap_or(0)
    }

    /// One 1-based angle per line; `#` lines are comments.
    pub fn from_csv_str(text: &str, num_angles: usize) -> Result<Self> {
        let mut angles = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let k: usize = line
                .parse()
                .map_err(|_| Error::parse("head trace", format!("line {}: cannot parse {line:?}", i + 1)))?;
            if k == 0 || k > num_angles {
                return Err(Error::parse(
                    "head trace",
                    format!("line {}: angle {k} outside 1..={num_angles}", i + 1),
                ));
            }
            angles.push(k - 1);
        }
        Ok(Self { angles })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.angles.len() * 3);
        for a in &self.angles {
            let _ = writeln!(s, "{}", a + 1);
        }
        s
    }
}

#[inline]
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn draw<I: IntoIterator<Item = (usize, f64)>>(u: f64, dist: I) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (idx, p) in dist {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = idx;
        if u < acc {
            return idx;
        }
    }
    last
}

/// Head trace from the Markov model: `theta[0]` from the steady state,
/// then one transition per frame.
pub fn sample_trace(model: &TransitionModel, steady: &[f64], length: usize, seed: u64) -> Result<HeadTrace> {
    if length == 0 {
        return Err(Error::InvalidParameter("trace length must be at least 1".into()));
    }
    if steady.len() != model.num_angles() {
        return Err(Error::InvalidParameter("steady state length does not match K".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut angles = Vec::with_capacity(length);
    let mut theta = draw(uniform(&mut rng), steady.iter().copied().enumerate());
    angles.push(theta);
    for _ in 1..length {
        theta = draw(uniform(&mut rng), model.row_support(theta).iter().copied());
        angles.push(theta);
    }
    Ok(HeadTrace { angles })
}

/// A GOP-boundary decision: at `frame` the server switched to `stream` using
/// the report sent at `feedback_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchDecision {
    pub frame: usize,
    pub feedback_frame: usize,
    pub stream: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    /// Index of the first reported frame (non-zero when warm-up is excluded).
    pub first_frame: usize,
    pub per_frame_distortion: Vec<f64>,
    pub per_frame_stream: Vec<usize>,
    pub mean_distortion: f64,
    pub mean_psnr: f64,
    pub switch_count: usize,
    pub transmitted_rate_mean: f64,
    pub stream_occupancy: Vec<f64>,
    pub decisions: Vec<SwitchDecision>,
}

/// Plays `trace` against the streams and mapping of `solution`.
pub fn simulate_session(
    solution: &Solution,
    trace: &HeadTrace,
    space: ViewSpace,
    config: &SessionConfig,
    rate_model: &RateModel,
) -> Result<SessionReport> {
    let n_frames = config.duration_frames;
    if trace.len() < n_frames {
        return Err(Error::InvalidParameter(format!(
            "trace has {} frames, session needs {n_frames}",
            trace.len()
        )));
    }
    let k = space.num_angles();
    if solution.mapping.len() != k {
        return Err(Error::InvalidParameter(format!(
            "solution covers {} angles, view space has {k}",
            solution.mapping.len()
        )));
    }
    if let Some(&a) = trace.angles().iter().find(|&&a| a >= k) {
        return Err(Error::InvalidParameter(format!("trace angle {a} out of range for K = {k}")));
    }
    let fov = space.fov_size() as f64;
    let num_streams = solution.num_streams();
    // Mean over the FoV for every (stream, centre) pair.
    let fov_mean: Vec<Vec<f64>> = solution
        .streams
        .iter()
        .map(|d| (0..k).map(|c| space.fov_window(c).map(|l| d[l]).sum::<f64>() / fov).collect())
        .collect();
    let rates: Vec<f64> = solution.streams.iter().map(|d| rate_model.rate_sum(d)).collect();

    let theta = trace.angles();
    let first_frame = if config.exclude_warmup { config.rtt_frames.min(n_frames - 1) } else { 0 };
    let mut current = solution.mapping.stream_for(theta[0]);
    let mut per_frame = Vec::with_capacity(n_frames - first_frame);
    let mut per_stream = Vec::with_capacity(n_frames - first_frame);
    let mut decisions = Vec::new();
    let mut switches = 0;
    let mut counts = vec![0usize; num_streams];
    let mut rate_total = 0.0;

    for n in 0..n_frames {
        if n % config.gop == 0 && n >= config.rtt_frames {
            let feedback_frame = n - config.rtt_frames;
            let next = solution.mapping.stream_for(theta[feedback_frame]);
            if next != current && n >= first_frame {
                switches += 1;
            }
            current = next;
            if config.record_decisions {
                decisions.push(SwitchDecision { frame: n, feedback_frame, stream: next });
            }
        }
        if n < first_frame {
            continue;
        }
        per_frame.push(fov_mean[current][theta[n]]);
        per_stream.push(current);
        counts[current] += 1;
        rate_total += rates[current];
    }

    let measured = per_frame.len() as f64;
    let mean_distortion = per_frame.iter().sum::<f64>() / measured;
    Ok(SessionReport {
        first_frame,
        mean_psnr: psnr(mean_distortion),
        mean_distortion,
        per_frame_distortion: per_frame,
        per_frame_stream: per_stream,
        switch_count: switches,
        transmitted_rate_mean: rate_total / measured,
        stream_occupancy: counts.iter().map(|&c| c as f64 / measured).collect(),
        decisions,
    })
}

/// Single stream with uniform quality over all angles, spending exactly the
/// transmission budget.
pub fn static_baseline(problem: &OptimizationProblem) -> Solution {
    let k = problem.num_angles();
    let rm = problem.rate_model();
    let d = rm.uniform_distortion_for_budget(problem.transmission_budget(), k);
    Solution::evaluate(
        problem,
        StreamSet::from_raw(vec![vec![d; k]]),
        Mapping::constant(k),
        Multipliers { lambda: 0.0, mu: 0.0 },
    )
}
