//! Stream design by Lagrangian relaxation.
//!
//! Given the head-rotation model, the RTT in frames and the GOP length, the
//! solver picks a set of per-angle distortion profiles (streams) and the
//! table mapping each feedback angle to the stream that is sent next. The
//! storage budget `B/Q` bounds the summed rate of all streams; the
//! transmission budget `C` bounds the steady-state expected rate of the
//! stream being sent.

mod alternate;
mod objective;
mod tuning;

pub use alternate::{alternate, initialize, initialize_rotated, optimal_entry, solve, update_distortions, update_mapping};
pub use objective::{
    expected_distortion, expected_distortion_intra, lagrangian, storage_rate, transmission_rate,
};
pub use tuning::{quantize_solution, sweep_stream_count, tune_multipliers, QuantizedEvaluation, SweepResult, SweepRow};

use crate::error::{Error, Result};
use crate::rate_distortion::RateModel;
use crate::simulator::psnr;
use crate::view_model::{
    fov_matrix, steady_state, FovOperator, PropagationCache, PropagationOrder, SteadyState, TransitionModel, ViewSpace,
};

/// Budgets and system parameters. Immutable once built.
#[derive(Debug, Clone)]
pub struct OptimizationProblem {
    space: ViewSpace,
    model: TransitionModel,
    fov: FovOperator,
    steady: SteadyState,
    rate_model: RateModel,
    rtt_frames: usize,
    gop: usize,
    transmission_budget: f64,
    storage_bits: f64,
    duration_secs: f64,
    order: PropagationOrder,
    cache: PropagationCache,
}

impl OptimizationProblem {
    /// `transmission_budget` is `C`; `storage_bits / duration_secs` is `B/Q`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        space: ViewSpace,
        model: TransitionModel,
        rate_model: RateModel,
        rtt_frames: usize,
        gop: usize,
        transmission_budget: f64,
        storage_bits: f64,
        duration_secs: f64,
    ) -> Result<Self> {
        if model.num_angles() != space.num_angles() {
            return Err(Error::InvalidParameter(format!(
                "transition model has K = {}, view space has K = {}",
                model.num_angles(),
                space.num_angles()
            )));
        }
        if gop == 0 {
            return Err(Error::InvalidParameter("GOP length H must be at least 1".into()));
        }
        if !(transmission_budget.is_finite() && transmission_budget > 0.0) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {transmission_budget}")));
        }
        if !(storage_bits.is_finite() && storage_bits > 0.0 && duration_secs.is_finite() && duration_secs > 0.0)
        {
            return Err(Error::InvalidParameter("B and Q must both be positive".into()));
        }
        let fov = fov_matrix(space);
        let steady = steady_state(&model)?;
        let cache = PropagationCache::new(&model, &fov, rtt_frames, gop);
        Ok(Self {
            space,
            model,
            fov,
            steady,
            rate_model,
            rtt_frames,
            gop,
            transmission_budget,
            storage_bits,
            duration_secs,
            order: PropagationOrder::default(),
            cache,
        })
    }

    /// Same system with different budgets; reuses the cached propagation.
    pub fn with_budgets(&self, transmission_budget: f64, storage_bits: f64, duration_secs: f64) -> Result<Self> {
        if !(transmission_budget > 0.0 && storage_bits > 0.0 && duration_secs > 0.0) {
            return Err(Error::InvalidParameter("budgets must be positive".into()));
        }
        Ok(Self { transmission_budget, storage_bits, duration_secs, ..self.clone() })
    }

    /// Same system with the FoV window applied in `order`.
    pub fn with_order(&self, order: PropagationOrder) -> Self {
        let cache = PropagationCache::with_order(&self.model, &self.fov, self.rtt_frames, self.gop, order);
        Self { order, cache, ..self.clone() }
    }

    pub fn order(&self) -> PropagationOrder {
        self.order
    }

    pub fn space(&self) -> ViewSpace {
        self.space
    }

    pub fn num_angles(&self) -> usize {
        self.space.num_angles()
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    pub fn fov(&self) -> &FovOperator {
        &self.fov
    }

    pub fn steady(&self) -> &SteadyState {
        &self.steady
    }

    pub fn q(&self) -> &[f64] {
        self.steady.probabilities()
    }

    pub fn rate_model(&self) -> &RateModel {
        &self.rate_model
    }

    pub fn rtt_frames(&self) -> usize {
        self.rtt_frames
    }

    pub fn gop(&self) -> usize {
        self.gop
    }

    pub fn transmission_budget(&self) -> f64 {
        self.transmission_budget
    }

    /// `B/Q`.
    pub fn storage_budget(&self) -> f64 {
        self.storage_bits / self.duration_secs
    }

    pub fn propagation(&self) -> &PropagationCache {
        &self.cache
    }

    /// Per-frame FoV-averaged MSE corresponding to an objective value.
    pub fn per_frame_mse(&self, expected_distortion: f64) -> f64 {
        expected_distortion / (self.space.fov_size() * self.gop) as f64
    }
}

/// Per-angle distortion profiles, one per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSet {
    distortions: Vec<Vec<f64>>,
}

impl StreamSet {
    pub fn new(distortions: Vec<Vec<f64>>, num_angles: usize, d_max: f64) -> Result<Self> {
        if distortions.is_empty() {
            return Err(Error::InvalidParameter("at least one stream is required".into()));
        }
        for (i, d) in distortions.iter().enumerate() {
            if d.len() != num_angles {
                return Err(Error::InvalidParameter(format!(
                    "stream {i} has {} entries, expected {num_angles}",
                    d.len()
                )));
            }
            if let Some(x) = d.iter().find(|&&x| !(0.0..=d_max).contains(&x)) {
                return Err(Error::InvalidParameter(format!("stream {i} entry {x} outside [0, {d_max}]")));
            }
        }
        Ok(Self { distortions })
    }

    pub(crate) fn from_raw(distortions: Vec<Vec<f64>>) -> Self {
        Self { distortions }
    }

    pub fn len(&self) -> usize {
        self.distortions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distortions.is_empty()
    }

    pub fn stream(&self, i: usize) -> &[f64] {
        &self.distortions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.distortions.iter().map(Vec::as_slice)
    }

    pub fn into_inner(self) -> Vec<Vec<f64>> {
        self.distortions
    }
}

/// `f(k)`: stream served when the feedback angle is `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    f: Vec<usize>,
}

impl Mapping {
    pub fn new(f: Vec<usize>, num_streams: usize) -> Result<Self> {
        if let Some(&s) = f.iter().find(|&&s| s >= num_streams) {
            return Err(Error::InvalidParameter(format!(
                "mapping references stream {s} but only {num_streams} exist"
            )));
        }
        Ok(Self { f })
    }

    pub fn constant(num_angles: usize) -> Self {
        Self { f: vec![0; num_angles] }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.f
    }

    #[inline]
    pub fn stream_for(&self, angle: usize) -> usize {
        self.f[angle]
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }
}

/// Lagrange multipliers for storage (`lambda`) and transmission (`mu`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Multipliers {
    pub lambda: f64,
    pub mu: f64,
}

impl Multipliers {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda >= 0.0 && mu >= 0.0) {
            return Err(Error::InvalidParameter(format!("multipliers must be >= 0, got ({lambda}, {mu})")));
        }
        Ok(Self { lambda, mu })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub streams: StreamSet,
    pub mapping: Mapping,
    pub multipliers: Multipliers,
    pub expected_distortion: f64,
    pub storage_rate: f64,
    pub transmission_rate: f64,
    /// Lagrangian after initialisation and after every half-step.
    pub lagrangian_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Solution {
    /// Assembles a solution and evaluates its objective and rates.
    pub fn evaluate(
        problem: &OptimizationProblem,
        streams: StreamSet,
        mapping: Mapping,
        multipliers: Multipliers,
    ) -> Self {
        let expected = expected_distortion(problem, &streams, &mapping);
        let storage = storage_rate(problem, &streams);
        let transmission = transmission_rate(problem, &streams, &mapping);
        let l = expected + multipliers.lambda * storage + multipliers.mu * transmission;
        Self {
            streams,
            mapping,
            multipliers,
            expected_distortion: expected,
            storage_rate: storage,
            transmission_rate: transmission,
            lagrangian_trace: vec![l],
            iterations: 0,
            converged: true,
        }
    }

    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn final_lagrangian(&self) -> f64 {
        *self.lagrangian_trace.last().expect("trace is never empty")
    }

    /// Nothing encoded: every angle of every stream at `d_max`.
    pub fn is_trivial(&self) -> bool {
        self.storage_rate == 0.0
    }

    pub fn is_feasible(&self, problem: &OptimizationProblem, tolerance_fraction: f64) -> bool {
        self.storage_rate <= problem.storage_budget() * (1.0 + tolerance_fraction)
            && self.transmission_rate <= problem.transmission_budget() * (1.0 + tolerance_fraction)
    }

    pub fn expected_mse(&self, problem: &OptimizationProblem) -> f64 {
        problem.per_frame_mse(self.expected_distortion)
    }

    pub fn expected_psnr(&self, problem: &OptimizationProblem) -> f64 {
        psnr(self.expected_mse(problem))
    }

    /// Largest single-stream rate among streams that are actually served.
    pub fn peak_stream_rate(&self, problem: &OptimizationProblem) -> f64 {
        let rm = problem.rate_model();
        self.streams.iter().map(|d| rm.rate_sum(d)).fold(0.0, f64::max)
    }
}

/// Tolerances and search brackets for the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative Lagrangian improvement below which alternation stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Allowed relative excess over a budget, and the band below an active
    /// budget that counts as meeting it.
    pub budget_tolerance: f64,
    /// Relative distance to an active budget at which bisection stops early.
    pub bisection_precision: f64,
    pub multiplier_min: f64,
    pub multiplier_max: f64,
    pub bisection_iters: usize,
    /// Rotated starts tried by [`solve`]; at least 1.
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 500,
            budget_tolerance: 0.01,
            bisection_precision: 1e-4,
            multiplier_min: 1e-6,
            multiplier_max: 1e6,
            bisection_iters: 40,
            restarts: 4,
        }
    }
}
