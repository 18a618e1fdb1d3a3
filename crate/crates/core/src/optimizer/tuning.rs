use rayon::prelude::*;

use super::alternate::stream_weights;
use super::{alternate, initialize, solve, Multipliers, OptimizationProblem, Solution, SolverOptions, StreamSet};
use super::{expected_distortion, storage_rate, transmission_rate};
use crate::error::{Error, Result};
use crate::rate_distortion::lloyd_max_two_level;

fn solve_at(problem: &OptimizationProblem, num_streams: usize, lambda: f64, mu: f64, opts: &SolverOptions) -> Result<Solution> {
    let (streams, mapping) = initialize(problem, num_streams)?;
    alternate(problem, streams, mapping, Multipliers { lambda, mu }, opts)
}

/// Keeps the lowest-distortion probe, preferring probes that meet the budget
/// exactly over probes that only meet it within the tolerance.
struct Best {
    strict: Option<Solution>,
    loose: Option<Solution>,
}

impl Best {
    fn new() -> Self {
        Self { strict: None, loose: None }
    }

    fn offer(&mut self, s: &Solution, strict: bool) {
        let slot = if strict { &mut self.strict } else { &mut self.loose };
        if slot.as_ref().map_or(true, |b| s.expected_distortion < b.expected_distortion) {
            *slot = Some(s.clone());
        }
    }

    fn take(self) -> Option<Solution> {
        self.strict.or(self.loose)
    }
}

/// Log-space bisection on one multiplier. `rate` reads the constrained rate
/// of a probe; rates fall as the multiplier grows.
fn bisect<P, R>(budget: f64, opts: &SolverOptions, mut probe: P, rate: R) -> Result<Solution>
where
    P: FnMut(f64) -> Result<Solution>,
    R: Fn(&Solution) -> f64,
{
    let slack = budget * (1.0 + opts.budget_tolerance);
    let first = probe(opts.multiplier_min)?;
    if rate(&first) <= slack {
        return Ok(first);
    }
    let mut best = Best::new();
    let mut lo = opts.multiplier_min.ln();
    let mut hi = opts.multiplier_max.ln();
    for _ in 0..opts.bisection_iters {
        let mid = 0.5 * (lo + hi);
        let s = probe(mid.exp())?;
        let r = rate(&s);
        if r <= slack {
            best.offer(&s, r <= budget);
        }
        if (r - budget).abs() <= opts.bisection_precision * budget && r <= budget {
            return Ok(s);
        }
        if r > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    match best.take() {
        Some(s) => Ok(s),
        None => probe(opts.multiplier_max),
    }
}

/// Searches `(lambda, mu)` by nested bisection (`mu` inner, `lambda` outer)
/// for the best solution with `num_streams` initial streams meeting both
/// budgets. Probes use a single start; the chosen multipliers are then
/// re-solved with [`solve`], and that result replaces the probe when it has
/// lower expected distortion, meets the budgets at least as tightly, and
/// still uses every budget whose multiplier is active.
pub fn tune_multipliers(problem: &OptimizationProblem, num_streams: usize, opts: &SolverOptions) -> Result<Solution> {
    let tx_budget = problem.transmission_budget();
    let st_budget = problem.storage_budget();
    let inner = |lambda: f64| {
        bisect(tx_budget, opts, |mu| solve_at(problem, num_streams, lambda, mu, opts), |s| s.transmission_rate)
    };
    let mut solution = bisect(st_budget, opts, inner, |s| s.storage_rate)?;
    if opts.restarts > 1 {
        let polished = solve(problem, num_streams, solution.multipliers, opts)?;
        let admissible = if solution.is_feasible(problem, 0.0) {
            polished.is_feasible(problem, 0.0)
        } else {
            polished.is_feasible(problem, opts.budget_tolerance)
        };
        let floor = 1.0 - opts.budget_tolerance;
        let tight = (polished.multipliers.lambda <= opts.multiplier_min || polished.storage_rate >= st_budget * floor)
            && (polished.multipliers.mu <= opts.multiplier_min || polished.transmission_rate >= tx_budget * floor);
        if admissible && tight && polished.expected_distortion < solution.expected_distortion {
            solution = polished;
        }
    }
    if !solution.is_feasible(problem, opts.budget_tolerance) {
        return Err(Error::Infeasible(format!(
            "no multipliers meet the budgets with {num_streams} streams (storage {} / {}, transmission {} / {})",
            solution.storage_rate, st_budget, solution.transmission_rate, tx_budget
        )));
    }
    Ok(solution)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub requested_streams: usize,
    pub num_streams: usize,
    pub feasible: bool,
    pub lambda: f64,
    pub mu: f64,
    pub expected_distortion: f64,
    pub expected_psnr: f64,
    pub storage_rate: f64,
    pub transmission_rate: f64,
    pub iterations: usize,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best: Solution,
    pub table: Vec<SweepRow>,
}

/// Runs [`tune_multipliers`] for every stream count up to `max_streams` and
/// keeps the feasible solution with the lowest expected distortion. Ties go
/// to the smaller count.
pub fn sweep_stream_count(problem: &OptimizationProblem, max_streams: usize, opts: &SolverOptions) -> Result<SweepResult> {
    if max_streams == 0 {
        return Err(Error::InvalidParameter("max_streams must be at least 1".into()));
    }
    let counts: Vec<usize> = (1..=max_streams.min(problem.num_angles())).collect();
    let results: Vec<Result<Solution>> = counts.par_iter().map(|&n| tune_multipliers(problem, n, opts)).collect();

    let mut table = Vec::with_capacity(counts.len());
    let mut best: Option<Solution> = None;
    for (&n, result) in counts.iter().zip(results) {
        match result {
            Ok(s) => {
                table.push(SweepRow {
                    requested_streams: n,
                    num_streams: s.num_streams(),
                    feasible: true,
                    lambda: s.multipliers.lambda,
                    mu: s.multipliers.mu,
                    expected_distortion: s.expected_distortion,
                    expected_psnr: s.expected_psnr(problem),
                    storage_rate: s.storage_rate,
                    transmission_rate: s.transmission_rate,
                    iterations: s.iterations,
                    note: if s.is_trivial() { "nothing encoded".into() } else { String::new() },
                });
                if best.as_ref().map_or(true, |b| s.expected_distortion < b.expected_distortion) {
                    best = Some(s);
                }
            }
            Err(Error::Infeasible(msg)) => table.push(SweepRow {
                requested_streams: n,
                num_streams: 0,
                feasible: false,
                lambda: f64::NAN,
                mu: f64::NAN,
                expected_distortion: f64::NAN,
                expected_psnr: f64::NAN,
                storage_rate: f64::NAN,
                transmission_rate: f64::NAN,
                iterations: 0,
                note: msg,
            }),
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or_else(|| Error::Infeasible("no stream count meets the budgets".into()))?;
    Ok(SweepResult { best, table })
}

/// A solution re-evaluated after two-level quantization of every stream.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedEvaluation {
    pub streams: StreamSet,
    pub expected_distortion: f64,
    pub storage_rate: f64,
    pub transmission_rate: f64,
}

/// Quantizes each stream to two levels (weighted by how much each angle is
/// seen through that stream) and re-evaluates the objective and rates.
pub fn quantize_solution(problem: &OptimizationProblem, solution: &Solution) -> Result<QuantizedEvaluation> {
    let (weights, _) = stream_weights(problem, solution.num_streams(), &solution.mapping);
    let d_max = problem.rate_model().d_max();
    let mut out = Vec::with_capacity(solution.num_streams());
    for (i, d) in solution.streams.iter().enumerate() {
        match lloyd_max_two_level(d, &weights[i], d_max) {
            Ok(q) => out.push(q.quantized(d_max)),
            Err(Error::AllUnencoded) => out.push(d.to_vec()),
            Err(e) => return Err(e),
        }
    }
    let streams = StreamSet::from_raw(out);
    Ok(QuantizedEvaluation {
        expected_distortion: expected_distortion(problem, &streams, &solution.mapping),
        storage_rate: storage_rate(problem, &streams),
        transmission_rate: transmission_rate(problem, &streams, &solution.mapping),
        streams,
    })
}
