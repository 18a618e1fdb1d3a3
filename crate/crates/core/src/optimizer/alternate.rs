use super::{lagrangian, Mapping, Multipliers, OptimizationProblem, Solution, SolverOptions, StreamSet};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rate_distortion::RateModel;
use crate::view_model::circular_distance;

/// Minimiser of `weight * d + gamma * g(d)` over `[0, d_max]`.
///
/// The stationary point of the smooth part is `-sigma^2 log(sigma^2 weight / gamma)`,
/// clamped into range. Because `g` drops to zero at `d_max`, the endpoint is
/// compared against the clamped stationary point and wins when strictly cheaper.
pub fn optimal_entry(weight: f64, gamma: f64, rate: &RateModel) -> f64 {
    let d_max = rate.d_max();
    if weight <= 0.0 {
        return d_max;
    }
    let s2 = rate.sigma_sq();
    let ratio = s2 * weight / gamma;
    let candidate = if ratio >= 1.0 { 0.0 } else { (-s2 * ratio.ln()).min(d_max) };
    if candidate >= d_max {
        return d_max;
    }
    let interior = weight * candidate + gamma * rate.g(candidate);
    if weight * d_max < interior {
        d_max
    } else {
        candidate
    }
}

/// Per-stream `A_i` rows (`q_k`-weighted sums of aggregated weight rows over `k` with `f(k) = i`) and
/// the steady-state mass `sum_{k: f(k)=i} q_k` routed to each stream.
pub(crate) fn stream_weights(problem: &OptimizationProblem, num_streams: usize, mapping: &Mapping) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = problem.num_angles();
    let mut a = vec![vec![0.0; k]; num_streams];
    let mut mass = vec![0.0; num_streams];
    let agg = problem.propagation().aggregate();
    for (angle, &qk) in problem.q().iter().enumerate() {
        let i = mapping.stream_for(angle);
        mass[i] += qk;
        for (acc, &w) in a[i].iter_mut().zip(agg.row(angle)) {
            *acc += qk * w;
        }
    }
    (a, mass)
}

/// Closed-form distortion update with the mapping held fixed. Streams that
/// no angle maps to keep their previous profile.
pub fn update_distortions(
    problem: &OptimizationProblem,
    streams: &StreamSet,
    mapping: &Mapping,
    multipliers: &Multipliers,
) -> Result<StreamSet> {
    let (a, mass) = stream_weights(problem, streams.len(), mapping);
    let rm = problem.rate_model();
    let mut out = Vec::with_capacity(streams.len());
    for (i, prev) in streams.iter().enumerate() {
        if mass[i] == 0.0 {
            out.push(prev.to_vec());
            continue;
        }
        let gamma = multipliers.lambda + multipliers.mu * mass[i];
        if !(gamma > 0.0) {
            return Err(Error::ZeroGamma { stream: i });
        }
        out.push(a[i].iter().map(|&w| optimal_entry(w, gamma, rm)).collect());
    }
    Ok(StreamSet::from_raw(out))
}

/// Picks for each angle the stream with the lowest expected distortion plus
/// `mu`-weighted rate. Ties go to the lower stream index.
pub fn update_mapping(problem: &OptimizationProblem, streams: &StreamSet, multipliers: &Multipliers) -> Mapping {
    let rm = problem.rate_model();
    let rates: Vec<f64> = streams.iter().map(|d| rm.rate_sum(d)).collect();
    let agg = problem.propagation().aggregate();
    let f = (0..problem.num_angles())
        .map(|k| {
            let row = agg.row(k);
            let mut best = 0;
            let mut best_cost = f64::INFINITY;
            for (i, d) in streams.iter().enumerate() {
                let cost = dot(row, d) + multipliers.mu * rates[i];
                if cost < best_cost {
                    best = i;
                    best_cost = cost;
                }
            }
            best
        })
        .collect();
    Mapping { f }
}

/// Lagrangian share of one stream: `sum_l a_l d_l + gamma g(d_l)`.
fn stream_cost(a: &[f64], gamma: f64, d: &[f64], rm: &RateModel) -> f64 {
    a.iter().zip(d).map(|(&w, &x)| w * x + gamma * rm.g(x)).sum()
}

/// `min_d weight * d + gamma * g(d)`, matching [`optimal_entry`]. At an
/// interior stationary point `g(d*) = sigma^2 weight / gamma`, so no
/// exponential is needed.
fn entry_cost(weight: f64, gamma: f64, rate: &RateModel) -> f64 {
    if weight <= 0.0 {
        return 0.0;
    }
    let s2 = rate.sigma_sq();
    let ratio = s2 * weight / gamma;
    let endpoint = weight * rate.d_max();
    if ratio >= 1.0 {
        return endpoint.min(gamma);
    }
    let d = -s2 * ratio.ln();
    if d >= rate.d_max() {
        return endpoint;
    }
    endpoint.min(weight * (d + s2))
}

/// Optimal cost of a stream whose weight row is `a + shift`.
fn refit_cost(a: &[f64], shift: &[f64], sign: f64, gamma: f64, rm: &RateModel) -> f64 {
    a.iter().zip(shift).map(|(&x, &s)| entry_cost((x + sign * s).max(0.0), gamma, rm)).sum()
}

/// Best single-angle reassignment, with the two streams involved re-fitted
/// in closed form. Returns the new design when it lowers the Lagrangian by
/// more than `min_gain`.
pub(crate) fn reassign_step(
    problem: &OptimizationProblem,
    streams: &StreamSet,
    mapping: &Mapping,
    multipliers: &Multipliers,
    min_gain: f64,
) -> Option<(StreamSet, Mapping)> {
    let n = streams.len();
    if n < 2 {
        return None;
    }
    let rm = problem.rate_model();
    let (a, mass) = stream_weights(problem, n, mapping);
    let gamma = |m: f64| multipliers.lambda + multipliers.mu * m;
    let cost: Vec<f64> = (0..n).map(|i| stream_cost(&a[i], gamma(mass[i]), streams.stream(i), rm)).collect();
    let agg = problem.propagation().aggregate();
    let q = problem.q();

    let mut shift = vec![0.0; problem.num_angles()];
    let mut best: Option<(f64, usize, usize)> = None;
    for k in 0..problem.num_angles() {
        let from = mapping.stream_for(k);
        let emptied = (0..problem.num_angles()).all(|l| l == k || mapping.stream_for(l) != from);
        for (s, &w) in shift.iter_mut().zip(agg.row(k)) {
            *s = q[k] * w;
        }
        let c_from = if emptied { 0.0 } else { refit_cost(&a[from], &shift, -1.0, gamma(mass[from] - q[k]), rm) };
        for to in (0..n).filter(|&j| j != from) {
            let c_to = refit_cost(&a[to], &shift, 1.0, gamma(mass[to] + q[k]), rm);
            let delta = c_from + c_to - cost[from] - cost[to];
            if delta < -min_gain && best.map_or(true, |b| delta < b.0) {
                best = Some((delta, k, to));
            }
        }
    }

    let (_, k, to) = best?;
    let from = mapping.stream_for(k);
    let mut f = mapping.f.clone();
    f[k] = to;
    let mapping = Mapping { f };
    let (a, mass) = stream_weights(problem, n, &mapping);
    let out = streams
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if i == from || i == to {
                a[i].iter().map(|&w| optimal_entry(w, gamma(mass[i]), rm)).collect()
            } else {
                d.to_vec()
            }
        })
        .collect();
    Some((StreamSet::from_raw(out), mapping))
}

/// Evenly spaced stream centres, each stream coding the angles reachable
/// within one RTT plus the FoV half-width at a common distortion that spends
/// the transmission budget.
pub fn initialize(problem: &OptimizationProblem, num_streams: usize) -> Result<(StreamSet, Mapping)> {
    initialize_rotated(problem, num_streams, 0)
}

/// [`initialize`] with every stream centre moved `offset` angles forward.
pub fn initialize_rotated(problem: &OptimizationProblem, num_streams: usize, offset: usize) -> Result<(StreamSet, Mapping)> {
    let k = problem.num_angles();
    if num_streams == 0 || num_streams > k {
        return Err(Error::InvalidParameter(format!("number of streams must be in 1..={k}, got {num_streams}")));
    }
    let rm = problem.rate_model();
    let radius = problem.rtt_frames() * problem.model().v_max() + problem.space().half_width();
    let centers: Vec<usize> =
        (0..num_streams).map(|i| (((k * i) as f64 / num_streams as f64).round() as usize + offset) % k).collect();

    let streams = centers
        .iter()
        .map(|&c| {
            let low: Vec<bool> = (0..k).map(|l| circular_distance(c, l, k) <= radius).collect();
            let n_low = low.iter().filter(|&&b| b).count();
            let d1 = rm.uniform_distortion_for_budget(problem.transmission_budget(), n_low);
            low.iter().map(|&b| if b { d1 } else { rm.d_max() }).collect()
        })
        .collect();

    let f = (0..k)
        .map(|l| {
            let mut best = 0;
            for (i, &c) in centers.iter().enumerate() {
                if circular_distance(c, l, k) < circular_distance(centers[best], l, k) {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok((StreamSet::from_raw(streams), Mapping { f }))
}

/// Drops streams that no angle maps to and renumbers the mapping.
pub(crate) fn prune(streams: StreamSet, mapping: Mapping) -> (StreamSet, Mapping) {
    let n = streams.len();
    let mut used = vec![false; n];
    for &s in &mapping.f {
        used[s] = true;
    }
    if used.iter().all(|&u| u) {
        return (streams, mapping);
    }
    let mut remap = vec![usize::MAX; n];
    let mut kept = Vec::new();
    for (i, d) in streams.into_inner().into_iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(d);
        }
    }
    let f = mapping.f.iter().map(|&s| remap[s]).collect();
    (StreamSet::from_raw(kept), Mapping { f })
}

/// Alternation state carried between [`alternate`] and [`solve`].
struct Run {
    streams: StreamSet,
    mapping: Mapping,
    current: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Run {
    fn new(problem: &OptimizationProblem, streams: StreamSet, mapping: Mapping, multipliers: &Multipliers) -> Self {
        let current = lagrangian(problem, &streams, &mapping, multipliers);
        Self { streams, mapping, current, trace: vec![current], iterations: 0, converged: false }
    }

    fn alternate(&mut self, problem: &OptimizationProblem, multipliers: &Multipliers, opts: &SolverOptions) -> Result<()> {
        self.converged = false;
        while self.iterations < opts.max_iters {
            self.iterations += 1;
            let start = self.current;

            let candidate = update_distortions(problem, &self.streams, &self.mapping, multipliers)?;
            let value = lagrangian(problem, &candidate, &self.mapping, multipliers);
            if value <= self.current {
                self.streams = candidate;
                self.current = value;
            }
            self.trace.push(self.current);

            let candidate = update_mapping(problem, &self.streams, multipliers);
            let value = lagrangian(problem, &self.streams, &candidate, multipliers);
            if value <= self.current {
                self.mapping = candidate;
                self.current = value;
            }
            self.trace.push(self.current);

            if start - self.current < opts.tol * start.abs().max(f64::MIN_POSITIVE) {
                self.converged = true;
                break;
            }
        }
        Ok(())
    }

    /// Applies the best improving reassignment, if any.
    fn reassign(&mut self, problem: &OptimizationProblem, multipliers: &Multipliers, opts: &SolverOptions) -> bool {
        let min_gain = opts.tol * self.current.abs().max(f64::MIN_POSITIVE);
        let Some((streams, mapping)) = reassign_step(problem, &self.streams, &self.mapping, multipliers, min_gain)
        else {
            return false;
        };
        let value = lagrangian(problem, &streams, &mapping, multipliers);
        if value >= self.current {
            return false;
        }
        self.streams = streams;
        self.mapping = mapping;
        self.current = value;
        self.trace.push(value);
        true
    }

    fn finish(self, problem: &OptimizationProblem, multipliers: Multipliers) -> Solution {
        let (streams, mapping) = prune(self.streams, self.mapping);
        let mut solution = Solution::evaluate(problem, streams, mapping, multipliers);
        let mut trace = self.trace;
        let pruned = solution.final_lagrangian();
        if pruned < self.current {
            trace.push(pruned);
        }
        solution.lagrangian_trace = trace;
        solution.iterations = self.iterations;
        solution.converged = self.converged;
        solution
    }
}

/// Alternates distortion and mapping updates until the relative Lagrangian
/// improvement over a full iteration drops below `opts.tol`.
///
/// A half-step that would raise the Lagrangian (floating-point noise only)
/// is rejected, so the recorded trace never increases.
pub fn alternate(
    problem: &OptimizationProblem,
    init_streams: StreamSet,
    init_mapping: Mapping,
    multipliers: Multipliers,
    opts: &SolverOptions,
) -> Result<Solution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let mut run = Run::new(problem, init_streams, init_mapping, &multipliers);
    run.alternate(problem, &multipliers, opts)?;
    Ok(run.finish(problem, multipliers))
}

/// Fixed-multiplier solver. From each of `opts.restarts` evenly spaced
/// rotations of the initial stream centres it alternates to a stall, then
/// moves the single angle whose reassignment (with both streams involved
/// re-fitted) lowers the Lagrangian most and alternates again, until no move
/// gains more than the tolerance. Keeps the lowest final Lagrangian; ties go
/// to the earliest start.
pub fn solve(
    problem: &OptimizationProblem,
    num_streams: usize,
    multipliers: Multipliers,
    opts: &SolverOptions,
) -> Result<Solution> {
    let k = problem.num_angles();
    if num_streams == 0 || num_streams > k {
        return Err(Error::InvalidParameter(format!("number of streams must be in 1..={k}, got {num_streams}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let gap = k.div_ceil(num_streams);
    let starts = opts.restarts.clamp(1, gap);
    let mut offsets: Vec<usize> = (0..starts).map(|j| j * gap / starts).collect();
    offsets.dedup();
    let mut best: Option<Solution> = None;
    for offset in offsets {
        let (streams, mapping) = initialize_rotated(problem, num_streams, offset)?;
        let mut run = Run::new(problem, streams, mapping, &multipliers);
        run.alternate(problem, &multipliers, opts)?;
        while run.converged && run.reassign(problem, &multipliers, opts) {
            run.alternate(problem, &multipliers, opts)?;
        }
        let s = run.finish(problem, multipliers);
        if best.as_ref().map_or(true, |b| s.final_lagrangian() < b.final_lagrangian()) {
            best = Some(s);
        }
    }
    Ok(best.expect("at least one start"))
}
