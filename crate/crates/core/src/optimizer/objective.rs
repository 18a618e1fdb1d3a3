use super::{Mapping, Multipliers, OptimizationProblem, StreamSet};
use crate::linalg::{dot, Matrix};

fn weighted_distortion(problem: &OptimizationProblem, weights: &Matrix, streams: &StreamSet, mapping: &Mapping) -> f64 {
    let mut total = 0.0;
    for (k, &qk) in problem.q().iter().enumerate() {
        total += qk * dot(weights.row(k), streams.stream(mapping.stream_for(k)));
    }
    total
}

/// Intra-coded expected distortion: `sum_k q_k 1_k P^Ts C_a d_f(k)`
/// (`C_a P^Ts` with the FoV-first order). Ignores the GOP length.
pub fn expected_distortion_intra(problem: &OptimizationProblem, streams: &StreamSet, mapping: &Mapping) -> f64 {
    weighted_distortion(problem, problem.propagation().step(0), streams, mapping)
}

/// Expected distortion over a GOP: `sum_k q_k sum_h 1_k P^(Ts+h) C_a d_f(k)`.
pub fn expected_distortion(problem: &OptimizationProblem, streams: &StreamSet, mapping: &Mapping) -> f64 {
    weighted_distortion(problem, problem.propagation().aggregate(), streams, mapping)
}

/// `sum_i r(d_i)`.
pub fn storage_rate(problem: &OptimizationProblem, streams: &StreamSet) -> f64 {
    let rm = problem.rate_model();
    streams.iter().map(|d| rm.rate_sum(d)).sum()
}

/// `sum_k q_k r(d_f(k))`.
pub fn transmission_rate(problem: &OptimizationProblem, streams: &StreamSet, mapping: &Mapping) -> f64 {
    let rm = problem.rate_model();
    let rates: Vec<f64> = streams.iter().map(|d| rm.rate_sum(d)).collect();
    problem.q().iter().enumerate().map(|(k, qk)| qk * rates[mapping.stream_for(k)]).sum()
}

/// Relaxed objective: distortion plus multiplier-weighted storage and
/// transmission rates.
pub fn lagrangian(
    problem: &OptimizationProblem,
    streams: &StreamSet,
    mapping: &Mapping,
    multipliers: &Multipliers,
) -> f64 {
    expected_distortion(problem, streams, mapping)
        + multipliers.lambda * storage_rate(problem, streams)
        + multipliers.mu * transmission_rate(problem, streams, mapping)
}
