mod common;

use std::path::Path;

use common::{random_banded, TestRng};
use viewstream::config::RunConfig;
use viewstream::linalg::Matrix;
use viewstream::optimizer::{
    expected_distortion, solve, storage_rate, sweep_stream_count, transmission_rate, tune_multipliers, Mapping,
    Multipliers, OptimizationProblem, SolverOptions, StreamSet,
};
use viewstream::view_model::{TransitionModel, ViewSpace};
use viewstream::{sample_trace, simulate_session, static_baseline, RateModel, SessionConfig};

fn problem(p: Matrix, v_max: usize, a: usize, rtt: usize, gop: usize) -> OptimizationProblem {
    let k = p.dim();
    OptimizationProblem::new(
        ViewSpace::new(k, a).unwrap(),
        TransitionModel::new(p, v_max).unwrap(),
        RateModel::new(3.0, 46.0).unwrap(),
        rtt,
        gop,
        0.3 * k as f64,
        0.6 * k as f64,
        1.0,
    )
    .unwrap()
}

#[test]
fn identity_chain_single_unit_stream() {
    let pr = problem(Matrix::identity(5), 1, 0, 1, 2);
    let streams = StreamSet::new(vec![vec![1.0; 5]], 5, 46.0).unwrap();
    let d = expected_distortion(&pr, &streams, &Mapping::constant(5));
    assert!((d - 2.0).abs() < 1e-12);
}

#[test]
fn constant_streams_cost_fov_times_gop() {
    let mut rng = TestRng::new(31);
    for _ in 0..20 {
        let k = rng.int(5, 24);
        let a = rng.int(0, (k - 2) / 2);
        let gop = rng.int(1, 5);
        let s = rng.int(1, 3);
        let c = rng.range(0.0, 46.0);
        let pr = problem(random_banded(k, 1, &mut rng), 1, a, rng.int(0, 4), gop);
        let streams = StreamSet::new(vec![vec![c; k]; s], k, 46.0).unwrap();
        let mapping = Mapping::new((0..k).map(|_| rng.int(0, s - 1)).collect(), s).unwrap();
        let d = expected_distortion(&pr, &streams, &mapping);
        let want = c * (1 + 2 * a) as f64 * gop as f64;
        assert!((d - want).abs() < 1e-9 * want.max(1.0), "{d} vs {want}");
    }
}

#[test]
fn rates_follow_the_rate_model() {
    let mut rng = TestRng::new(32);
    let pr = problem(random_banded(10, 2, &mut rng), 2, 2, 1, 1);
    let rm = pr.rate_model();
    let a: Vec<f64> = (0..10).map(|_| rng.range(0.0, 46.0)).collect();
    let b: Vec<f64> = (0..10).map(|_| rng.range(0.0, 46.0)).collect();
    let mapping = Mapping::new(vec![0, 0, 1, 1, 0, 1, 0, 1, 1, 0], 2).unwrap();
    let streams = StreamSet::new(vec![a.clone(), b.clone()], 10, 46.0).unwrap();
    let (ra, rb) = (rm.rate_sum(&a), rm.rate_sum(&b));
    assert!((storage_rate(&pr, &streams) - (ra + rb)).abs() < 1e-12);
    let qa: f64 = (0..10).filter(|&k| mapping.stream_for(k) == 0).map(|k| pr.q()[k]).sum();
    assert!((transmission_rate(&pr, &streams, &mapping) - (qa * ra + (1.0 - qa) * rb)).abs() < 1e-12);
}

#[test]
fn solve_lagrangian_is_monotone() {
    let mut rng = TestRng::new(33);
    let opts = SolverOptions::default();
    for _ in 0..10 {
        let pr = problem(random_banded(12, 1, &mut rng), 1, 2, 2, 1);
        let m = Multipliers::new(rng.log_range(1e-2, 10.0), rng.log_range(1e-2, 10.0)).unwrap();
        let sol = solve(&pr, 3, m, &opts).unwrap();
        for w in sol.lagrangian_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", w);
        }
    }
}

#[test]
fn tuned_solution_respects_budgets() {
    let mut rng = TestRng::new(34);
    let opts = SolverOptions::default();
    for _ in 0..10 {
        let pr = problem(random_banded(16, 1, &mut rng), 1, 3, 2, 1);
        let sol = tune_multipliers(&pr, 2, &opts).unwrap();
        assert!(sol.is_feasible(&pr, opts.budget_tolerance));
    }
}

#[test]
fn monte_carlo_matches_analytic_with_gop() {
    let mut rng = TestRng::new(35);
    let (k, a, rtt, gop) = (8, 1, 2, 2);
    let pr = problem(random_banded(k, 1, &mut rng), 1, a, rtt, gop);
    let sol = sweep_stream_count(&pr, 3, &SolverOptions::default()).unwrap().best;
    let frames = 1_000_000;
    let trace = sample_trace(pr.model(), pr.q(), frames, 5).unwrap();
    let mut cfg = SessionConfig::new(rtt, gop, frames, 5).unwrap();
    cfg.exclude_warmup = true;
    let sim = simulate_session(&sol, &trace, pr.space(), &cfg, pr.rate_model()).unwrap();
    let analytic = pr.per_frame_mse(sol.expected_distortion);
    let rel = (sim.mean_distortion - analytic).abs() / analytic;
    assert!(rel < 0.005, "simulated {} analytic {analytic}", sim.mean_distortion);
}

#[test]
fn storage_equal_to_transmission_reduces_to_static() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.toml");
    let cfg = RunConfig::load(&path, &["B=12.0".to_string()]).unwrap();
    let pr = cfg.problem().unwrap();
    let best = sweep_stream_count(&pr, 4, &cfg.solver_options()).unwrap().best;
    assert_eq!(best.num_streams(), 1);
    let gap = best.expected_psnr(&pr) - static_baseline(&pr).expected_psnr(&pr);
    assert!(gap.abs() < 0.01, "gap {gap}");
}
