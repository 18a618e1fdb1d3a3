mod common;

use common::{random_banded, TestRng};
use viewstream::linalg::Matrix;
use viewstream::optimizer::{sweep_stream_count, Mapping, Multipliers, OptimizationProblem, Solution, SolverOptions, StreamSet};
use viewstream::view_model::{steady_state, TransitionModel, ViewSpace};
use viewstream::{psnr, sample_trace, simulate_session, static_baseline, HeadTrace, RateModel, SessionConfig};

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
fn identity_chain_never_moves() {
    let m = TransitionModel::new(Matrix::identity(9), 1).unwrap();
    for seed in 0..10 {
        let t = sample_trace(&m, &[1.0 / 9.0; 9], 1000, seed).unwrap();
        assert!(t.angles().iter().all(|&x| x == t.angles()[0]));
    }
}

#[test]
fn trace_histogram_matches_steady_state() {
    let mut rng = TestRng::new(41);
    let m = TransitionModel::new(random_banded(12, 2, &mut rng), 2).unwrap();
    let q = steady_state(&m).unwrap();
    let n = 500_000;
    let t = sample_trace(&m, q.probabilities(), n, 3).unwrap();
    let mut hist = vec![0.0; 12];
    for &x in t.angles() {
        hist[x] += 1.0 / n as f64;
    }
    let tv: f64 = hist.iter().zip(q.probabilities()).map(|(h, p)| (h - p).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.01, "total variation {tv}");
    assert!(t.max_step(12) <= 2);
}

#[test]
fn same_seed_same_trace() {
    let mut rng = TestRng::new(42);
    let m = TransitionModel::new(random_banded(20, 1, &mut rng), 1).unwrap();
    let q = vec![0.05; 20];
    assert_eq!(sample_trace(&m, &q, 10_000, 77).unwrap(), sample_trace(&m, &q, 10_000, 77).unwrap());
    assert_ne!(sample_trace(&m, &q, 10_000, 77).unwrap(), sample_trace(&m, &q, 10_000, 78).unwrap());
}

#[test]
fn static_solution_never_switches() {
    let mut rng = TestRng::new(43);
    let pr = problem(random_banded(30, 1, &mut rng), 1, 4, 3, 1);
    let stat = static_baseline(&pr);
    let trace = sample_trace(pr.model(), pr.q(), 50_000, 1).unwrap();
    let cfg = SessionConfig::new(3, 1, 50_000, 1).unwrap();
    let r = simulate_session(&stat, &trace, pr.space(), &cfg, pr.rate_model()).unwrap();
    assert_eq!(r.switch_count, 0);
    assert!((r.mean_distortion - stat.streams.stream(0)[0]).abs() < 1e-9);
    assert!((r.transmitted_rate_mean - pr.transmission_budget()).abs() < 1e-9);
}

#[test]
fn zero_delay_on_static_head_matches_analytic() {
    let pr = problem(Matrix::identity(10), 1, 2, 0, 1);
    let sol = sweep_stream_count(&pr, 3, &SolverOptions::default()).unwrap().best;
    let analytic = pr.per_frame_mse(sol.expected_distortion);
    let mut total = 0.0;
    for start in 0..10 {
        let trace = HeadTrace::new(vec![start; 100], 10).unwrap();
        let cfg = SessionConfig::new(0, 1, 100, 0).unwrap();
        let r = simulate_session(&sol, &trace, pr.space(), &cfg, pr.rate_model()).unwrap();
        total += pr.q()[start] * r.mean_distortion;
    }
    assert!((total - analytic).abs() < 1e-9 * analytic.max(1.0), "{total} vs {analytic}");
}

#[test]
fn static_baseline_spends_transmission_budget() {
    let rm = RateModel::new(10.0, 80.0).unwrap();
    let pr = OptimizationProblem::new(
        ViewSpace::new(60, 7).unwrap(),
        TransitionModel::new(Matrix::identity(60), 1).unwrap(),
        rm,
        0,
        1,
        30.0,
        60.0,
        1.0,
    )
    .unwrap();
    let s = static_baseline(&pr);
    assert!((s.streams.stream(0)[0] - 100.0 * 2f64.ln()).abs() < 1e-9);
    assert!((s.transmission_rate - 30.0).abs() < 1e-9);
    assert_eq!(s.num_streams(), 1);
    let full = pr.with_budgets(60.0, 60.0, 1.0).unwrap();
    assert_eq!(static_baseline(&full).streams.stream(0)[0], 0.0);
}

#[test]
fn trace_csv_round_trip() {
    let mut rng = TestRng::new(44);
    let angles: Vec<usize> = (0..500).map(|_| rng.int(0, 59)).collect();
    let t = HeadTrace::new(angles, 60).unwrap();
    assert_eq!(HeadTrace::from_csv_str(&t.to_csv(), 60).unwrap(), t);
    assert!(HeadTrace::from_csv_str("61\n", 60).is_err());
}

#[test]
fn adaptive_beats_static_on_sampled_trace() {
    let mut rng = TestRng::new(45);
    let pr = problem(random_banded(24, 1, &mut rng), 1, 3, 2, 1);
    let adaptive = sweep_stream_count(&pr, 4, &SolverOptions::default()).unwrap().best;
    let stat = static_baseline(&pr);
    let trace = sample_trace(pr.model(), pr.q(), 200_000, 9).unwrap();
    let cfg = SessionConfig::new(2, 1, 200_000, 9).unwrap();
    let ra = simulate_session(&adaptive, &trace, pr.space(), &cfg, pr.rate_model()).unwrap();
    let rs = simulate_session(&stat, &trace, pr.space(), &cfg, pr.rate_model()).unwrap();
    assert!(ra.mean_distortion <= rs.mean_distortion);
    assert!(psnr(ra.mean_distortion) >= psnr(rs.mean_distortion));
}

#[test]
fn decisions_use_delayed_feedback() {
    let k = 6;
    let streams = StreamSet::new(vec![vec![1.0; k], vec![2.0; k]], k, 46.0).unwrap();
    let mapping = Mapping::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    let sol = Solution::evaluate(
        &problem(Matrix::identity(k), 1, 1, 2, 1),
        streams,
        mapping,
        Multipliers::new(0.0, 0.0).unwrap(),
    );
    let trace = HeadTrace::new(vec![0, 0, 3, 3, 3, 0, 0, 0], k).unwrap();
    let mut cfg = SessionConfig::new(2, 1, 8, 0).unwrap();
    cfg.record_decisions = true;
    let r = simulate_session(&sol, &trace, ViewSpace::new(k, 1).unwrap(), &cfg, &RateModel::new(3.0, 46.0).unwrap())
        .unwrap();
    assert_eq!(r.per_frame_stream, vec![0, 0, 0, 0, 1, 1, 1, 0]);
    assert_eq!(r.switch_count, 2);
    assert_eq!(r.decisions[0].feedback_frame, 0);
}
