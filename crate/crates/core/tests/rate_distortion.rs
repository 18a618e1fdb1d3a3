mod common;

use common::TestRng;
use viewstream::rate_distortion::{fit_rate_model, lloyd_max_two_level, FitOptions, QuantLevel, RateModel, RdSampleSet};
use viewstream::Error;

fn samples_from(sigma: f64, amplitude: f64, ds: &[f64], noise: Option<&mut TestRng>) -> RdSampleSet {
    let mut noise = noise;
    let pts = ds
        .iter()
        .map(|&d| {
            let scale = noise.as_mut().map_or(1.0, |r| 1.0 + r.range(-0.03, 0.03));
            (d, amplitude * (-d / (sigma * sigma)).exp() * scale)
        })
        .collect();
    RdSampleSet::new(pts).unwrap()
}

#[test]
fn rate_at_46_with_sigma_10() {
    let rm = RateModel::new(10.0, 50.0).unwrap();
    assert!((rm.rate_of_distortion(46.0).unwrap() - 0.631_283_645_506_926).abs() < 1e-12);
    assert_eq!(rm.rate_of_distortion(50.0).unwrap(), 0.0);
    assert_eq!(rm.rate_of_distortion(0.0).unwrap(), 1.0);
    assert!(rm.rate_of_distortion(-1.0).is_err());
}

#[test]
fn stream_rate_matches_elementwise_sum() {
    let rm = RateModel::new(3.0, 46.0).unwrap();
    let mut rng = TestRng::new(21);
    let d: Vec<f64> = (0..60).map(|_| rng.range(0.0, 60.0)).collect();
    let oracle: f64 = d.iter().map(|&x| if x < 46.0 { (-x / 9.0).exp() } else { 0.0 }).sum();
    assert!((rm.stream_rate(&d, 60).unwrap() - oracle).abs() < 1e-12);
    assert!(rm.stream_rate(&d, 59).is_err());
    assert_eq!(rm.stream_rate(&[0.0; 60], 60).unwrap(), 60.0);
}

#[test]
fn fit_recovers_sigma_from_clean_samples() {
    let set = samples_from(10.0, 1.0, &[5.0, 15.0, 25.0, 35.0, 45.0], None);
    let fit = fit_rate_model(&set, FitOptions { rate_floor: 1e-9, fallback_d_max: 46.0 }).unwrap();
    assert!((fit.model.sigma() - 10.0).abs() < 1e-9);
    assert_eq!(fit.model.d_max(), 46.0);
}

#[test]
fn fit_tolerates_three_percent_noise() {
    let mut rng = TestRng::new(22);
    let ds: Vec<f64> = (0..6).map(|i| 1.0 + 9.0 * i as f64).collect();
    let set = samples_from(10.0, 5000.0, &ds, Some(&mut rng));
    let fit = fit_rate_model(&set, FitOptions::default()).unwrap();
    assert!((fit.model.sigma() - 10.0).abs() < 1.0, "sigma {}", fit.model.sigma());
}

#[test]
fn fit_rejects_two_samples() {
    let set = RdSampleSet::new(vec![(1.0, 2.0), (2.0, 1.0)]).unwrap();
    assert!(matches!(fit_rate_model(&set, FitOptions::default()), Err(Error::InsufficientSamples { .. })));
}

#[test]
fn lloyd_max_two_clusters() {
    let q = lloyd_max_two_level(&[1.0, 1.0, 1.0, 9.0, 9.0, 9.0], &[1.0; 6], 46.0).unwrap();
    assert_eq!(q.levels, (1.0, 9.0));
    assert_eq!(q.weighted_mse, 0.0);
    assert_eq!(&q.assignment[..3], &[QuantLevel::Low; 3]);
    assert_eq!(&q.assignment[3..], &[QuantLevel::High; 3]);
}

#[test]
fn lloyd_max_marks_unencoded_angles() {
    let q = lloyd_max_two_level(&[2.0, 46.0, 10.0, 50.0], &[1.0; 4], 46.0).unwrap();
    assert_eq!(q.assignment[1], QuantLevel::Unencoded);
    assert_eq!(q.assignment[3], QuantLevel::Unencoded);
    assert_eq!(q.quantized(46.0), vec![2.0, 46.0, 10.0, 46.0]);
    assert!(matches!(lloyd_max_two_level(&[46.0, 47.0], &[1.0; 2], 46.0), Err(Error::AllUnencoded)));
}

#[test]
fn lloyd_max_beats_single_level() {
    let mut rng = TestRng::new(23);
    for _ in 0..50 {
        let d: Vec<f64> = (0..30).map(|_| rng.range(0.0, 45.0)).collect();
        let w: Vec<f64> = (0..30).map(|_| rng.range(0.0, 1.0)).collect();
        let total: f64 = w.iter().sum();
        let mean = d.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() / total;
        let single = d.iter().zip(&w).map(|(x, y)| y * (x - mean).powi(2)).sum::<f64>() / total;
        assert!(lloyd_max_two_level(&d, &w, 46.0).unwrap().weighted_mse <= single + 1e-12);
    }
}
