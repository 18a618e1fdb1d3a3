use std::ffi::CStr;
use std::ptr;

use viewstream_ffi::*;

fn params() -> VsProblemParams {
    VsProblemParams {
        num_angles: 60,
        fov_half_width: 7,
        v_max: 1,
        rtt_frames: 3,
        gop: 1,
        sigma: 10.0,
        d_max: 46.0,
        transmission_budget: 12.0,
        storage_bits: 48.0,
        duration_secs: 1.0,
    }
}

fn last_error() -> String {
    let p = vs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn linear_problem(p: &VsProblemParams) -> *mut VsProblem {
    let angles = [15usize, 45];
    let mults = [2.0, 2.0];
    let mut problem = ptr::null_mut();
    let s = unsafe { vs_problem_new_linear(p, angles.as_ptr(), mults.as_ptr(), 2, &mut problem) };
    assert_eq!(s, VsStatus::Ok);
    problem
}

#[test]
fn optimize_and_inspect() {
    let problem = linear_problem(&params());
    let mut q = vec![0.0; 60];
    assert_eq!(unsafe { vs_problem_steady_state(problem, q.as_mut_ptr(), q.len()) }, VsStatus::Ok);
    assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { vs_optimize(problem, 4, &mut sol) }, VsStatus::Ok);
    let n = unsafe { vs_solution_num_streams(sol) };
    assert!((1..=4).contains(&n));
    let mut mapping = vec![usize::MAX; 60];
    assert_eq!(unsafe { vs_solution_mapping(sol, mapping.as_mut_ptr(), 60) }, VsStatus::Ok);
    assert!(mapping.iter().all(|&m| m < n));
    let mut d = vec![0.0; 60];
    assert_eq!(unsafe { vs_solution_stream(sol, 0, d.as_mut_ptr(), 60) }, VsStatus::Ok);
    assert!(d.iter().all(|&x| (0.0..=46.0).contains(&x)));
    assert!(unsafe { vs_solution_transmission_rate(sol) } <= 12.0 * 1.01);
    assert!(unsafe { vs_solution_storage_rate(sol) } <= 48.0 * 1.01);

    let mut stat = ptr::null_mut();
    assert_eq!(unsafe { vs_static_baseline(problem, &mut stat) }, VsStatus::Ok);
    let gain = unsafe { vs_solution_expected_psnr(sol, problem) - vs_solution_expected_psnr(stat, problem) };
    assert!(gain > 0.0);

    let mut report = VsSessionReport::default();
    assert_eq!(unsafe { vs_simulate(problem, stat, 10_000, 1, false, &mut report) }, VsStatus::Ok);
    assert_eq!(report.switch_count, 0);
    assert_eq!(report.frames, 10_000);
    assert!((report.mean_psnr - vs_psnr(report.mean_distortion)).abs() < 1e-12);

    unsafe {
        vs_solution_free(sol);
        vs_solution_free(stat);
        vs_problem_free(problem);
    }
}

#[test]
fn simulation_is_seeded() {
    let problem = linear_problem(&params());
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { vs_optimize(problem, 3, &mut sol) }, VsStatus::Ok);
    let run = |seed| {
        let mut r = VsSessionReport::default();
        assert_eq!(unsafe { vs_simulate(problem, sol, 20_000, seed, true, &mut r) }, VsStatus::Ok);
        r
    };
    let (a, b) = (run(5), run(5));
    assert_eq!(a.mean_distortion.to_bits(), b.mean_distortion.to_bits());
    assert_eq!(a.switch_count, b.switch_count);
    assert_eq!(a.first_frame, 3);
    unsafe {
        vs_solution_free(sol);
        vs_problem_free(problem);
    }
}

#[test]
fn explicit_matrix_problem() {
    let mut p = params();
    p.num_angles = 5;
    p.fov_half_width = 1;
    p.transmission_budget = 1.5;
    p.storage_bits = 3.0;
    let mut m = vec![0.0; 25];
    for i in 0..5 {
        m[i * 5 + i] = 0.5;
        m[i * 5 + (i + 1) % 5] = 0.25;
        m[i * 5 + (i + 4) % 5] = 0.25;
    }
    let mut problem = ptr::null_mut();
    assert_eq!(unsafe { vs_problem_new_matrix(&p, m.as_ptr(), &mut problem) }, VsStatus::Ok);
    let mut q = [0.0; 5];
    assert_eq!(unsafe { vs_problem_steady_state(problem, q.as_mut_ptr(), 5) }, VsStatus::Ok);
    assert!(q.iter().all(|x| (x - 0.2).abs() < 1e-12));
    unsafe { vs_problem_free(problem) };

    m[0] = 0.9;
    let s = unsafe { vs_problem_new_matrix(&p, m.as_ptr(), &mut problem) };
    assert_eq!(s, VsStatus::InvalidTransition);
    assert!(last_error().contains("row"), "{}", last_error());
}

#[test]
fn errors_are_reported() {
    let mut problem = ptr::null_mut();
    assert_eq!(unsafe { vs_problem_new_linear(ptr::null(), ptr::null(), ptr::null(), 0, &mut problem) }, VsStatus::NullPointer);
    assert!(last_error().contains("params"));

    let mut p = params();
    p.gop = 0;
    assert_eq!(unsafe { vs_problem_new_linear(&p, ptr::null(), ptr::null(), 0, &mut problem) }, VsStatus::InvalidParameter);
    assert!(problem.is_null());

    let mut p = params();
    p.transmission_budget = 1e-12;
    let problem = linear_problem(&p);
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { vs_optimize(problem, 2, &mut sol) }, VsStatus::Infeasible);
    assert!(sol.is_null());

    let mut stat = ptr::null_mut();
    assert_eq!(unsafe { vs_static_baseline(problem, &mut stat) }, VsStatus::Ok);
    let mut small = [0usize; 10];
    assert_eq!(unsafe { vs_solution_mapping(stat, small.as_mut_ptr(), 10) }, VsStatus::BufferTooSmall);
    let mut d = [0.0; 60];
    assert_eq!(unsafe { vs_solution_stream(stat, 1, d.as_mut_ptr(), 60) }, VsStatus::InvalidParameter);

    assert_eq!(unsafe { vs_solution_num_streams(ptr::null()) }, 0);
    assert!(unsafe { vs_solution_expected_distortion(ptr::null()) }.is_nan());
    unsafe {
        vs_solution_free(stat);
        vs_problem_free(problem);
        vs_problem_free(ptr::null_mut());
    }
}
