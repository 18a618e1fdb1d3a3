//! C ABI over the `viewstream` solver and simulator.
//!
//! Every fallible call returns a [`VsStatus`]; on failure the message is
//! available from [`vs_last_error_message`] until the next call on the same
//! thread. Handles are created by `*_new`/solver functions and released with
//! the matching `*_free`. Angles are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use viewstream::linalg::Matrix;
use viewstream::optimizer::{sweep_stream_count, OptimizationProblem, Solution, SolverOptions};
use viewstream::view_model::{build_linear_transition, TransitionModel, ViewSpace};
use viewstream::{sample_trace, simulate_session, static_baseline, Error, RateModel, SessionConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    InvalidTransition = 3,
    Infeasible = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// System parameters for [`vs_problem_new_linear`] and [`vs_problem_new_matrix`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VsProblemParams {
    /// Number of view angles `K`.
    pub num_angles: usize,
    /// FoV half-width `a`; the FoV covers `2a + 1` angles.
    pub fov_half_width: usize,
    /// Largest per-frame head movement in angles.
    pub v_max: usize,
    pub rtt_frames: usize,
    pub gop: usize,
    pub sigma: f64,
    pub d_max: f64,
    /// Expected transmitted rate budget `C`.
    pub transmission_budget: f64,
    /// Storage budget `B`, spread over `duration_secs`.
    pub storage_bits: f64,
    pub duration_secs: f64,
}

/// Summary of a simulated session.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VsSessionReport {
    pub frames: usize,
    pub first_frame: usize,
    pub mean_distortion: f64,
    pub mean_psnr: f64,
    pub switch_count: usize,
    pub transmitted_rate_mean: f64,
}

/// Opaque optimisation problem.
pub struct VsProblem(OptimizationProblem);

/// Opaque stream design.
pub struct VsSolution(Solution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VsStatus {
    match e {
        Error::InvalidTransition { .. } => VsStatus::InvalidTransition,
        Error::Infeasible(_) => VsStatus::Infeasible,
        Error::NoConvergence { .. } | Error::Numerical(_) | Error::ZeroGamma { .. } => VsStatus::Numerical,
        _ => VsStatus::InvalidParameter,
    }
}

fn fail(status: VsStatus, msg: impl Into<String>) -> VsStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), VsStatus>) -> VsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(VsStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: viewstream::Result<T>) -> Result<T, VsStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, VsStatus> {
    p.as_ref().ok_or_else(|| fail(VsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], VsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(VsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T: Copy>(src: &[T], out: *mut T, len: usize, what: &str) -> Result<(), VsStatus> {
    if out.is_null() {
        return Err(fail(VsStatus::NullPointer, format!("{what} is null")));
    }
    if len < src.len() {
        return Err(fail(VsStatus::BufferTooSmall, format!("{what} holds {len}, need {}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn build_problem(params: &VsProblemParams, model: TransitionModel) -> Result<OptimizationProblem, VsStatus> {
    let space = lift(ViewSpace::new(params.num_angles, params.fov_half_width))?;
    let rm = lift(RateModel::new(params.sigma, params.d_max))?;
    lift(OptimizationProblem::new(
        space,
        model,
        rm,
        params.rtt_frames,
        params.gop,
        params.transmission_budget,
        params.storage_bits,
        params.duration_secs,
    ))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), VsStatus> {
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn vs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// PSNR in dB of a per-pixel MSE on 8-bit samples.
#[no_mangle]
pub extern "C" fn vs_psnr(mse: f64) -> f64 {
    viewstream::psnr(mse)
}

/// Problem whose head motion is the banded linear-kernel chain, optionally
/// biased towards `num_hotspots` hotspot angles with multipliers `>= 1`.
///
/// # Safety
/// `params` and `out` must be valid; the hotspot arrays must hold
/// `num_hotspots` entries.
#[no_mangle]
pub unsafe extern "C" fn vs_problem_new_linear(
    params: *const VsProblemParams,
    hotspot_angles: *const usize,
    hotspot_multipliers: *const f64,
    num_hotspots: usize,
    out: *mut *mut VsProblem,
) -> VsStatus {
    guard(|| {
        let params = deref(params, "params")?;
        deref(out, "out")?;
        let angles = slice(hotspot_angles, num_hotspots, "hotspot_angles")?;
        let mults = slice(hotspot_multipliers, num_hotspots, "hotspot_multipliers")?;
        let space = lift(ViewSpace::new(params.num_angles, params.fov_half_width))?;
        let hotspots: Vec<(usize, f64)> = angles.iter().copied().zip(mults.iter().copied()).collect();
        let model = lift(build_linear_transition(space, params.v_max, &hotspots))?;
        store(out, VsProblem(build_problem(params, model)?))
    })
}

/// Problem with an explicit row-major `K x K` transition matrix.
///
/// # Safety
/// `params` and `out` must be valid; `matrix` must hold `K * K` values.
#[no_mangle]
pub unsafe extern "C" fn vs_problem_new_matrix(
    params: *const VsProblemParams,
    matrix: *const f64,
    out: *mut *mut VsProblem,
) -> VsStatus {
    guard(|| {
        let params = deref(params, "params")?;
        deref(out, "out")?;
        let k = params.num_angles;
        let values = slice(matrix, k * k, "matrix")?;
        let rows: Vec<Vec<f64>> = values.chunks(k.max(1)).map(<[f64]>::to_vec).collect();
        let model = lift(TransitionModel::new(Matrix::from_rows(&rows), params.v_max))?;
        store(out, VsProblem(build_problem(params, model)?))
    })
}

/// # Safety
/// `problem` must come from a `vs_problem_new_*` call, or be null.
#[no_mangle]
pub unsafe extern "C" fn vs_problem_free(problem: *mut VsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Copies the stationary angle distribution into `out` (`len >= K`).
///
/// # Safety
/// `problem` must be valid and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn vs_problem_steady_state(problem: *const VsProblem, out: *mut f64, len: usize) -> VsStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        write_out(p.0.q(), out, len, "out")
    })
}

/// Best design over `1..=max_streams` streams with default solver settings.
///
/// # Safety
/// `problem` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vs_optimize(
    problem: *const VsProblem,
    max_streams: usize,
    out: *mut *mut VsSolution,
) -> VsStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        deref(out, "out")?;
        let sweep = lift(sweep_stream_count(&p.0, max_streams, &SolverOptions::default()))?;
        if sweep.best.is_trivial() {
            return Err(fail(VsStatus::Infeasible, "budgets are too small to encode any angle"));
        }
        store(out, VsSolution(sweep.best))
    })
}

/// Single uniform-quality stream spending the transmission budget.
///
/// # Safety
/// `problem` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vs_static_baseline(problem: *const VsProblem, out: *mut *mut VsSolution) -> VsStatus {
    guard(|| {
        let p = deref(problem, "problem")?;
        deref(out, "out")?;
        store(out, VsSolution(static_baseline(&p.0)))
    })
}

/// # Safety
/// `solution` must come from [`vs_optimize`] or [`vs_static_baseline`], or be null.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_free(solution: *mut VsSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of streams, or 0 for a null handle.
///
/// # Safety
/// `solution` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_num_streams(solution: *const VsSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.0.num_streams())
}

/// Objective value (FoV- and GOP-summed expected distortion); NaN for null.
///
/// # Safety
/// `solution` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_expected_distortion(solution: *const VsSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.0.expected_distortion)
}

/// # Safety
/// `solution` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_storage_rate(solution: *const VsSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.0.storage_rate)
}

/// # Safety
/// `solution` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_transmission_rate(solution: *const VsSolution) -> f64 {
    solution.as_ref().map_or(f64::NAN, |s| s.0.transmission_rate)
}

/// Expected per-frame PSNR of `solution` on `problem`; NaN if either is null.
///
/// # Safety
/// Both handles must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_expected_psnr(solution: *const VsSolution, problem: *const VsProblem) -> f64 {
    match (solution.as_ref(), problem.as_ref()) {
        (Some(s), Some(p)) => s.0.expected_psnr(&p.0),
        _ => f64::NAN,
    }
}

/// Copies the angle-to-stream mapping into `out` (`len >= K`).
///
/// # Safety
/// `solution` must be valid and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_mapping(solution: *const VsSolution, out: *mut usize, len: usize) -> VsStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        write_out(s.0.mapping.as_slice(), out, len, "out")
    })
}

/// Copies the per-angle distortions of stream `index` into `out` (`len >= K`).
///
/// # Safety
/// `solution` must be valid and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn vs_solution_stream(
    solution: *const VsSolution,
    index: usize,
    out: *mut f64,
    len: usize,
) -> VsStatus {
    guard(|| {
        let s = deref(solution, "solution")?;
        if index >= s.0.num_streams() {
            return Err(fail(
                VsStatus::InvalidParameter,
                format!("stream {index} out of range for {} streams", s.0.num_streams()),
            ));
        }
        write_out(s.0.streams.stream(index), out, len, "out")
    })
}

/// Samples a `frames`-long head trace with `seed` and plays it against
/// `solution`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vs_simulate(
    problem: *const VsProblem,
    solution: *const VsSolution,
    frames: usize,
    seed: u64,
    exclude_warmup: bool,
    out: *mut VsSessionReport,
) -> VsStatus {
    guard(|| {
        let p = &deref(problem, "problem")?.0;
        let s = &deref(solution, "solution")?.0;
        let out = out.as_mut().ok_or_else(|| fail(VsStatus::NullPointer, "out is null"))?;
        let mut cfg = lift(SessionConfig::new(p.rtt_frames(), p.gop(), frames, seed))?;
        cfg.exclude_warmup = exclude_warmup;
        let trace = lift(sample_trace(p.model(), p.q(), frames, seed))?;
        let r = lift(simulate_session(s, &trace, p.space(), &cfg, p.rate_model()))?;
        *out = VsSessionReport {
            frames: r.per_frame_distortion.len(),
            first_frame: r.first_frame,
            mean_distortion: r.mean_distortion,
            mean_psnr: r.mean_psnr,
            switch_count: r.switch_count,
            transmitted_rate_mean: r.transmitted_rate_mean,
        };
        Ok(())
    })
}
