//! `viewstream` command-line front end.
//!
//! Exit statuses: 0 success, 1 usage or validation error, 2 infeasible
//! problem, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{LoadedConfig, RunConfig, Scheme};
use crate::error::{Error, Result};
use crate::io::{self, atomic_write, Provenance, SolutionBundle};
use crate::optimizer::{quantize_solution, sweep_stream_count, OptimizationProblem, Solution};
use crate::rate_distortion::{fit_rate_model, FitOptions, RdSampleSet};
use crate::simulator::{psnr, sample_trace, simulate_session, static_baseline, HeadTrace};

#[derive(Debug, Parser)]
#[command(name = "viewstream", version, about = "Design and evaluate view-range-limited 360-degree video streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set C=20` or `--set tolerances.budget=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the rate model to empirical rate-distortion samples.
    FitRd {
        /// CSV with header `distortion,rate`.
        samples: PathBuf,
        /// Output `key=value` file.
        #[arg(short, long)]
        out: PathBuf,
        /// d_max used when no sample reaches the rate floor.
        #[arg(long, default_value_t = 46.0)]
        d_max: f64,
        #[arg(long, default_value_t = 1e-9)]
        rate_floor: f64,
    },
    /// Sweep stream counts and write the best solution bundle.
    Optimize {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Bundle path (default `<output_dir>/solution.txt`).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Replay a head trace against a solution bundle.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        solution: PathBuf,
        /// Head trace CSV; sampled from the model with the config seed if absent.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Directory for `session.csv` and `session_summary.txt`.
        #[arg(short, long)]
        out_dir: Option<PathBuf>,
    },
    /// Adaptive vs static PSNR over a grid of storage budgets.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Storage budgets `B` (comma separated); defaults to `storage_grid`.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sample a head trace from the configured model.
    SampleTrace {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of frames (default `duration_frames`).
        #[arg(short = 'n', long)]
        frames: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::FitRd { samples, out, d_max, rate_floor } => cmd_fit_rd(&samples, &out, d_max, rate_floor),
        Command::Optimize { cfg, out } => cmd_optimize(&load(&cfg)?, out.as_deref()),
        Command::Simulate { cfg, solution, trace, out_dir } => {
            cmd_simulate(&load(&cfg)?, &solution, trace.as_deref(), out_dir.as_deref())
        }
        Command::Compare { cfg, grid, out } => cmd_compare(&load(&cfg)?, &grid, out.as_deref()),
        Command::SampleTrace { cfg, frames, out } => cmd_sample_trace(&load(&cfg)?, frames, out.as_deref()),
    }
}

fn load(args: &ConfigArgs) -> Result<LoadedConfig> {
    RunConfig::load(&args.config, &args.overrides)
}

fn provenance(cfg: &LoadedConfig) -> Provenance {
    Provenance::for_bytes(cfg.effective_text.as_bytes())
}

pub fn cmd_fit_rd(samples_path: &Path, out: &Path, d_max: f64, rate_floor: f64) -> Result<()> {
    let text = std::fs::read_to_string(samples_path).map_err(|e| Error::io(samples_path, e))?;
    let samples = RdSampleSet::from_csv_str(&text)?;
    let fit = fit_rate_model(&samples, FitOptions { rate_floor, fallback_d_max: d_max })?;
    let prov = Provenance::for_bytes(text.as_bytes());
    let body = format!("{}tool_version={}\nsamples_hash={}\n", fit.to_kv(), prov.tool_version, prov.config_hash);
    atomic_write(out, &body)?;
    println!("sigma={} d_max={} residual={}", fit.model.sigma(), fit.model.d_max(), fit.residual);
    Ok(())
}

/// Which budget leaves nothing encodable.
fn binding_constraint(problem: &OptimizationProblem) -> &'static str {
    if problem.storage_budget() <= problem.transmission_budget() {
        "storage (B/Q)"
    } else {
        "transmission (C)"
    }
}

pub fn cmd_optimize(cfg: &LoadedConfig, out: Option<&Path>) -> Result<()> {
    let problem = cfg.problem()?;
    let prov = provenance(cfg);
    let (solution, table) = match cfg.config.scheme {
        Scheme::Static => (static_baseline(&problem), None),
        Scheme::Adaptive => {
            let sweep = sweep_stream_count(&problem, cfg.config.max_streams, &cfg.solver_options())?;
            (sweep.best, Some(sweep.table))
        }
    };
    if solution.is_trivial() {
        return Err(Error::Infeasible(format!(
            "{} budget is too small to encode any angle (storage {} / transmission {})",
            binding_constraint(&problem),
            problem.storage_budget(),
            problem.transmission_budget()
        )));
    }
    let bundle = io::write_solution_bundle(&problem, &solution, table.as_deref(), cfg.config.scheme.as_str(), &prov);
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir().join("solution.txt"));
    atomic_write(&path, &bundle)?;

    if let Some(rows) = &table {
        println!("{:>9} {:>8} {:>10} {:>12} {:>12} {:>10}", "requested", "streams", "psnr_dB", "storage", "transmit", "note");
        for r in rows {
            println!(
                "{:>9} {:>8} {:>10.4} {:>12.4} {:>12.4} {:>10}",
                r.requested_streams, r.num_streams, r.expected_psnr, r.storage_rate, r.transmission_rate, r.note
            );
        }
    }
    println!(
        "scheme={} streams={} objective={} storage={} transmission={} expected_psnr={:.4}",
        cfg.config.scheme.as_str(),
        solution.num_streams(),
        solution.expected_distortion,
        solution.storage_rate,
        solution.transmission_rate,
        solution.expected_psnr(&problem)
    );
    if solution.peak_stream_rate(&problem) > problem.transmission_budget() * (1.0 + cfg.config.tolerances.budget) {
        println!(
            "note: peak single-stream rate {} exceeds C = {} (the transmission budget is met in expectation)",
            solution.peak_stream_rate(&problem),
            problem.transmission_budget()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn load_or_sample_trace(cfg: &LoadedConfig, problem: &OptimizationProblem, trace: Option<&Path>, frames: usize) -> Result<HeadTrace> {
    match trace {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            HeadTrace::from_csv_str(&text, problem.num_angles())
        }
        None => sample_trace(problem.model(), problem.q(), frames, cfg.config.seed),
    }
}

pub fn cmd_simulate(cfg: &LoadedConfig, solution_path: &Path, trace: Option<&Path>, out_dir: Option<&Path>) -> Result<()> {
    let problem = cfg.problem()?;
    let text = std::fs::read_to_string(solution_path).map_err(|e| Error::io(solution_path, e))?;
    let bundle = SolutionBundle::parse(&text)?;
    let solution = bundle.to_solution(&problem)?;
    let session = cfg.session_config()?;
    let trace = load_or_sample_trace(cfg, &problem, trace, session.duration_frames)?;
    let report = simulate_session(&solution, &trace, problem.space(), &session, problem.rate_model())?;

    let prov = provenance(cfg);
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir());
    let extra = [
        ("scheme", bundle.summary.get("scheme").cloned().unwrap_or_default()),
        ("num_streams", solution.num_streams().to_string()),
        ("expected_psnr", solution.expected_psnr(&problem).to_string()),
        ("expected_mse", solution.expected_mse(&problem).to_string()),
        ("seed", cfg.config.seed.to_string()),
    ];
    atomic_write(&dir.join("session.csv"), &io::session_csv(&report, &prov))?;
    atomic_write(&dir.join("session_summary.txt"), &io::session_summary(&report, &extra, &prov))?;
    println!(
        "trace_mean_psnr={:.4} expected_psnr={:.4} switch_count={} transmitted_rate_mean={}",
        report.mean_psnr,
        solution.expected_psnr(&problem),
        report.switch_count,
        report.transmitted_rate_mean
    );
    Ok(())
}

/// One storage point of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub storage: f64,
    pub psnr_adaptive: f64,
    pub psnr_static: f64,
    pub chosen_streams: usize,
    pub psnr_adaptive_2qp: f64,
    pub psnr_static_2qp: f64,
    pub adaptive_storage_rate: f64,
    pub adaptive_transmission_rate: f64,
}

pub const COMPARE_HEADER: &str = "storage,psnr_adaptive,psnr_static,chosen_streams,psnr_adaptive_2qp,psnr_static_2qp,adaptive_storage_rate,adaptive_transmission_rate";

fn quantized_psnr(problem: &OptimizationProblem, s: &Solution) -> Result<f64> {
    let q = quantize_solution(problem, s)?;
    Ok(psnr(problem.per_frame_mse(q.expected_distortion)))
}

/// Runs the adaptive sweep and the static baseline at every storage budget.
pub fn compare_rows(cfg: &LoadedConfig, grid: &[f64]) -> Result<Vec<CompareRow>> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter(format!("storage grid needs at least 2 points, got {}", grid.len())));
    }
    if let Some(x) = grid.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::InvalidParameter(format!("storage budgets must be positive, got {x}")));
    }
    let base = cfg.problem()?;
    let opts = cfg.solver_options();
    let c = &cfg.config;
    grid.par_iter()
        .map(|&storage| {
            let problem = base.with_budgets(c.transmission_budget, storage, c.duration_secs)?;
            let sweep = sweep_stream_count(&problem, c.max_streams, &opts)?;
            let stat = static_baseline(&problem);
            Ok(CompareRow {
                storage,
                psnr_adaptive: sweep.best.expected_psnr(&problem),
                psnr_static: stat.expected_psnr(&problem),
                chosen_streams: sweep.best.num_streams(),
                psnr_adaptive_2qp: quantized_psnr(&problem, &sweep.best)?,
                psnr_static_2qp: quantized_psnr(&problem, &stat)?,
                adaptive_storage_rate: sweep.best.storage_rate,
                adaptive_transmission_rate: sweep.best.transmission_rate,
            })
        })
        .collect()
}

pub fn cmd_compare(cfg: &LoadedConfig, grid: &[f64], out: Option<&Path>) -> Result<()> {
    let grid = if grid.is_empty() { cfg.config.storage_grid.as_slice() } else { grid };
    let rows = compare_rows(cfg, grid)?;
    let prov = provenance(cfg);
    let mut s = prov.comment_line();
    let _ = writeln!(s, "{COMPARE_HEADER}");
    for r in &rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.storage,
            r.psnr_adaptive,
            r.psnr_static,
            r.chosen_streams,
            r.psnr_adaptive_2qp,
            r.psnr_static_2qp,
            r.adaptive_storage_rate,
            r.adaptive_transmission_rate
        );
    }
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir().join("compare.csv"));
    atomic_write(&path, &s)?;
    println!("{:>10} {:>10} {:>10} {:>8}", "storage", "adaptive", "static", "streams");
    for r in &rows {
        println!("{:>10.3} {:>10.4} {:>10.4} {:>8}", r.storage, r.psnr_adaptive, r.psnr_static, r.chosen_streams);
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_sample_trace(cfg: &LoadedConfig, frames: Option<usize>, out: Option<&Path>) -> Result<()> {
    let model = cfg.transition_model()?;
    let steady = crate::view_model::steady_state(&model)?;
    let n = frames.unwrap_or(cfg.config.duration_frames);
    let trace = sample_trace(&model, steady.probabilities(), n, cfg.config.seed)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir().join("trace.csv"));
    let body = format!("{}{}", provenance(cfg).comment_line(), trace.to_csv());
    atomic_write(&path, &body)?;
    println!("frames={n} seed={} wrote {}", cfg.config.seed, path.display());
    Ok(())
}
