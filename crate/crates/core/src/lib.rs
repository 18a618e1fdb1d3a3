//! Design of view-range-limited 360-degree video streams.
//!
//! A viewer's head angle follows a banded Markov chain over `K` discrete
//! angles. The server holds several pre-encoded streams, each spending its
//! rate on a different part of the circle, and picks the next stream from the
//! head angle the client reported one round trip ago. This crate computes the
//! streams and the angle-to-stream table that minimise expected viewport
//! distortion under storage and bandwidth budgets, and replays sessions
//! against them.
//!
//! - [`view_model`]: transition matrix, steady state, FoV operator.
//! - [`rate_distortion`]: clipped-Laplacian rate model, fitting, two-level quantizer.
//! - [`optimizer`]: objective, alternating minimisation, multiplier search.
//! - [`simulator`]: head traces, RTT-delayed session replay, static baseline.
//! - [`cli`]: the `viewstream` command-line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod optimizer;
pub mod rate_distortion;
pub mod simulator;
pub mod view_model;

pub use error::{Error, Result};
pub use optimizer::{
    alternate, expected_distortion, initialize, lagrangian, sweep_stream_count, tune_multipliers, Mapping,
    Multipliers, OptimizationProblem, Solution, SolverOptions, StreamSet,
};
pub use rate_distortion::{fit_rate_model, lloyd_max_two_level, RateModel, RdSampleSet};
pub use simulator::{psnr, sample_trace, simulate_session, static_baseline, HeadTrace, SessionConfig, SessionReport};
pub use view_model::{build_linear_transition, fov_matrix, steady_state, FovOperator, PropagationOrder, SteadyState, TransitionModel, ViewSpace};
