//! Exact stochastic simulation and rate theory for multi-type logistic
//! birth-death populations that cross fitness valleys in a periodically
//! switching environment.
//!
//! The crate has three layers:
//!
//! * an analytic layer ([`theory`], [`bdp`], [`ode`]) that computes
//!   equilibria, invasion fitnesses, the arrival-time set of successful
//!   mutants, phase-dependent and effective valley-crossing rates, the
//!   pit-stop rate and its accelerated time scale, plus the closed-form
//!   birth-death quantities (excursion law, extinction probabilities,
//!   martingale limits) used as oracles;
//! * an exact event-driven simulator ([`engine`]) for the full process,
//!   with incremental rate maintenance and phase-boundary handling;
//! * a replication harness ([`harness`]) that confronts simulation output
//!   with the analytic predictions (crossing-time laws, resident stability,
//!   mesoscopic equilibria, deterministic limits, pit-stop peak growth).
//!
//! Everything is driven by a single JSON configuration (see [`config`]) and
//! a single seed, so every run is reproducible. The `valleycross` binary is
//! a thin front end; the `examples/` directory demonstrates each capability
//! in library form.

// Negated comparisons like `!(x > 0.0)` are deliberate throughout: they
// treat NaN as invalid input instead of letting it slip through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bdp;
pub mod cli;
pub mod config;
pub mod engine;
pub mod harness;
pub mod model;
pub mod ode;
pub mod stats;
pub mod theory;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain of the requested quantity.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The landscape does not satisfy the assumptions of the requested rate.
    #[error("unsupported landscape: {0}")]
    Unsupported(String),
    /// Configuration file could not be parsed or is structurally broken.
    #[error("config error: {0}")]
    Config(String),
    /// Not enough data to evaluate a statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Numerical blow-up or loss of validity during integration.
    #[error("numerical error: {0}")]
    Numerics(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use engine::{Engine, Observables, PopulationState, RunResult, StopReason, StopSpec};
pub use model::{Landscape, ModelSpec, PhaseClock, PhaseSpec, ScalingSpec};
pub use theory::{ArrivalSet, FitnessTable, GrowthProfile, PitstopReport, RateReport};
