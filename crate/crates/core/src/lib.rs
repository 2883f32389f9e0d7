//! Error-rate analysis for grant-free massive random access with short-packet
//! transmission.
//!
//! The crate pairs every analytical piece with a sampling oracle:
//!
//! - [`amp`]: AMP joint activity detection and channel estimation, its
//!   Bernoulli-Gaussian MMSE denoiser and the scalar state evolution.
//! - [`detection`]: miss / false-alarm probabilities and channel-estimation
//!   error variances at the state-evolution fixed point.
//! - [`fbl`]: finite-blocklength normal approximation and its piecewise-linear
//!   surrogate.
//! - [`bler`]: the Gamma law of the post-ZF SNR conditioned on the detection
//!   outcome, conditional BLER (quadrature and closed form), the binomial
//!   mixture over outcomes and the dominant-term shortcut.
//! - [`pilot`]: pilot-length optimization.
//! - [`montecarlo`]: end-to-end link simulation used as the empirical oracle.
//! - [`cli`]: config files, CSV output and the reproduction commands behind the
//!   `grantfree` binary.

pub mod amp;
pub mod bler;
pub mod cli;
pub mod detection;
pub mod fbl;
pub mod linalg;
pub mod montecarlo;
pub mod pilot;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;
pub mod system;
pub mod validate;

pub use amp::{run_amp, state_evolution_fixed_point, AmpOptions, JadceResult};
pub use bler::{mixture_bler, BlerReport, ConditionalMethod, SnrLaw};
pub use detection::{DetectionConvention, DetectionStats};
pub use fbl::{CodeParams, LinearizedBler};
pub use montecarlo::{run_campaign, run_trial, EmpiricalBler, TrialResult};
pub use pilot::{optimize_pilot_length, PilotSweepResult, SweepMode};
pub use system::{Activity, Scenario, SystemConfig};

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("AMP diverged at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("state evolution did not converge (last states {prev:e}, {last:e})")]
    NonConvergence { prev: f64, last: f64 },
    #[error("quadrature did not converge (achieved abs error {achieved:e})")]
    Quadrature { achieved: f64 },
    #[error("empty feasible pilot-length set: {0}")]
    EmptyFeasibleSet(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
