// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid ensemble model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("series did not converge: last term ratio {ratio:.3e} after {terms} terms")]
    NonConvergence { terms: usize, ratio: f64 },

    #[error("point (x = {x:.3e} m, y = {y:.3e} m) lies outside the crystal region")]
    OutsideCrystal { x: f64, y: f64 },

    #[error("frequency span too small: tail mass {tail:.3e} exceeds {limit:.1e}")]
    SpanTooSmall { tail: f64, limit: f64 },

    #[error("empty distribution: {0}")]
    EmptyDistribution(String),

    #[error("integration diverged at t = {time:.6e} s")]
    Diverged { time: f64 },

    #[error("step size {dt:.3e} s exceeds stability limit {limit:.3e} s")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("drive power {power:.4e} W exceeds peak {limit:.4e} W at t = {time:.6e} s")]
    PowerViolation { power: f64, limit: f64, time: f64 },

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("infeasible timing: {constraint} = {value:.4e} s < 0 (minimum feasible T_mem {min_t_mem:.6e} s)")]
    InfeasibleTiming { constraint: String, value: f64, min_t_mem: f64 },

    #[error("no spin revival found in window [{start:.6e}, {end:.6e}] s")]
    NoRevival { start: f64, end: f64 },

    #[error("optimum at bracket edge: {0}")]
    BracketEdge(String),

    #[error("chirp rate {rate:.4e} rad/s^2 in part {part} exceeds limit {limit:.4e}")]
    ChirpRate { part: usize, rate: f64, limit: f64 },

    #[error("kappa changed in part {part} while |<a_c>| = {amplitude:.3e} > {limit}")]
    KappaTuning { part: usize, amplitude: f64, limit: f64 },

    #[error("modes overlap: {0}")]
    ModeOverlap(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("unphysical channel: {0}")]
    UnphysicalChannel(String),

    #[error("run configuration mismatch: {0}")]
    WrongConfiguration(String),

    #[error("oracle check failed: {0}")]
    Oracle(String),

    #[error("missing covariance: {0}")]
    MissingCovariance(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case tag for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidModel(_) => "invalid_model",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonConvergence { .. } => "non_convergence",
            Error::OutsideCrystal { .. } => "outside_crystal",
            Error::SpanTooSmall { .. } => "span_too_small",
            Error::EmptyDistribution(_) => "empty_distribution",
            Error::Diverged { .. } => "diverged",
            Error::StepTooLarge { .. } => "step_too_large",
            Error::PowerViolation { .. } => "power_violation",
            Error::Bracket(_) => "bracket",
            Error::InfeasibleTiming { .. } => "infeasible_timing",
            Error::NoRevival { .. } => "no_revival",
            Error::BracketEdge(_) => "bracket_edge",
            Error::ChirpRate { .. } => "chirp_rate",
            Error::KappaTuning { .. } => "kappa_tuning",
            Error::ModeOverlap(_) => "mode_overlap",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::UnphysicalChannel(_) => "unphysical_channel",
            Error::WrongConfiguration(_) => "wrong_configuration",
            Error::Oracle(_) => "oracle",
            Error::MissingCovariance(_) => "missing_covariance",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
