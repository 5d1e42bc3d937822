use thiserror::Error;

use crate::causal::LightlikeCurve;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain{}", fmt_param(*.s))]
    OutOfDomain { point: Vec<f64>, s: Option<f64> },

    #[error("metric is degenerate at {point:?}")]
    DegenerateMetric { point: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("unknown chart `{name}`; valid names: {}", .valid.join(", "))]
    UnknownChart { name: String, valid: Vec<String> },

    #[error("vector is not lightlike (normalized residual {residual:e})")]
    NotNull { residual: f64 },

    #[error("vector is not future-pointing")]
    NotFuturePointing,

    #[error("curve endpoint {endpoint:?} is not on the observer line over {observer:?}")]
    NotOnObserver { endpoint: Vec<f64>, observer: Vec<f64> },

    #[error("arrival time {t} outside observer range ({lo}, {hi})")]
    OutsideWorldline { t: f64, lo: f64, hi: f64 },

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("time lifts disagree by {diff:e}")]
    LiftMismatch { diff: f64 },

    #[error("local minimizer failed: {reason}")]
    LocalMinimizerFailure {
        reason: String,
        fallback: Box<LightlikeCurve>,
    },

    #[error("geodesic refinement failed after {iterations} Newton steps (miss {miss:e})")]
    RefinementFailure { iterations: usize, miss: f64 },

    #[error("arrival time increased from {before} to {after}")]
    MonotonicityViolated { before: f64, after: f64 },

    #[error("Riemannian length {length} exceeds cap {cap}: pseudo-coercivity guard")]
    PseudoCoercivity {
        length: f64,
        cap: f64,
        tau_history: Vec<f64>,
    },

    #[error("curve left the region at {point:?}")]
    RegionExit {
        point: Vec<f64>,
        tau_history: Vec<f64>,
    },

    #[error("shortening did not converge in {iterations} rounds")]
    NonConvergence {
        iterations: usize,
        tau_history: Vec<f64>,
    },

    #[error("index-form basis is degenerate (Gram condition {condition:e})")]
    BasisDegenerate { condition: f64 },
}

fn fmt_param(s: Option<f64>) -> String {
    match s {
        Some(s) => format!(" at s = {s}"),
        None => String::new(),
    }
}

impl Error {
    /// Arrival-time history carried by aborted shortening runs.
    pub fn tau_history(&self) -> Option<&[f64]> {
        match self {
            Error::PseudoCoercivity { tau_history, .. }
            | Error::RegionExit { tau_history, .. }
            | Error::NonConvergence { tau_history, .. } => Some(tau_history),
            _ => None,
        }
    }

    /// True for aborts raised by the region and coercivity guards.
    pub fn is_guard_abort(&self) -> bool {
        matches!(
            self,
            Error::PseudoCoercivity { .. } | Error::RegionExit { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
