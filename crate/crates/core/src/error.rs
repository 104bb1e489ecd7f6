use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by the numerical modules.
///
/// Configuration problems live in [`crate::config::ConfigError`]; everything
/// here is either an invalid parameter handed to a solver directly or a
/// numerical failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("pulse map did not reach a fixed point (residual {residual:e})")]
    NonConverged { residual: f64 },

    #[error(
        "relaxation at tau = {tau} ns did not converge by scaled time {t_reached} \
         (omega = {omega} rad/ns, drift = {drift:e})"
    )]
    NoConvergence {
        tau: f64,
        t_reached: f64,
        omega: f64,
        drift: f64,
    },

    #[error("omega = {omega} rad/ns left the search bracket +/-{bracket} rad/ns at tau = {tau} ns")]
    BracketEscape { tau: f64, omega: f64, bracket: f64 },

    #[error("probability reached the grid boundary ({boundary_mass:e} of total mass) at t = {t} ns")]
    GridTooSmall { boundary_mass: f64, t: f64 },

    #[error("stable time step {dt_required:e} ns is below the floor {dt_floor:e} ns")]
    CflViolation { dt_required: f64, dt_floor: f64 },

    #[error("trajectory became non-finite at t = {t} ns")]
    Diverged { t: f64 },
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "VALIDATION_ERROR",
            Error::NonConverged { .. } => "NON_CONVERGED",
            Error::NoConvergence { .. } => "NO_CONVERGENCE",
            Error::BracketEscape { .. } => "BRACKET_ESCAPE",
            Error::GridTooSmall { .. } => "GRID_TOO_SMALL",
            Error::CflViolation { .. } => "CFL_VIOLATION",
            Error::Diverged { .. } => "NUMERIC_OVERFLOW",
        }
    }

    /// The delay at which a solver failed, when known.
    pub fn tau(&self) -> Option<f64> {
        match self {
            Error::NoConvergence { tau, .. } | Error::BracketEscape { tau, .. } => Some(*tau),
            _ => None,
        }
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
