use thiserror::Error;

/// Errors raised by constructors and transforms in this crate.
///
/// Failed numerical checks are not errors: they come back as reports with a
/// status flag. Only operations whose preconditions cannot be met return one
/// of these.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("density is not integrable: {0}")]
    NonIntegrable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge on [{lo}, {hi}] (estimate {estimate:e}, error {error:e})")]
    Quadrature { lo: f64, hi: f64, estimate: f64, error: f64 },

    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("domain error while evaluating `{expr}` at {x}")]
    Domain { expr: String, x: f64 },

    #[error("rate function is not non-increasing near s = {s:e}")]
    NotMonotone { s: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("oscillation unavailable: {0}")]
    OscillationUnavailable(String),

    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),

    #[error("perturbed drift is not positive at x = {x} (value {value:e})")]
    PhiUNotPositive { x: f64, value: f64 },

    #[error("far-field drift inequality violated at x = {x} (excess {excess:e})")]
    FarFieldViolated { x: f64, excess: f64 },

    #[error("convolution density ratio appears unbounded (value {value:e} at x = {x})")]
    RatioUnbounded { x: f64, value: f64 },

    #[error("converse trick inapplicable: C * |grad w|^2 = {product} >= 1")]
    TrickInapplicable { product: f64 },

    #[error("weight is not integrable: {0}")]
    WeightNotIntegrable(String),

    #[error("rate stays bounded as s -> 0 (ordinary Poincare regime)")]
    RateBoundedAtZero,

    #[error("perturbation too large: s = {s} >= 1")]
    PerturbationTooLarge { s: f64 },

    #[error("integral diverges: {0}")]
    IntegralDiverges(String),

    #[error("set is too large for the capacity convention: mu(A) = {mass} > 1/2")]
    Infeasible { mass: f64 },

    #[error("grid too coarse: extrapolation moved the estimate by {relative_change:e}")]
    GridTooCoarse { relative_change: f64 },

    #[error("step too large: taming active on {fraction:.4} of steps")]
    StepTooLarge { fraction: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
