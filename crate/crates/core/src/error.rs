use num_complex::Complex64 as C64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpectralError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("step size underflow at x = {x} for lambda = {lambda}")]
    StepUnderflow { x: f64, lambda: C64 },

    #[error("integrator exceeded {steps} steps at x = {x} for lambda = {lambda}")]
    MaxSteps { x: f64, steps: usize, lambda: C64 },

    #[error("{} of {} batch evaluations failed; first: {}", failures.len(), total, failures[0].1)]
    Batch {
        total: usize,
        failures: Vec<(usize, SpectralError)>,
    },

    #[error("zero on contour: min |f| = {min_abs:e} below threshold {threshold:e}")]
    ZeroOnContour { min_abs: f64, threshold: f64 },

    #[error("winding number did not stabilise after {refinements} refinements")]
    WindingUnstable { refinements: usize },

    #[error("annulus {k}: expected {expected} zeros, counted {found}")]
    CountMismatch { k: i64, expected: i64, found: i64 },

    #[error("root search failed in annulus {k}: {reason}")]
    RootNotFound { k: i64, reason: String },

    #[error("blow-up during y-evolution at y = {y}: coefficient magnitude {magnitude:e}")]
    BlowUp { y: f64, magnitude: f64 },

    #[error("divisor tracking lost for annulus {k} at parameter {t}")]
    TrackingLost { k: i64, t: f64 },

    #[error("divisor is not tame: annuli {k1} and {k2} carry coincident points")]
    NotTame { k1: i64, k2: i64 },

    #[error("ill-conditioned system ({what}), condition estimate {cond:e}")]
    IllConditioned { what: String, cond: f64 },

    #[error("iteration did not converge after {iterations} steps, defect {defect:e}")]
    NotConverged { iterations: usize, defect: f64 },

    #[error("{0}")]
    Degenerate(String),
}

impl SpectralError {
    /// True when the failure stems from malformed input rather than from the
    /// numerics; used by the CLI to choose its exit code.
    pub fn is_input_error(&self) -> bool {
        matches!(self, SpectralError::InvalidInput(_))
    }
}
