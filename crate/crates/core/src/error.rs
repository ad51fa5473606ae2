use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `|p + q ξ_α ξ_β − ξ_α|` fell below the degeneracy threshold; the contour
    /// radius is too large for the jump bias.
    #[error("degenerate scattering denominator |{magnitude:e}| (contour radius too large?)")]
    DegenerateDenominator { magnitude: f64 },

    #[error("unsupported particle number N = {n}: {reason}")]
    UnsupportedSize { n: usize, reason: &'static str },

    #[error("integration dimension {dim} exceeds the supported maximum of {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("integrand is not finite on the contour (pole on the contour?)")]
    NonFiniteIntegrand,

    #[error("inadmissible contour: {0}")]
    InvalidContour(String),

    /// Probability mass reached the boundary of the truncated lattice window.
    #[error("window too small: {escaped:e} of the mass reached the boundary (budget {budget:e})")]
    WindowTooSmall { escaped: f64, budget: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
