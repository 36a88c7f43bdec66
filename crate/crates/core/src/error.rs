use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension {0} is not supported (expected 2, 3 or 4)")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("point lies on the singular set (|y| = {radius})")]
    OnSingularSet { radius: f64 },

    #[error("exponent equation yields alpha = {alpha}, outside (0, 1)")]
    InvalidExponent { alpha: f64 },

    #[error("convexity margin {margin:e} cannot be achieved (base min eigenvalue {base_min:e})")]
    ConvexityMarginViolated { margin: f64, base_min: f64 },

    #[error("integrand returned a non-finite value at {point:?}")]
    NonFiniteSample { point: Vec<f64> },

    #[error("fitted exponent {exponent} is not singular")]
    NotSingular { exponent: f64 },

    #[error("divergence is not available for this field")]
    DivergenceUnavailable,

    #[error("negative input {value:e} at {point:?}")]
    NegativeInput { value: f64, point: Vec<f64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
