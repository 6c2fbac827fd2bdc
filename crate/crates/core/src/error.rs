use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("matrix is not square: {rows} rows, row {row} has {cols} entries")]
    NotSquare { rows: usize, row: usize, cols: usize },

    #[error("exact mode supports n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("vertex {index} is isolated (degree 0)")]
    IsolatedVertex { index: usize },

    #[error(
        "no equilibrium guaranteed: requires ||W||_L2 < 1 + (cT)^-1, \
         got ||W||_L2 = {norm:.6} >= bound {bound:.6} (grid L = {resolution})"
    )]
    Solvability { norm: f64, bound: f64, resolution: usize },

    #[error("spectral radius of alpha*K is {radius:.6} >= 1; resolvent undefined")]
    SpectralRadius { radius: f64 },

    #[error("linear system is singular")]
    Singular,

    #[error("mass drift {drift:e} exceeds limit at step {step}, label cell {label}")]
    MassDrift { step: usize, label: usize, drift: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Short machine-readable tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NegativeEntry { .. } => "negative_entry",
            Error::NotSquare { .. } => "not_square",
            Error::TooLarge { .. } => "too_large",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::IsolatedVertex { .. } => "isolated_vertex",
            Error::Solvability { .. } => "solvability",
            Error::SpectralRadius { .. } => "spectral_radius",
            Error::Singular => "singular",
            Error::MassDrift { .. } => "mass_drift",
            Error::Unsupported(_) => "unsupported",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
