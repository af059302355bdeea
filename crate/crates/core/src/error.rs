use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A ray is too steep for the paraxial thin-lens model.
    #[error("paraxial bound exceeded: slope {slope:.4} rad > {limit} rad")]
    Paraxial { slope: f64, limit: f64 },

    /// The requested transverse momentum does not propagate in the medium.
    #[error("evanescent momentum: |q| = {q:.6e} rad/m exceeds k = {k:.6e} rad/m")]
    Evanescent { q: f64, k: f64 },

    /// A kernel grid is too small to contain the transition probability.
    #[error("kernel truncated: boundary value is {ratio:.3e} of the peak (limit {limit:.0e})")]
    Truncation { ratio: f64, limit: f64 },

    /// A linear arm map cannot be inverted.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// The quasi-Monte Carlo domain misses too much kernel mass.
    #[error("integration domain covers only {coverage:.6} of the kernel mass")]
    Domain { coverage: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The shift-invariant fast path cannot represent a phase object.
    #[error("mask carries a nonzero phase; use the shift-variant convolution")]
    PhaseObject,

    #[error("unsupported misalignment: {0}")]
    UnsupportedMisalignment(String),

    #[error("kernel ({kernel_nx}x{kernel_ny}) is larger than the image ({image_nx}x{image_ny})")]
    KernelMismatch { kernel_nx: usize, kernel_ny: usize, image_nx: usize, image_ny: usize },

    #[error("feature not found: {0}")]
    FeatureNotFound(String),

    #[error("no bracket: R never crosses {threshold} for d in [{d_min_um:.2}, {d_max_um:.2}] um")]
    NoBracket { threshold: f64, d_min_um: f64, d_max_um: f64 },

    /// Configuration document does not match the schema.
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    /// Configuration is well formed but physically invalid.
    #[error("physics error at `{path}`: {message}")]
    Physics { path: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Paraxial { .. } => "paraxial",
            Error::Evanescent { .. } => "evanescent",
            Error::Truncation { .. } => "truncation",
            Error::NoSolution(_) => "no_solution",
            Error::Domain { .. } => "domain",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::PhaseObject => "phase_object",
            Error::UnsupportedMisalignment(_) => "unsupported_misalignment",
            Error::KernelMismatch { .. } => "kernel_mismatch",
            Error::FeatureNotFound(_) => "feature_not_found",
            Error::NoBracket { .. } => "no_bracket",
            Error::Schema { .. } => "schema",
            Error::Physics { .. } => "physics",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::Parse(_) => "parse",
            Error::Range(_) => "range",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn physics(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Physics { path: path.into(), message: message.into() }
    }
}
