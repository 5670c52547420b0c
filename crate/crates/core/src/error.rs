use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid tree parameters: {0}")]
    InvalidParams(String),
    #[error("vertex {0} out of range (tree has {1} vertices)")]
    VertexOutOfRange(usize, usize),
    #[error("operation requires a Bethe truncation")]
    WrongTreeKind,
    #[error("depth {depth} violates strict tiling (need depth = {m0} mod {period})")]
    TilingCongruence { depth: usize, m0: usize, period: usize },
    #[error("operation requires a strict block tiling")]
    NonStrictTiling,
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("empty head list")]
    NoHeads,
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dense size {n} exceeds cap {cap}")]
    DenseCapExceeded { n: usize, cap: usize },
    #[error("spectral parameter must have positive imaginary part, got {0}")]
    RealSpectralParameter(f64),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("invalid interval [{0}, {1})")]
    InvalidInterval(f64, f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("inertia factorization broke down at shift {0}")]
    InertiaBreakdown(f64),
    #[error("trial {trial} failed: {source}")]
    TrialFailed { trial: u64, source: alloc::boxed::Box<Error> },
}
