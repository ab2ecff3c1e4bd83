use thiserror::Error;

/// Errors produced by the spectral representation, the heat operators and
/// the iteration machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spectral grid needs at least one mode")]
    EmptyGrid,

    #[error("eigenvalues must be strictly positive and nondecreasing (violated at mode {mode})")]
    InvalidEigenvalues { mode: usize },

    #[error("coefficient vector has {len} entries, grid has {expected} modes")]
    LengthMismatch { len: usize, expected: usize },

    #[error("non-finite coefficient at mode {mode}")]
    NonFiniteCoefficient { mode: usize },

    #[error("operands live on different spectral grids")]
    GridMismatch,

    #[error("H^{s} norm overflowed at mode {mode}")]
    NormOverflow { mode: usize, s: f64 },

    #[error(
        "spectral function returned a non-finite value at mode {mode} (lambda = {eigenvalue})"
    )]
    SpectralFunctionDomain { mode: usize, eigenvalue: f64 },

    #[error("non-finite evaluation point")]
    NonFinitePoint,

    #[error("time horizon must be positive, got {horizon}")]
    InvalidHorizon { horizon: f64 },

    #[error("gamma = {gamma} outside the admissible open interval (0, {upper})")]
    GammaOutOfRange { gamma: f64, upper: f64 },

    #[error(
        "backward amplification overflowed at mode {mode}: exp({exponent}) times the data coefficient is not finite"
    )]
    OracleOverflow { mode: usize, exponent: f64 },

    #[error("segmenting diagonal d_{k} = {d} outside [0, 1]")]
    ScheduleOutOfRange { k: usize, d: f64 },

    #[error("invalid Mann matrix row {row}: {detail}")]
    InvalidMatrixRow { row: usize, detail: String },

    #[error("Mann matrix has {rows} rows but iteration reached step {needed}")]
    MatrixExhausted { rows: usize, needed: usize },

    #[error("noise level must be nonnegative, got {eps}")]
    NegativeNoiseLevel { eps: f64 },

    #[error("stopping rule misconfigured: {0}")]
    StoppingConfig(String),

    #[error("log source filter undefined: spectral value {value} at mode {mode} is not below e")]
    SourceFilterDomain { mode: usize, value: f64 },

    #[error("rate fit rejected: {0}")]
    RateFitInput(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
