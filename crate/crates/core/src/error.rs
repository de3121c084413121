use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("{what} is not Hermitian (max |M - M†| = {residual:.3e})")]
    NotHermitian { what: String, residual: f64 },

    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch { what: String, expected: usize, found: usize },

    #[error("expected {expected} control parameters, got {found}")]
    ParameterCount { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("loop is not closed (endpoint gap {gap:.3e})")]
    OpenLoop { gap: f64 },

    #[error("level crossing at sample {sample}: minimal gap {gap:.3e}")]
    LevelCrossing { sample: usize, gap: f64 },

    #[error("spectrum drifts at sample {sample}: deviation {deviation:.3e}")]
    SpectrumDrift { sample: usize, deviation: f64 },

    #[error("level {level} does not exist (spectrum has {count} levels)")]
    NoSuchLevel { level: usize, count: usize },

    #[error("no chart exceeds the threshold {threshold:.3e} (best |det| = {best:.3e})")]
    NoValidChart { best: f64, threshold: f64 },

    #[error("chart is singular here (|det(H⊥ - E)| = {det:.3e})")]
    ChartInvalid { det: f64 },

    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },

    #[error("determinant is not 1 (got {re:.6} + {im:.6}i)")]
    DeterminantNotOne { re: f64, im: f64 },

    #[error("overlap at step {step} is rank deficient (smallest singular value {singular_value:.3e}); sample the loop more finely")]
    RankDeficient { step: usize, singular_value: f64 },

    #[error("time step too large (norm drift {drift:.3e}); try at least {suggested_steps} steps")]
    StepTooLarge { drift: f64, suggested_steps: usize },

    #[error("Fock sector dimension {dim} exceeds the cap {cap}")]
    SectorTooLarge { dim: usize, cap: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("holonomies do not share a base point: {0}")]
    BasePointMismatch(String),

    #[error("segment bookkeeping is inconsistent: {0}")]
    MissingOverlap(String),
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Syntax { line: err.line(), column: err.column(), message: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
