use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// The bounded-distance decoder found an inconsistent error locator.
    #[error("BCH decode failure")]
    DecodeFailure,

    /// At least one fuzzy-extractor block could not be decoded.
    #[error("key reconstruction failed in block {block}")]
    ReconstructFailure { block: usize },

    #[error("device is not powered up")]
    NotPoweredUp,

    #[error("device `{0}` is already enrolled")]
    DuplicateDevice(String),

    #[error("device `{0}` is not enrolled")]
    UnknownDevice(String),

    #[error("linear system is not solvable over Z_q: rank {rank} of {needed} after {rows} rows")]
    Unsolvable { rank: usize, needed: usize, rows: usize },

    /// The target offers no caller-chosen ciphertext interface.
    #[error("attack blocked: oracle only accepts counter-seeded compact challenges")]
    AttackBlocked,

    /// The solved secret fails to satisfy a collected equation.
    #[error("linear system is inconsistent at row {row}")]
    InconsistentSystem { row: usize },

    #[error("oracle produced no 0->1 response transition")]
    NoTransition,

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("polynomial mismatch: dataset uses `{found}`, this build uses `{expected}`")]
    PolynomialMismatch { expected: String, found: String },

    #[error("manifest hash mismatch: header says {expected}, records hash to {actual}")]
    HashMismatch { expected: String, actual: String },

    #[error("i/o error{}: {message}", position.map(|p| format!(" at record {p}")).unwrap_or_default())]
    Io { position: Option<usize>, message: String },
}

impl Error {
    pub(crate) fn length(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::LengthMismatch { what, expected, actual }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(position: Option<usize>, err: std::io::Error) -> Self {
        Error::Io {
            position,
            message: err.to_string(),
        }
    }
}
