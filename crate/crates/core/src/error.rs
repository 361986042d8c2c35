use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid payload position `{0}`")]
    InvalidPosition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical blow-up at t = {time:.6} s: {detail}")]
    NumericalBlowup { time: f64, detail: String },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("unknown channel {0}")]
    UnknownChannel(usize),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("sample-rate mismatch: expected {expected} Hz, found {found} Hz")]
    RateMismatch { expected: f64, found: f64 },

    #[error("hash mismatch for {path}: expected {expected}, found {found}")]
    HashMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::InvalidPosition(_) => "InvalidPosition",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NumericalBlowup { .. } => "NumericalBlowup",
            Error::InsufficientSamples(_) => "InsufficientSamples",
            Error::ChannelMismatch(_) => "ChannelMismatch",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::SingularSystem(_) => "SingularSystem",
            Error::UnknownChannel(_) => "UnknownChannel",
            Error::Format { .. } => "FormatError",
            Error::RateMismatch { .. } => "RateMismatch",
            Error::HashMismatch { .. } => "HashMismatch",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
