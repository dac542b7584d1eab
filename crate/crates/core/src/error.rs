use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid waveform parameters: {0}")]
    InvalidParams(String),
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("time {t} s outside [{start}, {end}] s")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("insufficient input: {0}")]
    InsufficientInput(String),
    #[error("loop not converged: {0}")]
    NotConverged(String),
    #[error("aggregation level mismatch: expected {expected}, got {got}")]
    WrongLevel { expected: String, got: String },
    #[error("no pulse above detection threshold")]
    NoDetection,
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("solver did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("cannot anchor synchronization: {0}")]
    NoAnchor(String),
    #[error("epoch ambiguity: {0}")]
    AmbiguousEpoch(String),
    #[error("range {l} m shorter than speaker height {h} m")]
    NegativeRange { l: f64, h: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable name for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::InsufficientInput(_) => "InsufficientInput",
            Error::NotConverged(_) => "NotConverged",
            Error::WrongLevel { .. } => "WrongLevel",
            Error::NoDetection => "NoDetection",
            Error::EmptyCandidates => "EmptyCandidates",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::NonConvergence(_) => "NonConvergence",
            Error::NoAnchor(_) => "NoAnchor",
            Error::AmbiguousEpoch(_) => "AmbiguousEpoch",
            Error::NegativeRange { .. } => "NegativeRange",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Wav(_) => "Wav",
            Error::Csv(_) => "Csv",
        }
    }
}
