use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("unsupported wav encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("signal contains non-finite samples")]
    NonFinite,

    #[error("signal is silent, level is undefined")]
    SilentSignal,

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid stft configuration: {0}")]
    InvalidStft(String),

    #[error("invalid filter design: {0}")]
    InvalidFilter(String),

    #[error("gain {gain_db} dB at {freq_hz} Hz outside bounds [{min}, {max}]")]
    GainOutOfBounds {
        freq_hz: f64,
        gain_db: f64,
        min: f64,
        max: f64,
    },

    #[error("malformed audiogram: {0}")]
    MalformedAudiogram(String),

    #[error("malformed fitting: {0}")]
    MalformedFitting(String),

    #[error("unknown audiogram name `{0}`")]
    UnknownAudiogram(String),

    #[error("hearing loss {hl_db} dB in channel {channel} is not below the loudness threshold {theta_db} dB")]
    UnsupportedSeverity {
        channel: usize,
        hl_db: f64,
        theta_db: f64,
    },

    #[error("smearing matrix: {0}")]
    Smearing(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite loss for utterance `{utterance}`")]
    NonFiniteLoss { utterance: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("utterance `{id}` is too short: {len} samples, need at least {min}")]
    TooShort { id: String, len: usize, min: usize },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("noisy files without a clean counterpart: {}", .0.join(", "))]
    OrphanFiles(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed table: {0}")]
    MalformedTable(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
