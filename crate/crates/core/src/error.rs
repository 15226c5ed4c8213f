use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("{name} = {value} is outside its valid range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("audio clip has {got} samples, at least {needed} required")]
    ClipTooShort { needed: usize, got: usize },

    #[error("segment selection needs at least {needed} samples, clip has {got}")]
    SegmentTooShort { needed: usize, got: usize },

    #[error("sample rate {got} Hz does not match the expected {expected} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },

    #[error("unsupported audio format: {0}")]
    UnsupportedAudio(String),

    #[error("requested {requested} pairs but only {max} qualifying pairs exist")]
    TooManyPairs { requested: usize, max: usize },

    #[error("no qualifying pairs: {0}")]
    NoQualifyingPairs(&'static str),

    #[error("tag vector required when mu = {mu} > 0")]
    MissingTags { mu: f64 },

    #[error("song {id}: play-count series has {len} days, day {needed} after release is required")]
    SeriesTooShort { id: String, len: usize, needed: usize },

    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("need at least {needed} songs, got {got}")]
    TooFewSongs { needed: usize, got: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
