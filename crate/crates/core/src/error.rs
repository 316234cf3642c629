use std::path::PathBuf;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("input shorter than one segment: {frames} frames (need at least 128)")]
    TooShort { frames: usize },

    #[error("waveform shorter than one analysis window: {len} samples (need {window})")]
    WaveformTooShort { len: usize, window: usize },

    #[error("unsupported sample rate {0} Hz (expected 44100)")]
    SampleRate(u32),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("unknown event name {name:?} ({path}:{line})")]
    UnknownEvent { name: String, path: PathBuf, line: usize },

    #[error("duplicate clip id {0:?}")]
    DuplicateClip(String),

    #[error("density requires ground truth (clip {0:?} has none)")]
    NoGroundTruth(String),

    #[error("not enough eligible negatives for event {event:?}: need {needed}, have {available}")]
    NotEnoughNegatives {
        event: String,
        needed: usize,
        available: usize,
    },

    #[error("AP undefined: no positive labels")]
    NoPositives,

    #[error("AUC undefined: labels contain a single class")]
    SingleClass,

    #[error("batch norm {0:?} has uninitialized running statistics")]
    UninitializedNorm(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}

/// Attach a path to an I/O failure.
pub(crate) trait IoContext<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::io(context(), e))
    }
}
