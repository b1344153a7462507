use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required header field `{0}`")]
    MissingField(&'static str),
    #[error("header field `{field}` has invalid value `{value}`")]
    InvalidField { field: String, value: String },
    #[error("header declares {bands} bands but lists {wavelengths} wavelengths")]
    WavelengthCountMismatch { bands: usize, wavelengths: usize },
    #[error("wavelengths must be strictly increasing (index {index})")]
    NonMonotonicWavelengths { index: usize },
    #[error("raw data is {actual} bytes, expected {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value in input at element {index}")]
    NanInInput { index: usize },
    #[error("not an 8-bit binary PGM/PPM stream: {0}")]
    BadMagic(String),
    #[error("image dimensions {width}x{height} overflow or exceed the payload")]
    DimensionOverflow { width: usize, height: usize },
    #[error("label {value} outside 0..{classes} at pixel {index}")]
    LabelOutOfRange { value: u8, classes: usize, index: usize },
    #[error("no cubes supplied")]
    EmptyCubeList,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("band count mismatch: expected {expected}, got {actual}")]
    BandMismatch { expected: usize, actual: usize },
    #[error("class {class} has {count} samples at band {band}, need at least 2")]
    InsufficientSamples { class: u8, band: usize, count: u64 },
    #[error("need at least {needed} rows, got {actual}")]
    TooFewRows { needed: usize, actual: usize },
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("score table is empty")]
    EmptyScoreTable,
    #[error("no band of the grid lies within {half_width} nm of {cwl} nm")]
    EmptyWindow { cwl: f64, half_width: f64 },
    #[error("band index {index} out of range for {bands} bands")]
    IndexOutOfRange { index: usize, bands: usize },
    #[error("no classes included in the mean")]
    NoIncludedClasses,
    #[error("report key mismatch: {0}")]
    KeyMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("duplicate path in manifest: {0}")]
    DuplicatePath(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configuration, flags) rather
    /// than by data or the filesystem. The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidConfig(_) | Error::KeyMismatch(_))
    }
}
