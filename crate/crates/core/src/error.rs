use std::path::PathBuf;

use crate::model::Diagnostic;
use crate::tensorgrad::GradError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}: schema violation: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("missing texture file {0}")]
    MissingTexture(PathBuf),
    #[error("missing frame file {0}")]
    MissingFrame(PathBuf),
    #[error("sprite {sprite}: track has {len} frames, expected {expected}")]
    TrackLength {
        sprite: usize,
        len: usize,
        expected: usize,
    },
    #[error("sprite {sprite} frame {frame}: opacity {value} outside [0,1]")]
    OpacityRange {
        sprite: usize,
        frame: usize,
        value: f32,
    },
    #[error("invalid composition: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("size mismatch: expected {expected:?}, got {got:?}")]
    SizeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("sprite {0} never visible")]
    NeverVisible(usize),
    #[error("sprite index {index} out of range 1..={count}")]
    SpriteIndex { index: usize, count: usize },
    #[error("the background sprite cannot be removed")]
    Background,
    #[error("sprite count mismatch: {pred} vs {gt}")]
    SpriteCount { pred: usize, gt: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: usize },
    #[error(transparent)]
    Grad(#[from] GradError),
}

fn join(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
