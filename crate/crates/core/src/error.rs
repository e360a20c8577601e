use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("PLY: {0}")]
    Ply(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("image id {image_id} not present in {path}")]
    MissingImage { image_id: u32, path: PathBuf },
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("coincident points have no point-pair feature")]
    CoincidentPoints,
    #[error("scene sampled at {scene} m but model expects {model} m")]
    SamplingMismatch { scene: f64, model: f64 },
    #[error("no correspondences within the distance gate")]
    NoCorrespondences,
    #[error("object lies entirely behind the camera")]
    BehindCamera,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
