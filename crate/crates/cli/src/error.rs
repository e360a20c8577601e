use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ppf_core::Error),
    #[error(transparent)]
    Eval(#[from] ppf_eval::EvalError),
    #[error(transparent)]
    Synth(#[from] ppf_synth::SynthError),
    #[error("detections reference object {0}, which has no model")]
    UnknownObject(u32),
    #[error("missing model file {}", .0.display())]
    MissingModel(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CliError>;
