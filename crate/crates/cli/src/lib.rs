//! Orchestration of mask-restricted pose estimation: model libraries, the
//! detect pipeline and the `ppfpose` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod models;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use models::{build_models, load_library, LoadedModel, ModelLibrary};
pub use pipeline::{detect_image, estimate_from_cloud, estimate_pose, scene_cloud, run_detect, run_detect_with, Estimate, InstanceResult};
