//! Synthetic data: seeded multi-object RGB-D scenes with exact ground truth,
//! written in the BOP layout, and cut-and-paste training composites.

pub mod compose;
pub mod dataset;
pub mod error;
pub mod scene;
pub mod trainset;

pub use compose::{compose_training_image, Annotation, ComposeParams, Crop};
pub use dataset::{generate_dataset, write_bop_scene, write_models, DatasetSpec};
pub use error::{Result, SynthError};
pub use scene::{generate_scene, BackgroundPlane, InstanceGt, SceneSpec, SyntheticScene};
pub use trainset::{build_training_set, split_counts, TrainSetParams, TrainSetSummary};
