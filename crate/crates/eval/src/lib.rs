//! Evaluation for mask-restricted pose estimation: symmetry-aware pose
//! errors, average recall, detection mAP, and the BOP results CSV.

pub mod bop_csv;
pub mod detection;
pub mod error;
pub mod pose_error;
pub mod recall;
pub mod results;

pub use bop_csv::{read_bop_csv, write_bop_csv, BopResult};
pub use detection::{map_at_iou, mask_iou, select_best, CandidateModel, Detection, DetectionSet, MapReport};
pub use error::{EvalError, Result};
pub use pose_error::{mspd, mssd};
pub use recall::{average_recall, InstanceError, PoseErrorReport, Thresholds};
