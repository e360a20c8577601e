//! Point-pair features and the hashed model description.

mod feature;
mod model;
mod serialize;

pub use feature::{compute_ppf, local_alpha, quantize_ppf, CanonicalFrame, Ppf, PpfKey, Quantizer};
pub use model::{build_model, from_sampled_cloud, ModelEntry, PpfModel, PpfTable, DEFAULT_N_ANGLE, DEFAULT_TAU_D};
pub use serialize::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub(crate) use feature::rot_x;
