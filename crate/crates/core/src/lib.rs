//! Mask-restricted point-pair-feature pose estimation.
//!
//! Geometry is generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the scalar for the common case.

pub mod bop;
pub mod cloud;
pub mod depth;
pub mod error;
pub mod geom;
pub mod hash;
pub mod icp;
pub mod image;
pub mod keypoints;
pub mod linalg;
pub mod matching;
pub mod ply;
pub mod render;
pub mod ppf;
pub mod sampling;
pub mod scalar;
pub mod shapes;
pub mod spatial;
pub mod symmetry;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3d = geom::Vec3<f64>;
pub type Vec3f = geom::Vec3<f32>;
pub type Posed = geom::RigidPose<f64>;
pub type Posef = geom::RigidPose<f32>;
pub type Intrinsicsd = geom::CameraIntrinsics<f64>;
pub type Intrinsicsf = geom::CameraIntrinsics<f32>;
pub type PointCloudd = cloud::PointCloud<f64>;
pub type PointCloudf = cloud::PointCloud<f32>;
pub type ObjectModeld = cloud::ObjectModel<f64>;
pub type ObjectModelf = cloud::ObjectModel<f32>;
pub type PpfModeld = ppf::PpfModel<f64>;
pub type PpfModelf = ppf::PpfModel<f32>;
