//! Distance-aware quality assessment for binary voxel segmentations.
//!
//! The central metric is the surface consistency coefficient (SCC): the mean
//! logistic weight of each misclassified voxel's distance to the ground-truth
//! surface. It reads near 0 when errors hug the surface and near 1 when they
//! sit beyond the chosen proximity range, independently of how many errors
//! there are.
//!
//! Around it the crate provides:
//!
//! * [`volume`]: dense binary volumes, confusion counts and the `SGV1` file format,
//! * [`distance`]: exact squared Euclidean distance transforms and ball morphology,
//! * [`metrics`]: error rate, Dice, Matthews correlation, average Hausdorff distance and SCC,
//! * [`geometry`]: Boolean-model and non-overlapping particle systems,
//! * [`inject`]: systematic error injectors with exact error counts,
//! * [`harness`]: config-driven sweeps that write plot-ready CSV.
//!
//! Real-valued code is generic over [`Real`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below fix the scalar for the common cases.

pub mod distance;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod inject;
pub mod io;
pub mod metrics;
mod scalar;
pub mod volume;

pub use distance::{boundary_distance, dilate_ball, erode_ball, squared_edt, DistanceField, Source};
pub use error::{Error, Result};
pub use inject::{ErrorKind, ErrorSpec};
pub use scalar::Real;
pub use volume::{confusion_counts, error_voxels, ConfusionCounts, Coord, GridDims, VoxelGrid};

pub type WeightFunction64 = metrics::WeightFunction<f64>;
pub type WeightFunction32 = metrics::WeightFunction<f32>;
pub type MetricReport64 = metrics::MetricReport<f64>;
pub type MetricReport32 = metrics::MetricReport<f32>;
pub type ParticleShape64 = geometry::ParticleShape<f64>;
pub type ParticleShape32 = geometry::ParticleShape<f32>;
pub type Rotation64 = geometry::Rotation<f64>;
pub type Rotation32 = geometry::Rotation<f32>;
pub type GeometrySpec64 = geometry::GeometrySpec<f64>;
