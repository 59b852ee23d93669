use thiserror::Error;

use crate::inject::ErrorKind;
use crate::volume::{ConfusionCounts, GridDims};

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "invalid grid dimensions {nx}x{ny}x{nz}: every axis needs at least one voxel and the total must be addressable"
    )]
    InvalidDims { nx: usize, ny: usize, nz: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: GridDims, right: GridDims },

    #[error("label byte {value} at voxel {index} is not 0 or 1")]
    InvalidLabel { index: usize, value: u8 },

    #[error("voxel ({x}, {y}, {z}) is outside a {dims} grid", x = coord[0], y = coord[1], z = coord[2])]
    OutOfBounds { coord: [usize; 3], dims: GridDims },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("distance undefined: the source set is empty")]
    EmptySource,

    #[error(
        "ground truth has a single phase ({foreground} of {total} voxels foreground); boundary distance is undefined"
    )]
    SinglePhase { foreground: usize, total: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{metric} is undefined for {counts}")]
    Undefined { metric: &'static str, counts: ConfusionCounts },

    #[error("infeasible {kind} injection: {target} errors requested but only {available} candidate voxels")]
    Infeasible { kind: ErrorKind, target: usize, available: usize },

    #[error(
        "non-overlapping placement stopped after {proposals} proposals at density {achieved:.6} (target {target})"
    )]
    BudgetExhausted { achieved: f64, target: f64, proposals: u64 },

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {inner}", path.display())]
    AtPath { path: std::path::PathBuf, inner: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attaches the file the error concerns.
    pub fn at(path: impl Into<std::path::PathBuf>, source: Error) -> Self {
        Error::AtPath { path: path.into(), inner: Box::new(source) }
    }
}
