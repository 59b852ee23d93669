//! Dense binary voxel volumes and confusion counts.
//!
//! Voxels are stored one byte each (0 = background, 1 = foreground) in
//! x-fastest order: `index = x + nx * (y + ny * z)`. A 2D image is a volume
//! with `nz == 1`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel coordinate `[x, y, z]`.
pub type Coord = [usize; 3];

/// Chunk length used by every parallel reduction over voxels. Fixed so that
/// floating-point partial sums do not depend on the thread count.
pub(crate) const REDUCE_CHUNK: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct GridDims {
    nx: usize,
    ny: usize,
    nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let valid = nx >= 1
            && ny >= 1
            && nz >= 1
            && nx.checked_mul(ny).and_then(|p| p.checked_mul(nz)).is_some_and(|n| n <= isize::MAX as usize);
        if valid {
            Ok(Self { nx, ny, nz })
        } else {
            Err(Error::InvalidDims { nx, ny, nz })
        }
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Total voxel count |X|.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Never true; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: Coord) -> bool {
        c[0] < self.nx && c[1] < self.ny && c[2] < self.nz
    }

    #[inline]
    pub fn index(&self, c: Coord) -> usize {
        c[0] + self.nx * (c[1] + self.ny * c[2])
    }

    #[inline]
    pub fn coord(&self, index: usize) -> Coord {
        let x = index % self.nx;
        let rest = index / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }
}

impl TryFrom<[usize; 3]> for GridDims {
    type Error = Error;

    fn try_from(v: [usize; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<GridDims> for [usize; 3] {
    fn from(d: GridDims) -> Self {
        d.as_array()
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Immutable binary label volume.
#[derive(Clone, PartialEq, Eq)]
pub struct VoxelGrid {
    dims: GridDims,
    labels: Vec<u8>,
}

impl fmt::Debug for VoxelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VoxelGrid").field("dims", &self.dims).field("foreground", &self.foreground_count()).finish()
    }
}

impl VoxelGrid {
    /// Wraps a label buffer, checking its length and that every byte is 0 or 1.
    pub fn from_labels(dims: GridDims, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::Format(format!(
                "expected {} labels for a {} grid, got {}",
                dims.len(),
                dims,
                labels.len()
            )));
        }
        if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidLabel { index, value });
        }
        Ok(Self { dims, labels })
    }

    pub fn from_bools(dims: GridDims, labels: &[bool]) -> Result<Self> {
        Self::from_labels(dims, labels.iter().map(|&b| u8::from(b)).collect())
    }

    pub fn filled(dims: GridDims, foreground: bool) -> Self {
        Self { dims, labels: vec![u8::from(foreground); dims.len()] }
    }

    pub fn from_fn(dims: GridDims, mut f: impl FnMut(Coord) -> bool) -> Self {
        let labels = (0..dims.len()).map(|i| u8::from(f(dims.coord(i)))).collect();
        Self { dims, labels }
    }

    /// Builds a grid whose foreground is exactly the given linear indices.
    pub fn from_indices(dims: GridDims, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut labels = vec![0u8; dims.len()];
        for i in indices {
            if i >= labels.len() {
                return Err(Error::OutOfBounds { coord: dims.coord(i), dims });
            }
            labels[i] = 1;
        }
        Ok(Self { dims, labels })
    }

    /// Internal constructor for buffers already known to hold only 0/1.
    pub(crate) fn from_raw_unchecked(dims: GridDims, labels: Vec<u8>) -> Self {
        debug_assert_eq!(labels.len(), dims.len());
        debug_assert!(labels.iter().all(|&v| v <= 1));
        Self { dims, labels }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    #[inline]
    pub fn is_foreground(&self, index: usize) -> bool {
        self.labels[index] != 0
    }

    pub fn get(&self, c: Coord) -> Option<bool> {
        self.dims.contains(c).then(|| self.labels[self.dims.index(c)] != 0)
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.par_chunks(REDUCE_CHUNK).map(|c| c.iter().filter(|&&v| v != 0).count()).sum()
    }

    pub fn background_count(&self) -> usize {
        self.len() - self.foreground_count()
    }

    /// Foreground fraction of all voxels.
    pub fn density(&self) -> f64 {
        self.foreground_count() as f64 / self.len() as f64
    }

    pub fn complement(&self) -> Self {
        Self { dims: self.dims, labels: self.labels.par_iter().map(|&v| v ^ 1).collect() }
    }

    /// Flips each listed voxel once; repeated coordinates are flipped once.
    pub fn flip_voxels(&self, coords: &[Coord]) -> Result<Self> {
        let mut indices = Vec::with_capacity(coords.len());
        for &c in coords {
            if !self.dims.contains(c) {
                return Err(Error::OutOfBounds { coord: c, dims: self.dims });
            }
            indices.push(self.dims.index(c));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(self.flip_sorted_indices(&indices))
    }

    /// Flips the given strictly ascending linear indices.
    pub(crate) fn flip_sorted_indices(&self, indices: &[usize]) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        let mut labels = self.labels.clone();
        for &i in indices {
            labels[i] ^= 1;
        }
        Self { dims: self.dims, labels }
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { left: self.dims, right: other.dims })
        }
    }
}

/// TP/FP/FN/TN tallies of a prediction against a ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Size of the error set |E|.
    pub fn errors(&self) -> u64 {
        self.fp + self.fn_
    }

    /// The counts seen when foreground and background are swapped in both grids.
    pub fn label_swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl fmt::Display for ConfusionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TP={} FP={} FN={} TN={}", self.tp, self.fp, self.fn_, self.tn)
    }
}

pub fn confusion_counts(gt: &VoxelGrid, pr: &VoxelGrid) -> Result<ConfusionCounts> {
    gt.check_same_dims(pr)?;
    let counts = gt
        .labels
        .par_chunks(REDUCE_CHUNK)
        .zip(pr.labels.par_chunks(REDUCE_CHUNK))
        .map(|(g, p)| {
            // Tally by the 2-bit code gt*2 + pr.
            let mut tally = [0u64; 4];
            for (&a, &b) in g.iter().zip(p) {
                tally[usize::from(a * 2 + b)] += 1;
            }
            ConfusionCounts { tn: tally[0], fp: tally[1], fn_: tally[2], tp: tally[3] }
        })
        .reduce(ConfusionCounts::default, |a, b| a + b);
    Ok(counts)
}

/// Linear indices where the labels disagree, ascending.
pub fn error_indices(gt: &VoxelGrid, pr: &VoxelGrid) -> Result<Vec<usize>> {
    gt.check_same_dims(pr)?;
    let chunks: Vec<Vec<usize>> = gt
        .labels
        .par_chunks(REDUCE_CHUNK)
        .zip(pr.labels.par_chunks(REDUCE_CHUNK))
        .enumerate()
        .map(|(ci, (g, p))| {
            let base = ci * REDUCE_CHUNK;
            g.iter().zip(p).enumerate().filter(|(_, (a, b))| a != b).map(|(i, _)| base + i).collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Coordinates of the error set E in ascending linear-index order.
pub fn error_voxels(gt: &VoxelGrid, pr: &VoxelGrid) -> Result<Vec<Coord>> {
    let dims = gt.dims;
    Ok(error_indices(gt, pr)?.into_iter().map(|i| dims.coord(i)).collect())
}
