//! Systematic error injectors with exact error counts.
//!
//! Every injector flips exactly `T = round(rate * |X|)` voxels (ties to even).
//!
//! The distance-driven kinds use a layered selection over the ground truth's
//! boundary distance field: candidate voxels are grouped by squared distance,
//! whole layers are taken in order (shallowest first for the proximate kinds,
//! deepest first for the clusters) while they fit, and the remainder is drawn
//! uniformly without replacement from the next layer. Taking whole layers up
//! to squared distance `s` is the same as ball morphology with radius
//! `sqrt(s)`, so e.g. erosion removes exactly the largest ball-erosion that
//! stays under `T` errors and then completes from the newly exposed layer.
//!
//! | kind        | candidates | order                        | errors    |
//! |-------------|------------|------------------------------|-----------|
//! | erosion     | foreground | ascending distance           | FN        |
//! | dilation    | background | ascending distance           | FP        |
//! | fuzzy-edge  | all voxels | ascending distance           | FP and FN |
//! | fn-cluster  | foreground | descending distance          | FN        |
//! | fp-cluster  | background | descending distance          | FP        |
//! | uniform     | all voxels | uniform draw                 | FP and FN |
//! | nonuniform  | all voxels | weight linear in the height  | FP and FN |
//!
//! Each injection consumes one RNG stream in a fixed order, single-threaded.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{boundary_distance, DistanceField};
use crate::error::{Error, Result};
use crate::volume::{VoxelGrid, REDUCE_CHUNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Erosion,
    Dilation,
    FuzzyEdge,
    FnCluster,
    FpCluster,
    Uniform,
    Nonuniform,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 7] = [
        ErrorKind::Erosion,
        ErrorKind::Dilation,
        ErrorKind::FuzzyEdge,
        ErrorKind::FnCluster,
        ErrorKind::FpCluster,
        ErrorKind::Uniform,
        ErrorKind::Nonuniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ErrorKind::Erosion => "erosion",
            ErrorKind::Dilation => "dilation",
            ErrorKind::FuzzyEdge => "fuzzy-edge",
            ErrorKind::FnCluster => "fn-cluster",
            ErrorKind::FpCluster => "fp-cluster",
            ErrorKind::Uniform => "uniform",
            ErrorKind::Nonuniform => "nonuniform",
        }
    }

    /// Whether the injector needs the boundary distance field.
    pub fn uses_distance(&self) -> bool {
        !matches!(self, ErrorKind::Uniform | ErrorKind::Nonuniform)
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown error kind {s:?}")))
    }
}

/// Relative intensity `max(0, intercept + slope * v / n)` at vertical index `v`
/// of `n`. The vertical axis is z, or y for 2D images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalIntensity {
    pub intercept: f64,
    pub slope: f64,
}

impl Default for VerticalIntensity {
    /// Largest at index 0, falling linearly towards zero at the far end.
    fn default() -> Self {
        Self { intercept: 1.0, slope: -1.0 }
    }
}

impl VerticalIntensity {
    pub fn weight(&self, v: usize, n: usize) -> f64 {
        (self.intercept + self.slope * v as f64 / n as f64).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub kind: ErrorKind,
    pub rate: f64,
    pub seed: u64,
    /// Only used by [`ErrorKind::Nonuniform`].
    #[serde(default)]
    pub vertical: VerticalIntensity,
}

impl ErrorSpec {
    pub fn new(kind: ErrorKind, rate: f64, seed: u64) -> Self {
        Self { kind, rate, seed, vertical: VerticalIntensity::default() }
    }

    /// Number of voxels to flip in a volume of `total` voxels.
    pub fn target_count(&self, total: usize) -> Result<usize> {
        target_count(self.rate, total)
    }

    /// Injects into `gt`, computing the boundary distance when the kind needs it.
    pub fn apply(&self, gt: &VoxelGrid) -> Result<VoxelGrid> {
        if self.kind.uses_distance() {
            self.apply_with_field(gt, &boundary_distance(gt)?)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            match self.kind {
                ErrorKind::Uniform => inject_uniform(gt, self, &mut rng),
                _ => inject_nonuniform(gt, self, &mut rng),
            }
        }
    }

    /// Injects into `gt` reusing its precomputed boundary distance field.
    pub fn apply_with_field(&self, gt: &VoxelGrid, d: &DistanceField) -> Result<VoxelGrid> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let rng = &mut rng;
        match self.kind {
            ErrorKind::Erosion => inject_erosion(gt, d, self, rng),
            ErrorKind::Dilation => inject_dilation(gt, d, self, rng),
            ErrorKind::FuzzyEdge => inject_fuzzy_edge(gt, d, self, rng),
            ErrorKind::FnCluster => inject_fn_cluster(gt, d, self, rng),
            ErrorKind::FpCluster => inject_fp_cluster(gt, d, self, rng),
            ErrorKind::Uniform => inject_uniform(gt, self, rng),
            ErrorKind::Nonuniform => inject_nonuniform(gt, self, rng),
        }
    }
}

/// `round(rate * total)` with ties to even; must be at least 1.
pub fn target_count(rate: f64, total: usize) -> Result<usize> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidParameter(format!("error rate must lie in (0, 1), got {rate}")));
    }
    let t = (rate * total as f64).round_ties_even() as usize;
    if t == 0 {
        return Err(Error::InvalidParameter(format!("rate {rate} rounds to zero errors in {total} voxels")));
    }
    Ok(t)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Candidates {
    Foreground,
    Background,
    All,
}

impl Candidates {
    #[inline]
    fn admits(self, label: u8) -> bool {
        match self {
            Candidates::Foreground => label != 0,
            Candidates::Background => label == 0,
            Candidates::All => true,
        }
    }
}

/// Exact-count selection by distance layers; returns ascending linear indices.
fn layered_select<R: Rng + ?Sized>(
    gt: &VoxelGrid,
    d: &DistanceField,
    candidates: Candidates,
    descending: bool,
    kind: ErrorKind,
    target: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if gt.dims() != d.dims() {
        return Err(Error::ShapeMismatch { left: gt.dims(), right: d.dims() });
    }
    let labels = gt.labels();
    let keys = d.sqdist();
    let max_key = d.max_sqdist() as usize;

    let mut hist = vec![0usize; max_key + 1];
    for (&l, &k) in labels.iter().zip(keys) {
        if candidates.admits(l) {
            hist[k as usize] += 1;
        }
    }
    let available: usize = hist.iter().sum();
    if target > available {
        return Err(Error::Infeasible { kind, target, available });
    }

    let order: Box<dyn Iterator<Item = usize>> =
        if descending { Box::new((0..=max_key).rev()) } else { Box::new(0..=max_key) };
    let mut taken = 0usize;
    let mut boundary = None;
    for key in order {
        let n = hist[key];
        if taken + n <= target {
            taken += n;
            if taken == target {
                boundary = Some((key, 0));
                break;
            }
        } else {
            boundary = Some((key, target - taken));
            break;
        }
    }
    let (boundary_key, partial) = boundary.expect("target <= available");
    let boundary_key = boundary_key as u32;
    let full_layer = |k: u32| if descending { k > boundary_key } else { k < boundary_key };
    let whole_boundary = partial == 0;

    // Whole layers, plus the boundary layer when it is taken whole; the
    // boundary layer's members otherwise go to the uniform draw.
    let (mut selected, pool): (Vec<usize>, Vec<usize>) = {
        let parts: Vec<(Vec<usize>, Vec<usize>)> = labels
            .par_chunks(REDUCE_CHUNK)
            .zip(keys.par_chunks(REDUCE_CHUNK))
            .enumerate()
            .map(|(ci, (l, k))| {
                let base = ci * REDUCE_CHUNK;
                let mut sel = Vec::new();
                let mut pool = Vec::new();
                for (i, (&lab, &key)) in l.iter().zip(k).enumerate() {
                    if !candidates.admits(lab) {
                        continue;
                    }
                    if full_layer(key) || (whole_boundary && key == boundary_key) {
                        sel.push(base + i);
                    } else if key == boundary_key {
                        pool.push(base + i);
                    }
                }
                (sel, pool)
            })
            .collect();
        let (s, p): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        (s.concat(), p.concat())
    };
    if !whole_boundary {
        selected.extend(index::sample(rng, pool.len(), partial).into_iter().map(|j| pool[j]));
        selected.sort_unstable();
    }
    debug_assert_eq!(selected.len(), target);
    Ok(selected)
}

fn layered<R: Rng + ?Sized>(
    gt: &VoxelGrid,
    d: &DistanceField,
    spec: &ErrorSpec,
    candidates: Candidates,
    descending: bool,
    rng: &mut R,
) -> Result<VoxelGrid> {
    let target = spec.target_count(gt.len())?;
    let flips = layered_select(gt, d, candidates, descending, spec.kind, target, rng)?;
    Ok(gt.flip_sorted_indices(&flips))
}

/// Removes the `T` foreground voxels closest to the background.
pub fn inject_erosion<R: Rng + ?Sized>(
    gt: &VoxelGrid,
    d: &DistanceField,
    spec: &ErrorSpec,
    rng: &mut R,
) -> Result<VoxelGrid> {
    layered(gt, d, spec, Candidates::Foreground, false, rng)
}

/// Adds the `T` background voxels closest to the foreground.
pub fn inject_dilation<R: Rng + ?Sized>(
    gt: &VoxelGrid,
    d: &DistanceField,
    spec: &ErrorSpec,
    rng: &mut R,
) -> Result<VoxelGrid> {
    layered(gt, d, spec, Candidates::Background, false, rng)
}

/// Flips the `T` voxels of either phase closest to the surface: a band
/// `{d <= R}` grown until it holds `T` voxels.
pub fn inject_fuzzy_edge<R: Rng + ?Sized>(
    gt: &VoxelGrid,
    d: &DistanceField,
    spec: &ErrorSpec,
    rng: &mut R,
) -> Result<VoxelGrid> {
    layered(gt, d, spec, Candidates::All, false, rng)
}

/// Removes the `T` foreground voxels deepest inside the structure.
pub fn inject_fn_cluster<R: Rng + ?Sized>(
    gt: &VoxelGrid,
    d: &DistanceField,
    spec: &ErrorSpec,
    rng: &mut R,
) -> Result<VoxelGrid> {
    layered(gt, d, spec, Candidates::Foreground, true, rng)
}

/// Adds the `T` background voxels farthest from the structure.
pub fn inject_fp_cluster<R: Rng + ?Sized>(
    gt: &VoxelGrid,
    d: &DistanceField,
    spec: &ErrorSpec,
    rng: &mut R,
) -> Result<VoxelGrid> {
    layered(gt, d, spec, Candidates::Background, true, rng)
}

/// Flips `T` distinct voxels drawn uniformly from the whole volume.
pub fn inject_uniform<R: Rng + ?Sized>(gt: &VoxelGrid, spec: &ErrorSpec, rng: &mut R) -> Result<VoxelGrid> {
    let target = spec.target_count(gt.len())?;
    let mut flips = index::sample(rng, gt.len(), target).into_vec();
    flips.sort_unstable();
    Ok(gt.flip_sorted_indices(&flips))
}

/// Fenwick tree over slice weights.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(values: &[f64]) -> Self {
        let mut f = Self { tree: vec![0.0; values.len() + 1] };
        for (i, &v) in values.iter().enumerate() {
            f.add(i, v);
        }
        f
    }

    fn add(&mut self, i: usize, delta: f64) {
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut j = self.tree.len() - 1;
        let mut s = 0.0;
        while j > 0 {
            s += self.tree[j];
            j &= j - 1;
        }
        s
    }

    /// Smallest index whose inclusive prefix sum exceeds `u`.
    fn find(&self, mut u: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

/// Flips `T` distinct voxels by successive weighted draws without
/// replacement; a voxel's weight depends only on its vertical index.
///
/// Each draw picks a slice with probability proportional to
/// `weight * remaining voxels`, then a uniformly random untaken voxel in it,
/// which is exactly a draw proportional to voxel weight among the remaining.
pub fn inject_nonuniform<R: Rng + ?Sized>(gt: &VoxelGrid, spec: &ErrorSpec, rng: &mut R) -> Result<VoxelGrid> {
    let target = spec.target_count(gt.len())?;
    let dims = gt.dims();
    let slices = if dims.nz() > 1 { dims.nz() } else { dims.ny() };
    let plane = gt.len() / slices;
    let weights: Vec<f64> = (0..slices).map(|s| spec.vertical.weight(s, slices)).collect();
    let available = weights.iter().filter(|&&w| w > 0.0).count() * plane;
    if target > available {
        return Err(Error::Infeasible { kind: spec.kind, target, available });
    }

    let mut remaining = vec![plane; slices];
    let mut tree = Fenwick::new(&weights.iter().map(|w| w * plane as f64).collect::<Vec<_>>());
    let mut taken = vec![false; gt.len()];
    for _ in 0..target {
        let slice = loop {
            let s = tree.find(rng.random::<f64>() * tree.total());
            if remaining[s] > 0 && weights[s] > 0.0 {
                break s;
            }
        };
        let base = slice * plane;
        let cell = if remaining[slice] * 8 >= plane {
            loop {
                let i = base + rng.random_range(0..plane);
                if !taken[i] {
                    break i;
                }
            }
        } else {
            let r = rng.random_range(0..remaining[slice]);
            (base..base + plane).filter(|&i| !taken[i]).nth(r).unwrap()
        };
        taken[cell] = true;
        remaining[slice] -= 1;
        tree.add(slice, -weights[slice]);
    }
    let flips: Vec<usize> = (0..gt.len()).filter(|&i| taken[i]).collect();
    Ok(gt.flip_sorted_indices(&flips))
}
