//! Synthetic particle systems.
//!
//! Particles of one fixed shape are rotated uniformly and placed either by a
//! Boolean model (Poisson number of independent, possibly overlapping
//! particles) or by random sequential adsorption (non-overlapping). Centers
//! are drawn from the image window dilated by the particle's circumradius, so
//! particles cut by the border are represented as often as interior ones.

mod elliptic;
mod rotation;
mod shape;

use std::sync::atomic::{AtomicU8, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use elliptic::{carlson_rd, carlson_rf, carlson_rg};
pub use rotation::Rotation;
pub use shape::{ParticleShape, SHAPE_NAMES};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{GridDims, VoxelGrid};

/// Densities above this are rejected for non-overlapping placement.
pub const MAX_RSA_DENSITY: f64 = 0.2;
pub const DEFAULT_RSA_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Boolean,
    NonOverlapping,
}

impl Placement {
    pub fn name(&self) -> &'static str {
        match self {
            Placement::Boolean => "boolean",
            Placement::NonOverlapping => "non-overlapping",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec<T> {
    pub dims: GridDims,
    pub shape: ParticleShape<T>,
    pub target_density: T,
    pub placement: Placement,
    pub seed: u64,
    /// Proposal budget for non-overlapping placement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsa_budget: Option<u64>,
}

impl<T: Real> GeometrySpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let p = self.target_density.as_f64();
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("target density must lie in [0, 1), got {p}")));
        }
        if self.placement == Placement::NonOverlapping && p > MAX_RSA_DENSITY {
            return Err(Error::InvalidParameter(format!(
                "non-overlapping placement supports densities up to {MAX_RSA_DENSITY}, got {p}"
            )));
        }
        Ok(())
    }

    /// Realizes this geometry with a generator seeded from `seed`.
    pub fn realize(&self) -> Result<VoxelGrid> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.placement {
            Placement::Boolean => boolean_realize(self, &mut rng),
            Placement::NonOverlapping => rsa_realize(self, &mut rng),
        }
    }
}

/// One placed particle: world center (voxel units) and orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle<T> {
    pub center: [T; 3],
    pub rotation: Rotation<T>,
}

pub fn sample_rotation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Rotation<T> {
    Rotation::sample(rng)
}

/// Linear indices (ascending) of the voxels whose centers lie inside the
/// rotated particle. The inside test runs in the particle frame; each voxel
/// row is restricted to the analytic chord through the solid, padded by one
/// voxel on either side.
pub fn voxelize_particle<T: Real>(
    shape: &ParticleShape<T>,
    rotation: &Rotation<T>,
    center: [T; 3],
    dims: GridDims,
) -> Vec<usize> {
    let mut out = Vec::new();
    for_each_row_run(shape, rotation, center, dims, |start, end| out.extend(start..end));
    out
}

/// Calls `f(start, end)` for every maximal run of inside voxels along x.
fn for_each_row_run<T: Real>(
    shape: &ParticleShape<T>,
    rotation: &Rotation<T>,
    center: [T; 3],
    dims: GridDims,
    mut f: impl FnMut(usize, usize),
) {
    let n = dims.as_array();
    let half = shape.aabb_half_extents(rotation);
    let mut range = [(0usize, 0usize); 3];
    for a in 0..3 {
        let lo = (center[a] - half[a]).ceil().max(T::zero());
        let hi = (center[a] + half[a]).floor().min(T::of((n[a] - 1) as f64));
        if lo > hi {
            return;
        }
        range[a] = (lo.to_usize().unwrap(), hi.to_usize().unwrap());
    }
    let inv = rotation.inverse();
    let dir = inv.apply([T::one(), T::zero(), T::zero()]);
    let local = |x: T, y: T, z: T| inv.apply([x - center[0], y - center[1], z - center[2]]);
    let inside = |x: usize, y: T, z: T| shape.contains_local(local(T::of(x as f64), y, z));
    let (x_lo, x_hi) = range[0];

    for z in range[2].0..=range[2].1 {
        let zf = T::of(z as f64);
        for y in range[1].0..=range[1].1 {
            let yf = T::of(y as f64);
            let origin = local(T::zero(), yf, zf);
            let Some((t0, t1)) = shape.chord(origin, dir) else { continue };
            let pad = T::one();
            let a = (t0 - pad).ceil().max(T::of(x_lo as f64));
            let b = (t1 + pad).floor().min(T::of(x_hi as f64));
            if a > b {
                continue;
            }
            let (a, b) = (a.to_usize().unwrap(), b.to_usize().unwrap());
            let Some(first) = (a..=b).find(|&x| inside(x, yf, zf)) else { continue };
            let last = (first..=b).rev().find(|&x| inside(x, yf, zf)).unwrap();
            let row = dims.index([0, y, z]);
            f(row + first, row + last + 1);
        }
    }
}

/// Lower corner and side lengths of the plus-sampling window.
fn sampling_window<T: Real>(dims: GridDims, shape: &ParticleShape<T>) -> ([T; 3], [T; 3]) {
    let r = shape.circumradius();
    let half = T::of(0.5);
    let lo = [T::zero() - half - r; 3];
    let len = dims.as_array().map(|n| T::of(n as f64) + r + r);
    (lo, len)
}

fn propose<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: [T; 3], len: [T; 3]) -> Particle<T> {
    let center = [0, 1, 2].map(|a| lo[a] + len[a] * T::of(rng.random::<f64>()));
    Particle { center, rotation: Rotation::sample(rng) }
}

/// Particle intensity (per voxel) of a Boolean model with the given volume
/// fraction: `lambda = -ln(1 - p) / V`.
pub fn boolean_intensity<T: Real>(shape: &ParticleShape<T>, target_density: T) -> T {
    -(T::one() - target_density).ln() / shape.volume()
}

/// Draws the particles of a Boolean model realization.
pub fn sample_boolean_particles<T: Real, R: Rng + ?Sized>(
    spec: &GeometrySpec<T>,
    rng: &mut R,
) -> Result<Vec<Particle<T>>> {
    spec.validate()?;
    let (lo, len) = sampling_window(spec.dims, &spec.shape);
    let mean =
        boolean_intensity(&spec.shape, spec.target_density).as_f64() * len.iter().map(|l| l.as_f64()).product::<f64>();
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| Error::InvalidParameter(format!("Poisson mean {mean}: {e}")))?.sample(rng)
            as usize
    } else {
        0
    };
    Ok((0..count).map(|_| propose(rng, lo, len)).collect())
}

/// Union of the particles, rasterized in parallel.
pub fn rasterize<T: Real>(dims: GridDims, shape: &ParticleShape<T>, particles: &[Particle<T>]) -> VoxelGrid {
    let occupancy: Vec<AtomicU8> = (0..dims.len()).map(|_| AtomicU8::new(0)).collect();
    particles.par_iter().for_each(|p| {
        for_each_row_run(shape, &p.rotation, p.center, dims, |start, end| {
            for cell in &occupancy[start..end] {
                cell.store(1, Ordering::Relaxed);
            }
        });
    });
    VoxelGrid::from_raw_unchecked(dims, occupancy.into_iter().map(AtomicU8::into_inner).collect())
}

pub fn boolean_realize<T: Real, R: Rng + ?Sized>(spec: &GeometrySpec<T>, rng: &mut R) -> Result<VoxelGrid> {
    if spec.placement != Placement::Boolean {
        return Err(Error::InvalidParameter("boolean_realize needs boolean placement".into()));
    }
    let particles = sample_boolean_particles(spec, rng)?;
    Ok(rasterize(spec.dims, &spec.shape, &particles))
}

/// Random sequential adsorption. Returns the accepted particles and the grid.
///
/// Proposals are rejected when any of their voxels is already occupied;
/// placement stops at the first acceptance that brings the in-window density
/// to the target.
pub fn rsa_place<T: Real, R: Rng + ?Sized>(
    spec: &GeometrySpec<T>,
    rng: &mut R,
) -> Result<(Vec<Particle<T>>, VoxelGrid)> {
    spec.validate()?;
    let dims = spec.dims;
    let target = spec.target_density.as_f64() * dims.len() as f64;
    let budget = spec.rsa_budget.unwrap_or(DEFAULT_RSA_BUDGET);
    let (lo, len) = sampling_window(dims, &spec.shape);
    let mut occupancy = vec![0u8; dims.len()];
    let mut filled = 0usize;
    let mut accepted = Vec::new();
    let mut proposals = 0u64;
    while (filled as f64) < target {
        if proposals >= budget {
            return Err(Error::BudgetExhausted {
                achieved: filled as f64 / dims.len() as f64,
                target: spec.target_density.as_f64(),
                proposals,
            });
        }
        proposals += 1;
        let p = propose(rng, lo, len);
        let voxels = voxelize_particle(&spec.shape, &p.rotation, p.center, dims);
        if voxels.iter().any(|&i| occupancy[i] != 0) {
            continue;
        }
        for &i in &voxels {
            occupancy[i] = 1;
        }
        filled += voxels.len();
        accepted.push(p);
    }
    Ok((accepted, VoxelGrid::from_raw_unchecked(dims, occupancy)))
}

pub fn rsa_realize<T: Real, R: Rng + ?Sized>(spec: &GeometrySpec<T>, rng: &mut R) -> Result<VoxelGrid> {
    if spec.placement != Placement::NonOverlapping {
        return Err(Error::InvalidParameter("rsa_realize needs non-overlapping placement".into()));
    }
    rsa_place(spec, rng).map(|(_, grid)| grid)
}
