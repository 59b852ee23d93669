//! Exact squared Euclidean distance transforms and ball morphology.
//!
//! The transform runs three separable passes (x, then y, then z). Each pass
//! replaces a line of squared distances `g` by `min_i (x - i)^2 + g(i)`, the
//! lower envelope of parabolas rooted at the finite sites of the line.
//! Envelope breakpoints are computed with integer ceiling division, so the
//! result is exact; there is no floating point anywhere in the transform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{GridDims, VoxelGrid};

/// Marker for "no site seen yet" inside the passes.
const INF: u32 = u32::MAX;

/// Which phase of a grid the distances are measured to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Foreground,
    Background,
}

impl Source {
    fn label(self) -> u8 {
        match self {
            Source::Foreground => 1,
            Source::Background => 0,
        }
    }
}

/// Per-voxel squared Euclidean distance in voxel units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceField {
    dims: GridDims,
    sqdist: Vec<u32>,
}

impl DistanceField {
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.sqdist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sqdist.is_empty()
    }

    pub fn sqdist(&self) -> &[u32] {
        &self.sqdist
    }

    #[inline]
    pub fn sq(&self, index: usize) -> u32 {
        self.sqdist[index]
    }

    #[inline]
    pub fn distance<T: Real>(&self, index: usize) -> T {
        T::of(f64::from(self.sqdist[index]).sqrt())
    }

    pub fn max_sqdist(&self) -> u32 {
        self.sqdist.par_iter().copied().max().unwrap_or(0)
    }
}

/// Largest squared distance a grid of these dimensions can produce.
fn check_representable(dims: GridDims) -> Result<()> {
    let span: u128 = dims.as_array().iter().map(|&n| ((n - 1) as u128).pow(2)).sum();
    if span < u128::from(INF) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{dims} grid exceeds the 32-bit squared-distance range")))
    }
}

#[inline]
fn ceil_div(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    -((-num).div_euclid(den))
}

/// Reusable buffers for the 1D envelope.
#[derive(Default)]
struct Envelope {
    sites: Vec<(i64, i64)>,
    starts: Vec<i64>,
    line: Vec<u32>,
}

impl Envelope {
    /// `out[x] = min over finite g[i] of (x - i)^2 + g[i]`, or `INF` if `g` has no finite entry.
    fn transform(&mut self, g: &[u32], out: &mut [u32]) {
        let (sites, starts) = (&mut self.sites, &mut self.starts);
        sites.clear();
        starts.clear();
        for (q, &gq) in g.iter().enumerate() {
            if gq == INF {
                continue;
            }
            let (q, fq) = (q as i64, i64::from(gq));
            while let Some(&(v, fv)) = sites.last() {
                // First integer x at which the parabola at q is no higher than the one at v.
                let s = ceil_div(q * q - v * v + fq - fv, 2 * (q - v));
                if s <= *starts.last().unwrap() {
                    sites.pop();
                    starts.pop();
                } else {
                    sites.push((q, fq));
                    starts.push(s);
                    break;
                }
            }
            if sites.is_empty() {
                sites.push((q, fq));
                starts.push(i64::MIN);
            }
        }
        if sites.is_empty() {
            out.fill(INF);
            return;
        }
        let mut j = 0;
        for (x, o) in out.iter_mut().enumerate() {
            let x = x as i64;
            while j + 1 < sites.len() && starts[j + 1] <= x {
                j += 1;
            }
            let (v, fv) = sites[j];
            *o = ((x - v) * (x - v) + fv) as u32;
        }
    }

    /// Transforms the strided line starting at `base` in place.
    fn transform_strided(&mut self, buf: &mut [u32], base: usize, stride: usize, n: usize) {
        let mut line = std::mem::take(&mut self.line);
        line.clear();
        line.extend((0..n).map(|i| buf[base + i * stride]));
        let mut out = vec![0u32; n];
        self.transform(&line, &mut out);
        for (i, v) in out.into_iter().enumerate() {
            buf[base + i * stride] = v;
        }
        self.line = line;
    }
}

/// Squared distance from every voxel to the nearest voxel of `source`.
pub fn squared_edt(grid: &VoxelGrid, source: Source) -> Result<DistanceField> {
    let dims = grid.dims();
    check_representable(dims)?;
    let [nx, ny, nz] = dims.as_array();
    let label = source.label();
    if !grid.labels().par_iter().any(|&v| v == label) {
        return Err(Error::EmptySource);
    }

    let mut buf = vec![0u32; dims.len()];

    buf.par_chunks_mut(nx).zip(grid.labels().par_chunks(nx)).for_each_init(
        || (Envelope::default(), Vec::with_capacity(nx)),
        |(env, g), (out, row)| {
            g.clear();
            g.extend(row.iter().map(|&v| if v == label { 0 } else { INF }));
            env.transform(g, out);
        },
    );

    if ny > 1 {
        buf.par_chunks_mut(nx * ny).for_each_init(Envelope::default, |env, slab| {
            for x in 0..nx {
                env.transform_strided(slab, x, nx, ny);
            }
        });
    }

    if nz > 1 {
        let plane = nx * ny;
        let columns: Vec<Vec<u32>> = (0..ny)
            .into_par_iter()
            .map_init(Envelope::default, |env, y| {
                let mut block = vec![0u32; nx * nz];
                let mut line = vec![0u32; nz];
                for x in 0..nx {
                    for (z, l) in line.iter_mut().enumerate() {
                        *l = buf[x + nx * y + plane * z];
                    }
                    env.transform(&line, &mut block[x * nz..(x + 1) * nz]);
                }
                block
            })
            .collect();
        for (y, block) in columns.into_iter().enumerate() {
            for x in 0..nx {
                for z in 0..nz {
                    buf[x + nx * y + plane * z] = block[x * nz + z];
                }
            }
        }
    }

    debug_assert!(buf.iter().all(|&v| v != INF));
    Ok(DistanceField { dims, sqdist: buf })
}

/// Distance of every voxel to the nearest voxel of the opposite phase of `gt`.
///
/// Background voxels measure to the foreground and foreground voxels to the
/// background, so the field is at least 1 everywhere and unchanged by
/// complementing `gt`.
pub fn boundary_distance(gt: &VoxelGrid) -> Result<DistanceField> {
    let foreground = gt.foreground_count();
    if foreground == 0 || foreground == gt.len() {
        return Err(Error::SinglePhase { foreground, total: gt.len() });
    }
    let to_fg = squared_edt(gt, Source::Foreground)?;
    let to_bg = squared_edt(gt, Source::Background)?;
    // Exactly one of the two is zero at every voxel.
    let sqdist = to_fg.sqdist.par_iter().zip(&to_bg.sqdist).map(|(&a, &b)| a + b).collect();
    Ok(DistanceField { dims: gt.dims(), sqdist })
}

/// Largest integer squared distance covered by a ball of `radius`.
/// `radius^2` within a few ulps (of `T`) of an integer is snapped to it, so that
/// e.g. `sqrt(2)` covers squared distance 2.
pub fn ball_sq_threshold<T: Real>(radius: T) -> Result<u64> {
    let r = radius.as_f64();
    if !r.is_finite() || r < 0.0 {
        return Err(Error::InvalidParameter(format!("ball radius must be finite and nonnegative, got {r}")));
    }
    let r2 = r * r;
    let nearest = r2.round();
    let tol = (8.0 * T::epsilon().as_f64()).max(1e-9);
    if (r2 - nearest).abs() <= tol * nearest.max(1.0) {
        Ok(nearest as u64)
    } else {
        Ok(r2.floor() as u64)
    }
}

/// Removes every foreground voxel within `radius` of the background.
pub fn erode_ball<T: Real>(grid: &VoxelGrid, radius: T) -> Result<VoxelGrid> {
    let threshold = ball_sq_threshold(radius)?;
    if grid.foreground_count() == grid.len() {
        return Ok(grid.clone());
    }
    let d = squared_edt(grid, Source::Background)?;
    let labels = d.sqdist.par_iter().map(|&s| u8::from(u64::from(s) > threshold)).collect();
    Ok(VoxelGrid::from_raw_unchecked(grid.dims(), labels))
}

/// Adds every background voxel within `radius` of the foreground.
pub fn dilate_ball<T: Real>(grid: &VoxelGrid, radius: T) -> Result<VoxelGrid> {
    let threshold = ball_sq_threshold(radius)?;
    if grid.foreground_count() == 0 {
        return Ok(grid.clone());
    }
    let d = squared_edt(grid, Source::Foreground)?;
    let labels = d.sqdist.par_iter().map(|&s| u8::from(u64::from(s) <= threshold)).collect();
    Ok(VoxelGrid::from_raw_unchecked(grid.dims(), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(grid: &VoxelGrid, source: Source) -> Vec<u32> {
        let dims = grid.dims();
        let sources: Vec<[i64; 3]> = (0..grid.len())
            .filter(|&i| grid.labels()[i] == source.label())
            .map(|i| dims.coord(i).map(|c| c as i64))
            .collect();
        (0..grid.len())
            .map(|i| {
                let p = dims.coord(i).map(|c| c as i64);
                sources.iter().map(|s| (0..3).map(|a| (p[a] - s[a]).pow(2)).sum::<i64>()).min().unwrap() as u32
            })
            .collect()
    }

    fn random_grid(dims: GridDims, p: f64, seed: u64) -> VoxelGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VoxelGrid::from_fn(dims, |_| rng.random_bool(p))
    }

    #[test]
    fn single_source_center_of_5_cube() {
        let d = GridDims::cube(5).unwrap();
        let g = VoxelGrid::from_indices(d, [d.index([2, 2, 2])]).unwrap();
        let f = squared_edt(&g, Source::Foreground).unwrap();
        assert_eq!(f.sq(d.index([0, 0, 0])), 12);
        assert_eq!(f.sq(d.index([2, 2, 2])), 0);
    }

    #[test]
    fn all_sources_give_zero_field() {
        let g = VoxelGrid::filled(GridDims::new(4, 3, 2).unwrap(), true);
        assert!(squared_edt(&g, Source::Foreground).unwrap().sqdist().iter().all(|&v| v == 0));
        assert!(matches!(squared_edt(&g, Source::Background), Err(Error::EmptySource)));
    }

    #[test]
    fn matches_brute_force_on_random_12_cubes() {
        let d = GridDims::cube(12).unwrap();
        for seed in 0..12 {
            let p = [0.002, 0.05, 0.3, 0.7, 0.95][seed as usize % 5];
            let g = random_grid(d, p, seed);
            for source in [Source::Foreground, Source::Background] {
                match squared_edt(&g, source) {
                    Ok(f) => assert_eq!(f.sqdist(), brute_force(&g, source).as_slice(), "seed {seed}"),
                    Err(Error::EmptySource) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn boundary_distance_row_example() {
        let d = GridDims::new(4, 1, 1).unwrap();
        let g = VoxelGrid::from_labels(d, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(boundary_distance(&g).unwrap().sqdist(), &[1, 1, 1, 1]);
    }

    #[test]
    fn boundary_distance_cube_center() {
        let d = GridDims::cube(5).unwrap();
        let g = VoxelGrid::from_fn(d, |c| c.iter().all(|&v| (1..=3).contains(&v)));
        let f = boundary_distance(&g).unwrap();
        assert_eq!(f.sq(d.index([2, 2, 2])), 4);
        assert_eq!(f.distance::<f64>(d.index([2, 2, 2])), 2.0);
        assert!(f.sqdist().iter().all(|&v| v >= 1));
        assert_eq!(boundary_distance(&g.complement()).unwrap(), f);
    }

    #[test]
    fn boundary_distance_rejects_single_phase() {
        let g = VoxelGrid::filled(GridDims::cube(3).unwrap(), false);
        assert!(matches!(boundary_distance(&g), Err(Error::SinglePhase { foreground: 0, total: 27 })));
        assert!(matches!(boundary_distance(&g.complement()), Err(Error::SinglePhase { .. })));
    }

    #[test]
    fn two_dimensional_images_work() {
        let d = GridDims::new(9, 7, 1).unwrap();
        for seed in 0..5 {
            let g = random_grid(d, 0.2, seed);
            if g.foreground_count() > 0 {
                assert_eq!(squared_edt(&g, Source::Foreground).unwrap().sqdist(), brute_force(&g, Source::Foreground));
            }
        }
    }

    #[test]
    fn radius_below_one_is_identity() {
        let g = random_grid(GridDims::cube(6).unwrap(), 0.5, 3);
        for r in [0.0, 0.5, 0.999] {
            assert_eq!(erode_ball(&g, r).unwrap(), g);
            assert_eq!(dilate_ball(&g, r).unwrap(), g);
        }
        assert!(erode_ball(&g, -1.0).is_err());
        assert!(dilate_ball(&g, f64::NAN).is_err());
    }

    #[test]
    fn erode_8_cube_by_one() {
        let d = GridDims::cube(12).unwrap();
        let g = VoxelGrid::from_fn(d, |c| c.iter().all(|&v| (2..10).contains(&v)));
        let e = erode_ball(&g, 1.0).unwrap();
        let expect = VoxelGrid::from_fn(d, |c| c.iter().all(|&v| (3..9).contains(&v)));
        assert_eq!(e, expect);
        assert_eq!(e.foreground_count(), 216);
    }

    #[test]
    fn sqrt_two_threshold_snaps() {
        assert_eq!(ball_sq_threshold(2f64.sqrt()).unwrap(), 2);
        assert_eq!(ball_sq_threshold(2f32.sqrt()).unwrap(), 2);
        assert_eq!(ball_sq_threshold(3f64.sqrt() - 1e-3).unwrap(), 2);
        assert_eq!(ball_sq_threshold(3.0f64).unwrap(), 9);
    }

    fn grid_strategy(max: usize) -> impl Strategy<Value = VoxelGrid> {
        (1..=max, 1..=max, 1..=max, 0.01f64..0.99, any::<u64>())
            .prop_map(|(nx, ny, nz, p, seed)| random_grid(GridDims::new(nx, ny, nz).unwrap(), p, seed))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_against_brute_force(g in grid_strategy(9)) {
            prop_assume!(g.foreground_count() > 0);
            let f = squared_edt(&g, Source::Foreground).unwrap();
            let expected = brute_force(&g, Source::Foreground);
            prop_assert_eq!(f.sqdist(), expected.as_slice());
        }

        #[test]
        fn adding_sources_never_increases_distance(g in grid_strategy(8), extra in any::<u64>()) {
            prop_assume!(g.foreground_count() > 0);
            let mut rng = ChaCha8Rng::seed_from_u64(extra);
            let more = VoxelGrid::from_fn(g.dims(), |c| g.get(c).unwrap() || rng.random_bool(0.1));
            let a = squared_edt(&g, Source::Foreground).unwrap();
            let b = squared_edt(&more, Source::Foreground).unwrap();
            prop_assert!(a.sqdist().iter().zip(b.sqdist()).all(|(x, y)| y <= x));
        }

        #[test]
        fn field_is_one_lipschitz(g in grid_strategy(8)) {
            prop_assume!(g.foreground_count() > 0);
            let f = squared_edt(&g, Source::Foreground).unwrap();
            let d = g.dims();
            for i in 0..d.len() {
                let c = d.coord(i);
                for a in 0..3 {
                    let mut n = c;
                    n[a] += 1;
                    if d.contains(n) {
                        let (u, v) = (f.distance::<f64>(i), f.distance::<f64>(d.index(n)));
                        prop_assert!((u - v).abs() <= 1.0 + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn shifting_interior_sources_shifts_field(seed in any::<u64>(), shift in 0usize..3) {
            // Sources confined well inside the grid so that the shifted set
            // stays in bounds; compare on the overlap.
            let d = GridDims::cube(10).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[usize; 3]> = (0..4).map(|_| [rng.random_range(3..5), rng.random_range(3..5), rng.random_range(3..5)]).collect();
            let a = VoxelGrid::from_indices(d, pts.iter().map(|&p| d.index(p))).unwrap();
            let b = VoxelGrid::from_indices(d, pts.iter().map(|&p| d.index([p[0] + shift, p[1], p[2]]))).unwrap();
            let fa = squared_edt(&a, Source::Foreground).unwrap();
            let fb = squared_edt(&b, Source::Foreground).unwrap();
            for i in 0..d.len() {
                let c = d.coord(i);
                if c[0] + shift < 10 {
                    prop_assert_eq!(fa.sq(i), fb.sq(d.index([c[0] + shift, c[1], c[2]])));
                }
            }
        }

        #[test]
        fn erosion_dilation_duality(g in grid_strategy(7), r in 0.0f64..3.5) {
            let e = erode_ball(&g, r).unwrap();
            let dual = dilate_ball(&g.complement(), r).unwrap().complement();
            prop_assert_eq!(e, dual);
        }
    }
}
