use scc_core::distance::{boundary_distance, DistanceField};
use scc_core::geometry::{GeometrySpec, ParticleShape, Placement};
use scc_core::inject::{target_count, ErrorKind, ErrorSpec};
use scc_core::metrics::{evaluate_with_field, extreme_error_distance, WeightFunction};
use scc_core::volume::{confusion_counts, error_indices, GridDims, VoxelGrid};

fn sphere_system(n: usize, density: f64, seed: u64) -> (VoxelGrid, DistanceField) {
    let gt = GeometrySpec {
        dims: GridDims::cube(n).unwrap(),
        shape: ParticleShape::Sphere { radius: 15.0 },
        target_density: density,
        placement: Placement::Boolean,
        seed,
        rsa_budget: None,
    }
    .realize()
    .unwrap();
    let d = boundary_distance(&gt).unwrap();
    (gt, d)
}

/// Mean and variance of the foreground count in a uniform draw of `t` out of
/// `n` items of which `k` are foreground.
fn hypergeometric(n: f64, k: f64, t: f64) -> (f64, f64) {
    let p = k / n;
    (t * p, t * p * (1.0 - p) * (n - t) / (n - 1.0))
}

#[test]
fn uniform_fp_fraction_follows_background_fraction() {
    let (gt, _) = sphere_system(64, 0.3, 1);
    let n = gt.len() as f64;
    let t = target_count(0.05, gt.len()).unwrap() as f64;
    let (mean, var) = hypergeometric(n, gt.background_count() as f64, t);
    for seed in 0..5 {
        let pr = ErrorSpec::new(ErrorKind::Uniform, 0.05, seed).apply(&gt).unwrap();
        let fp = confusion_counts(&gt, &pr).unwrap().fp as f64;
        assert!((fp - mean).abs() < 3.0 * var.sqrt(), "seed {seed}: fp {fp} vs {mean}");
    }
}

#[test]
fn fuzzy_edge_fp_share_follows_band_composition() {
    let (gt, d) = sphere_system(64, 0.3, 2);
    let rate = 0.07;
    let t = target_count(rate, gt.len()).unwrap();
    // Rebuild the band: whole layers up to the boundary key, then the partial layer.
    let mut hist = std::collections::BTreeMap::<u32, (usize, usize)>::new();
    for i in 0..gt.len() {
        let e = hist.entry(d.sq(i)).or_default();
        if gt.is_foreground(i) {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let (mut taken, mut fixed_fp) = (0usize, 0usize);
    let mut partial = None;
    for (&key, &(fg, bg)) in &hist {
        if taken + fg + bg <= t {
            taken += fg + bg;
            fixed_fp += bg;
            if taken == t {
                break;
            }
        } else {
            partial = Some((key, fg, bg, t - taken));
            break;
        }
    }
    let (key, fg, bg, need) = partial.expect("rate chosen to end inside a layer");
    let (mean, var) = hypergeometric((fg + bg) as f64, bg as f64, need as f64);
    for seed in 0..5 {
        let pr = ErrorSpec::new(ErrorKind::FuzzyEdge, rate, seed).apply_with_field(&gt, &d).unwrap();
        let c = confusion_counts(&gt, &pr).unwrap();
        let fp = c.fp as f64 - fixed_fp as f64;
        assert!((fp - mean).abs() < 3.0 * var.sqrt() + 1e-9, "seed {seed}: {fp} vs {mean}");
        let max = extreme_error_distance::<f64>(&error_indices(&gt, &pr).unwrap(), &d).unwrap().0;
        assert!(max <= f64::from(key).sqrt());
    }
}

#[test]
fn layered_extremes_follow_the_selected_layers() {
    let (gt, d) = sphere_system(64, 0.4, 3);
    let key_range = |kind: ErrorKind| {
        let pr = ErrorSpec::new(kind, 0.06, 4).apply_with_field(&gt, &d).unwrap();
        let e = error_indices(&gt, &pr).unwrap();
        let keys: Vec<u32> = e.iter().map(|&i| d.sq(i)).collect();
        let (max, min) = extreme_error_distance::<f64>(&e, &d).unwrap();
        (keys, max, min)
    };
    let (keys, max, _) = key_range(ErrorKind::Erosion);
    assert_eq!(max, f64::from(*keys.iter().max().unwrap()).sqrt());
    // A 6% erosion of a 40% system stays within the first few layers.
    assert!(max <= 2.0, "{max}");

    let (keys, _, min) = key_range(ErrorKind::FnCluster);
    assert_eq!(min, f64::from(*keys.iter().min().unwrap()).sqrt());
    let deepest = (0..gt.len()).filter(|&i| gt.is_foreground(i)).map(|i| d.sq(i)).max().unwrap();
    assert_eq!(*keys.iter().max().unwrap(), deepest);
}

fn mean_z(gt: &VoxelGrid, pr: &VoxelGrid) -> (f64, Vec<f64>) {
    let dims = gt.dims();
    let mut per_slice = vec![0.0; dims.nz()];
    for i in error_indices(gt, pr).unwrap() {
        per_slice[dims.coord(i)[2]] += 1.0;
    }
    let total: f64 = per_slice.iter().sum();
    let m = per_slice.iter().enumerate().map(|(z, c)| z as f64 * c).sum::<f64>() / total;
    (m, per_slice)
}

#[test]
fn nonuniform_errors_concentrate_at_low_z() {
    let (gt, _) = sphere_system(64, 0.3, 5);
    let rate = 0.1;
    let t = target_count(rate, gt.len()).unwrap() as f64;
    assert!(t >= 1e4);
    let (mz_nonuniform, per_slice) = mean_z(&gt, &ErrorSpec::new(ErrorKind::Nonuniform, rate, 6).apply(&gt).unwrap());
    let (mz_uniform, _) = mean_z(&gt, &ErrorSpec::new(ErrorKind::Uniform, rate, 6).apply(&gt).unwrap());
    // z of a uniform error is uniform on 0..64: variance (64^2 - 1) / 12.
    let se = ((64.0f64 * 64.0 - 1.0) / 12.0 / t).sqrt();
    assert!(mz_nonuniform < mz_uniform - 3.0 * se, "{mz_nonuniform} vs {mz_uniform}");

    let n = per_slice.len() as f64;
    let zs: Vec<f64> = (0..per_slice.len()).map(|z| z as f64).collect();
    let (mx, my) = (zs.iter().sum::<f64>() / n, per_slice.iter().sum::<f64>() / n);
    let sxy: f64 = zs.iter().zip(&per_slice).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = zs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = per_slice.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    assert!(slope < 0.0 && r2 > 0.9, "slope {slope}, r2 {r2}");
}

#[test]
fn paired_injectors_give_equal_counts() {
    let (gt, d) = sphere_system(48, 0.5, 7);
    for rate in [0.02, 0.08] {
        let count = |k| confusion_counts(&gt, &ErrorSpec::new(k, rate, 1).apply_with_field(&gt, &d).unwrap()).unwrap();
        assert_eq!(count(ErrorKind::Dilation), count(ErrorKind::FpCluster));
        assert_eq!(count(ErrorKind::Erosion), count(ErrorKind::FnCluster));
    }
}

#[test]
fn scc_anchors_on_a_sphere_system() {
    let (gt, d) = sphere_system(128, 0.5, 8);
    let w = WeightFunction::new(1.0, 5.0).unwrap();
    let scc = |kind, rate| {
        let pr = ErrorSpec::new(kind, rate, 9).apply_with_field(&gt, &d).unwrap();
        evaluate_with_field(&gt, &pr, &d, &w).unwrap().scc.unwrap()
    };
    for rate in [0.01, 0.03, 0.05] {
        assert!(scc(ErrorKind::Dilation, rate) < 0.05);
        assert!(scc(ErrorKind::Erosion, rate) < 0.05);
    }
    assert!(scc(ErrorKind::FuzzyEdge, 0.01) < 0.1);
    assert!(scc(ErrorKind::FnCluster, 0.01) > 0.9);
}
