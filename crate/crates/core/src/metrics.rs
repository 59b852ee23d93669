//! Segmentation quality metrics.
//!
//! Count-based metrics (error rate, Dice, Matthews correlation) only look at
//! [`ConfusionCounts`]. The distance-based ones weigh every misclassified
//! voxel by its boundary distance `d` (see [`boundary_distance`]):
//!
//! * AHD, the directed average Hausdorff distance: `sum_{x in E} d(x) / |X|`,
//! * SCC, the surface consistency coefficient: `sum_{x in E} f(d(x)) / |E|`
//!   with the logistic weight `f(r) = 1 / (1 + exp(-a (r - k)))`.
//!
//! `k` is the proximity range (`f(k) = 1/2`) and `a` the transition speed.
//! Sums run over error voxels in ascending linear-index order, in fixed-size
//! chunks whose partial sums are combined in order, so results are
//! bit-reproducible for any thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{boundary_distance, DistanceField};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{confusion_counts, error_indices, ConfusionCounts, GridDims, VoxelGrid, REDUCE_CHUNK};

/// Logistic weight `f(r) = 1 / (1 + exp(-a (r - k)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeight<T>", bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct WeightFunction<T> {
    a: T,
    k: T,
}

#[derive(Deserialize)]
struct RawWeight<T> {
    a: T,
    k: T,
}

impl<T: Real> TryFrom<RawWeight<T>> for WeightFunction<T> {
    type Error = Error;

    fn try_from(raw: RawWeight<T>) -> Result<Self> {
        Self::new(raw.a, raw.k)
    }
}

impl<T: Real> WeightFunction<T> {
    /// `a` must be positive and `k` nonnegative, both finite.
    pub fn new(a: T, k: T) -> Result<Self> {
        if !(a.is_finite() && a > T::zero()) {
            return Err(Error::InvalidParameter(format!("transition speed a must be > 0, got {a}")));
        }
        if !(k.is_finite() && k >= T::zero()) {
            return Err(Error::InvalidParameter(format!("proximity range k must be >= 0, got {k}")));
        }
        Ok(Self { a, k })
    }

    /// Weight whose transition from "close" to "far" ends near `k_max`.
    pub fn from_range(k: T, k_max: T) -> Result<Self> {
        Self::new(suggest_a(k, k_max)?, k)
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn k(&self) -> T {
        self.k
    }

    #[inline]
    pub fn eval(&self, r: T) -> T {
        T::one() / (T::one() + (-self.a * (r - self.k)).exp())
    }
}

impl<T: Real> fmt::Display for WeightFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={}, k={}", self.a, self.k)
    }
}

/// Suggested transition speed `4 / (k_max - k)`, where `k_max` is the
/// distance beyond which an error is unambiguously far from the surface.
pub fn suggest_a<T: Real>(k: T, k_max: T) -> Result<T> {
    if !(k >= T::zero() && k_max > k && k_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("need k_max > k >= 0, got k={k}, k_max={k_max}")));
    }
    Ok(T::of(4.0) / (k_max - k))
}

pub fn error_rate<T: Real>(c: &ConfusionCounts) -> T {
    T::of(c.errors() as f64 / c.total() as f64)
}

/// Dice similarity coefficient `2TP / (2TP + FP + FN)`.
pub fn dsc<T: Real>(c: &ConfusionCounts) -> Result<T> {
    let den = 2 * c.tp + c.fp + c.fn_;
    if den == 0 {
        return Err(Error::Undefined { metric: "DSC", counts: *c });
    }
    Ok(T::of((2 * c.tp) as f64 / den as f64))
}

/// Matthews correlation coefficient.
///
/// The numerator is formed in `i128`; the squared denominator in `u128` when
/// it fits. `|MCC| = 1` is detected by exact integer comparison.
pub fn mcc<T: Real>(c: &ConfusionCounts) -> Result<T> {
    let (tp, fp, fn_, tn) = (c.tp as u128, c.fp as u128, c.fn_ as u128, c.tn as u128);
    let marginals = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if marginals.contains(&0) {
        return Err(Error::Undefined { metric: "MCC", counts: *c });
    }
    let num = (tp * tn) as i128 - (fp * fn_) as i128;
    let den2 = marginals.iter().try_fold(1u128, |acc, &m| acc.checked_mul(m));
    let num2 = num.unsigned_abs().checked_mul(num.unsigned_abs());
    if let (Some(den2), Some(num2)) = (den2, num2) {
        if num2 == den2 {
            return Ok(if num > 0 { T::one() } else { -T::one() });
        }
    }
    let den = match den2 {
        Some(d2) => (d2 as f64).sqrt(),
        None => {
            ((marginals[0] as f64) * (marginals[1] as f64)).sqrt()
                * ((marginals[2] as f64) * (marginals[3] as f64)).sqrt()
        }
    };
    Ok(T::of(num as f64 / den))
}

fn check_field(gt: &VoxelGrid, d: &DistanceField) -> Result<()> {
    if gt.dims() == d.dims() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { left: gt.dims(), right: d.dims() })
    }
}

/// Ordered sum of `term(i)` over `indices`.
fn ordered_sum<T: Real>(indices: &[usize], term: impl Fn(usize) -> T + Sync) -> T {
    let partials: Vec<T> =
        indices.par_chunks(REDUCE_CHUNK).map(|chunk| chunk.iter().fold(T::zero(), |acc, &i| acc + term(i))).collect();
    partials.into_iter().fold(T::zero(), |acc, p| acc + p)
}

/// AHD over a precomputed error set (ascending linear indices).
pub fn ahd_from_errors<T: Real>(errors: &[usize], d: &DistanceField) -> T {
    ordered_sum(errors, |i| d.distance::<T>(i)) / T::of(d.len() as f64)
}

/// SCC over a precomputed error set; `None` when the set is empty.
pub fn scc_from_errors<T: Real>(errors: &[usize], d: &DistanceField, w: &WeightFunction<T>) -> Option<T> {
    if errors.is_empty() {
        return None;
    }
    Some(ordered_sum(errors, |i| w.eval(d.distance::<T>(i))) / T::of(errors.len() as f64))
}

/// Directed average Hausdorff distance, normalized by the total voxel count.
pub fn ahd<T: Real>(gt: &VoxelGrid, pr: &VoxelGrid, d: &DistanceField) -> Result<T> {
    check_field(gt, d)?;
    Ok(ahd_from_errors(&error_indices(gt, pr)?, d))
}

/// Surface consistency coefficient; `None` when prediction and ground truth agree.
pub fn scc<T: Real>(gt: &VoxelGrid, pr: &VoxelGrid, d: &DistanceField, w: &WeightFunction<T>) -> Result<Option<T>> {
    check_field(gt, d)?;
    Ok(scc_from_errors(&error_indices(gt, pr)?, d, w))
}

/// Mean and population variance of `f(d(x))` over every voxel.
///
/// For errors placed independently of the structure this mean is the
/// expected SCC.
pub fn volume_weight_moments<T: Real>(d: &DistanceField, w: &WeightFunction<T>) -> (T, T) {
    let hist = sqdist_histogram(d);
    let n = T::of(d.len() as f64);
    let (s1, s2) = hist.iter().fold((T::zero(), T::zero()), |(s1, s2), (&sq, &count)| {
        let f = w.eval(T::of(f64::from(sq).sqrt()));
        let c = T::of(count as f64);
        (s1 + c * f, s2 + c * f * f)
    });
    let mean = s1 / n;
    (mean, (s2 / n - mean * mean).max(T::zero()))
}

fn sqdist_histogram(d: &DistanceField) -> BTreeMap<u32, u64> {
    d.sqdist()
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut h = BTreeMap::new();
            for &s in chunk {
                *h.entry(s).or_insert(0u64) += 1;
            }
            h
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        })
}

/// Largest and smallest boundary distance over an error set, `(max, min)`.
pub fn extreme_error_distance<T: Real>(errors: &[usize], d: &DistanceField) -> Option<(T, T)> {
    let (lo, hi) =
        errors.par_iter().map(|&i| (d.sq(i), d.sq(i))).reduce(|| (u32::MAX, 0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    (!errors.is_empty()).then(|| (T::of(f64::from(hi).sqrt()), T::of(f64::from(lo).sqrt())))
}

pub(crate) fn ceil_sqrt(s: u32) -> u32 {
    let mut r = f64::from(s).sqrt() as u32;
    while u64::from(r) * u64::from(r) > u64::from(s) {
        r -= 1;
    }
    while u64::from(r) * u64::from(r) < u64::from(s) {
        r += 1;
    }
    r
}

/// Histogram of boundary distances in 1-voxel bins (`ceil(d)`), foreground
/// voxels on the negative axis and background voxels on the positive axis.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DistanceProfile {
    bins: BTreeMap<i64, u64>,
}

impl DistanceProfile {
    pub fn bins(&self) -> &BTreeMap<i64, u64> {
        &self.bins
    }

    pub fn count(&self, signed_bin: i64) -> u64 {
        self.bins.get(&signed_bin).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["signed_distance", "phase", "count"]).map_err(csv_err)?;
        for (&bin, &count) in &self.bins {
            let phase = if bin < 0 { "foreground" } else { "background" };
            out.write_record([bin.to_string(), phase.to_string(), count.to_string()]).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

pub fn distance_profile(gt: &VoxelGrid, d: &DistanceField) -> Result<DistanceProfile> {
    check_field(gt, d)?;
    let bins = gt
        .labels()
        .par_chunks(REDUCE_CHUNK)
        .zip(d.sqdist().par_chunks(REDUCE_CHUNK))
        .map(|(labels, sq)| {
            let mut h = BTreeMap::new();
            for (&l, &s) in labels.iter().zip(sq) {
                let bin = i64::from(ceil_sqrt(s));
                *h.entry(if l != 0 { -bin } else { bin }).or_insert(0u64) += 1;
            }
            h
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    Ok(DistanceProfile { bins })
}

/// All metrics for one prediction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport<T> {
    pub counts: ConfusionCounts,
    pub error_rate: T,
    /// `None` when undefined (no foreground in either volume).
    pub dsc: Option<T>,
    /// `None` when a confusion marginal is zero.
    pub mcc: Option<T>,
    pub ahd: T,
    /// `None` when there are no errors.
    pub scc: Option<T>,
    pub weight: WeightFunction<T>,
    /// `(max, min)` boundary distance over the error set.
    pub extreme: Option<(T, T)>,
}

impl<T: Real> MetricReport<T> {
    pub fn max_error_distance(&self) -> Option<T> {
        self.extreme.map(|e| e.0)
    }

    pub fn min_error_distance(&self) -> Option<T> {
        self.extreme.map(|e| e.1)
    }
}

fn undefined_to_none<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Evaluates `pr` against `gt` given the boundary distance field of `gt`.
pub fn evaluate_with_field<T: Real>(
    gt: &VoxelGrid,
    pr: &VoxelGrid,
    d: &DistanceField,
    w: &WeightFunction<T>,
) -> Result<MetricReport<T>> {
    check_field(gt, d)?;
    let counts = confusion_counts(gt, pr)?;
    let errors = error_indices(gt, pr)?;
    Ok(MetricReport {
        counts,
        error_rate: error_rate(&counts),
        dsc: undefined_to_none(dsc(&counts))?,
        mcc: undefined_to_none(mcc(&counts))?,
        ahd: ahd_from_errors(&errors, d),
        scc: scc_from_errors(&errors, d, w),
        weight: *w,
        extreme: extreme_error_distance(&errors, d),
    })
}

/// Evaluates `pr` against `gt`, computing the boundary distance once.
pub fn evaluate<T: Real>(gt: &VoxelGrid, pr: &VoxelGrid, w: &WeightFunction<T>) -> Result<MetricReport<T>> {
    if gt.dims() != pr.dims() {
        return Err(Error::ShapeMismatch { left: gt.dims(), right: pr.dims() });
    }
    evaluate_with_field(gt, pr, &boundary_distance(gt)?, w)
}

fn opt<T: fmt::Display>(v: Option<T>, absent: &str) -> String {
    v.map_or_else(|| absent.to_string(), |v| v.to_string())
}

impl<T: Real> fmt::Display for MetricReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(f, "voxels              {}", c.total())?;
        writeln!(f, "TP FP FN TN         {} {} {} {}", c.tp, c.fp, c.fn_, c.tn)?;
        writeln!(f, "error rate          {}", self.error_rate)?;
        writeln!(f, "DSC                 {}", opt(self.dsc, "undefined"))?;
        writeln!(f, "MCC                 {}", opt(self.mcc, "undefined"))?;
        writeln!(f, "AHD                 {}", self.ahd)?;
        writeln!(f, "SCC ({})      {}", self.weight, opt(self.scc, "absent (no errors)"))?;
        writeln!(f, "max error distance  {}", opt(self.max_error_distance(), "absent"))?;
        write!(f, "min error distance  {}", opt(self.min_error_distance(), "absent"))
    }
}

/// Gray values `round(255 * (1 - f(d)))` of one z-slice, x fastest.
/// Bright pixels are those close to the surface.
pub fn weight_map_slice<T: Real>(d: &DistanceField, w: &WeightFunction<T>, z: usize) -> Result<Vec<u8>> {
    let dims = d.dims();
    if z >= dims.nz() {
        return Err(Error::OutOfBounds { coord: [0, 0, z], dims });
    }
    let plane = dims.nx() * dims.ny();
    let px = (0..plane)
        .map(|i| {
            let v = (T::one() - w.eval(d.distance::<T>(z * plane + i))).as_f64();
            (v * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(px)
}

/// Binary (P5) PGM with maxval 255.
pub fn write_pgm<W: Write>(mut out: W, dims: GridDims, pixels: &[u8]) -> Result<()> {
    if pixels.len() != dims.nx() * dims.ny() {
        return Err(Error::Format(format!("{} pixels do not fill a {}x{} slice", pixels.len(), dims.nx(), dims.ny())));
    }
    write!(out, "P5\n{} {}\n255\n", dims.nx(), dims.ny())?;
    out.write_all(pixels)?;
    Ok(())
}
