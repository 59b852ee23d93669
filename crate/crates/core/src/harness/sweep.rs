use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, GeometrySource};
use crate::distance::{boundary_distance, DistanceField};
use crate::error::{Error, Result};
use crate::inject::{ErrorKind, ErrorSpec};
use crate::io::{encode_volume, load_volume};
use crate::metrics::{evaluate_with_field, WeightFunction};
use crate::volume::VoxelGrid;

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const VOLUMES_DIR: &str = "volumes";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// The injector could not place the requested number of errors.
    Infeasible,
    Error,
}

/// One evaluated (geometry, kind, rate, seed, weight) cell.
///
/// Metric columns are empty when undefined or when the cell failed. Volume
/// paths are relative to the output directory, or as configured for loaded
/// ground truths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub geometry_id: String,
    pub shape: Option<String>,
    pub density: Option<f64>,
    pub placement: Option<String>,
    pub gt_density: f64,
    pub kind: ErrorKind,
    pub rate: f64,
    pub seed: u64,
    pub a: f64,
    pub k: f64,
    pub status: RowStatus,
    pub error_count: Option<u64>,
    pub error_rate_measured: Option<f64>,
    pub dsc: Option<f64>,
    pub mcc: Option<f64>,
    pub ahd: Option<f64>,
    pub scc: Option<f64>,
    pub max_error_distance: Option<f64>,
    pub min_error_distance: Option<f64>,
    pub gt_volume: String,
    pub pr_volume: Option<String>,
    pub message: Option<String>,
}

/// Wall time of one injection and its evaluations. Kept apart from the
/// results so that those stay byte-identical between runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub geometry_id: String,
    pub kind: ErrorKind,
    pub rate: f64,
    pub seed: u64,
    pub wall_time: f64,
}

/// Mean and spread of a group of rows sharing everything but geometry and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub density: Option<f64>,
    pub placement: Option<String>,
    pub kind: ErrorKind,
    pub rate: f64,
    pub a: f64,
    pub k: f64,
    pub n: usize,
    pub dsc_mean: Option<f64>,
    pub mcc_mean: Option<f64>,
    pub ahd_mean: Option<f64>,
    pub scc_mean: Option<f64>,
    /// Sample standard deviation; needs two values.
    pub scc_std: Option<f64>,
}

#[derive(Debug)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<CellTiming>,
    pub summary: Vec<SummaryRow>,
    pub results_path: PathBuf,
}

struct GroundTruth {
    id: String,
    shape: Option<String>,
    density: Option<f64>,
    placement: Option<String>,
    grid: VoxelGrid,
    field: DistanceField,
    /// Content key used to name derived volumes.
    key: String,
    volume: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes via a temporary sibling so an interrupted run leaves no torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::at(&tmp, e.into()))?;
    fs::rename(&tmp, path).map_err(|e| Error::at(path, e.into()))
}

/// Reuses a stored volume when present and intact, else builds and stores it.
fn cached_volume(path: &Path, build: impl FnOnce() -> Result<VoxelGrid>) -> Result<VoxelGrid> {
    if path.is_file() {
        if let Ok(grid) = load_volume(path) {
            return Ok(grid);
        }
    }
    let grid = build()?;
    write_atomic(path, &encode_volume(&grid)?)?;
    Ok(grid)
}

fn prepare(cfg: &ExperimentConfig, source: &GeometrySource, out: &Path) -> Result<GroundTruth> {
    let id = source.id();
    let (grid, key, volume, shape, density, placement) = match source {
        GeometrySource::Generated { spec, .. } => {
            let canonical = toml::to_string(spec).map_err(|e| Error::Config(e.to_string()))?;
            let key = sha256_hex(canonical.as_bytes());
            let name = format!("{VOLUMES_DIR}/gt-{}.sgv", &key[..16]);
            let grid = cached_volume(&out.join(&name), || spec.realize())
                .map_err(|e| Error::Config(format!("geometry {id}: {e}")))?;
            (
                grid,
                key,
                name,
                Some(spec.shape.name().to_string()),
                Some(spec.target_density),
                Some(spec.placement.name().to_string()),
            )
        }
        GeometrySource::File { path, .. } => {
            let resolved = cfg.resolve(path);
            let grid = load_volume(&resolved).map_err(|e| Error::at(&resolved, e))?;
            let key = sha256_hex(&encode_volume(&grid)?);
            (grid, key, path.display().to_string(), None, None, None)
        }
    };
    let field = boundary_distance(&grid).map_err(|e| Error::Config(format!("geometry {id}: {e}")))?;
    Ok(GroundTruth { id, shape, density, placement, grid, field, key, volume })
}

fn prediction_name(gt_key: &str, spec: &ErrorSpec) -> String {
    let v = spec.vertical;
    let tag = format!(
        "{gt_key}|{}|{:016x}|{}|{:016x}|{:016x}",
        spec.kind,
        spec.rate.to_bits(),
        spec.seed,
        v.intercept.to_bits(),
        v.slope.to_bits()
    );
    format!("{VOLUMES_DIR}/pr-{}.sgv", &sha256_hex(tag.as_bytes())[..16])
}

fn run_cell(
    cfg: &ExperimentConfig,
    gt: &GroundTruth,
    spec: ErrorSpec,
    out: &Path,
) -> Result<(Vec<ResultRow>, CellTiming)> {
    let start = Instant::now();
    let base = |w: &WeightFunction<f64>, status: RowStatus| ResultRow {
        geometry_id: gt.id.clone(),
        shape: gt.shape.clone(),
        density: gt.density,
        placement: gt.placement.clone(),
        gt_density: gt.grid.density(),
        kind: spec.kind,
        rate: spec.rate,
        seed: spec.seed,
        a: w.a(),
        k: w.k(),
        status,
        error_count: None,
        error_rate_measured: None,
        dsc: None,
        mcc: None,
        ahd: None,
        scc: None,
        max_error_distance: None,
        min_error_distance: None,
        gt_volume: gt.volume.clone(),
        pr_volume: None,
        message: None,
    };
    let rows = match spec.apply_with_field(&gt.grid, &gt.field) {
        Ok(pr) => {
            let pr_volume = if cfg.persist_predictions {
                let name = prediction_name(&gt.key, &spec);
                write_atomic(&out.join(&name), &encode_volume(&pr)?)?;
                Some(name)
            } else {
                None
            };
            let mut rows = Vec::with_capacity(cfg.weights.len());
            for w in &cfg.weights {
                let r = evaluate_with_field(&gt.grid, &pr, &gt.field, w)?;
                rows.push(ResultRow {
                    error_count: Some(r.counts.errors()),
                    error_rate_measured: Some(r.error_rate),
                    dsc: r.dsc,
                    mcc: r.mcc,
                    ahd: Some(r.ahd),
                    scc: r.scc,
                    max_error_distance: r.max_error_distance(),
                    min_error_distance: r.min_error_distance(),
                    pr_volume: pr_volume.clone(),
                    ..base(w, RowStatus::Ok)
                });
            }
            rows
        }
        Err(e @ Error::Io(_)) | Err(e @ Error::AtPath { .. }) => return Err(e),
        Err(e) => {
            let status = if matches!(e, Error::Infeasible { .. }) { RowStatus::Infeasible } else { RowStatus::Error };
            let message = e.to_string();
            cfg.weights.iter().map(|w| ResultRow { message: Some(message.clone()), ..base(w, status) }).collect()
        }
    };
    let timing = CellTiming {
        geometry_id: gt.id.clone(),
        kind: spec.kind,
        rate: spec.rate,
        seed: spec.seed,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((rows, timing))
}

/// Runs every cell of `cfg` and writes `results.csv`, `summary.csv` and
/// `timings.csv` to its output directory.
///
/// Rows come in config order: geometry, kind, rate, seed, weight. Cells of one
/// geometry run concurrently on a pool of the configured size and share the
/// ground truth's distance field.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    cfg.check_paths()?;
    let out = cfg.resolve(&cfg.output_dir);
    fs::create_dir_all(out.join(VOLUMES_DIR)).map_err(|e| Error::at(&out, e.into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.effective_workers()?)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut rows = Vec::with_capacity(cfg.cell_count());
    let mut timings = Vec::new();
    pool.install(|| -> Result<()> {
        for source in &cfg.geometries {
            let gt = prepare(cfg, source, &out)?;
            let mut specs = Vec::new();
            for &kind in &cfg.kinds {
                for &rate in &cfg.rates {
                    for &seed in &cfg.seeds {
                        specs.push(ErrorSpec { kind, rate, seed, vertical: cfg.vertical });
                    }
                }
            }
            let done: Vec<(Vec<ResultRow>, CellTiming)> =
                specs.into_par_iter().map(|spec| run_cell(cfg, &gt, spec, &out)).collect::<Result<_>>()?;
            for (r, t) in done {
                rows.extend(r);
                timings.push(t);
            }
        }
        Ok(())
    })?;

    let summary = summarize(&rows);
    let results_path = out.join(RESULTS_FILE);
    write_csv(&results_path, &rows)?;
    write_csv(&out.join(SUMMARY_FILE), &summary)?;
    write_csv(&out.join(TIMINGS_FILE), &timings)?;
    Ok(SweepOutput { rows, timings, summary, results_path })
}

pub fn write_csv<S: Serialize>(path: &Path, records: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::at(path, Error::Format(e.to_string())))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::at(path, Error::Format(e.to_string())))?;
    write_atomic(path, &bytes)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::at(path, Error::Format(e.to_string())))?;
    r.deserialize().map(|row| row.map_err(|e| Error::at(path, Error::Format(e.to_string())))).collect()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v)?;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Groups successful rows by (density, placement, kind, rate, a, k) in order
/// of first appearance, pooling geometries and seeds.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (Option<u64>, Option<String>, ErrorKind, u64, u64, u64);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: std::collections::HashMap<Key, Vec<&ResultRow>> = Default::default();
    for r in rows.iter().filter(|r| r.status == RowStatus::Ok) {
        let key =
            (r.density.map(f64::to_bits), r.placement.clone(), r.kind, r.rate.to_bits(), r.a.to_bits(), r.k.to_bits());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&ResultRow) -> Option<f64>| g.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let scc = col(|r| r.scc);
            let first = g[0];
            SummaryRow {
                density: first.density,
                placement: first.placement.clone(),
                kind: first.kind,
                rate: first.rate,
                a: first.a,
                k: first.k,
                n: g.len(),
                dsc_mean: mean(&col(|r| r.dsc)),
                mcc_mean: mean(&col(|r| r.mcc)),
                ahd_mean: mean(&col(|r| r.ahd)),
                scc_mean: mean(&scc),
                scc_std: sample_std(&scc),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GeometrySpec, ParticleShape, Placement};
    use crate::metrics::evaluate;
    use crate::volume::GridDims;

    fn small_spec(seed: u64) -> GeometrySpec<f64> {
        GeometrySpec {
            dims: GridDims::cube(24).unwrap(),
            shape: ParticleShape::Sphere { radius: 3.0 },
            target_density: 0.3,
            placement: Placement::Boolean,
            seed,
            rsa_budget: None,
        }
    }

    fn small_config(dir: &Path) -> ExperimentConfig {
        let mut cfg =
            ExperimentConfig::new(vec![GeometrySource::Generated { id: None, spec: small_spec(11) }], dir.join("out"));
        cfg.kinds = vec![ErrorKind::Dilation, ErrorKind::FpCluster, ErrorKind::Uniform];
        cfg.rates = vec![0.02, 0.1];
        cfg.seeds = vec![3, 4];
        cfg.workers = Some(2);
        cfg
    }

    #[test]
    fn single_cell_matches_manual_pipeline() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.kinds = vec![ErrorKind::Erosion];
        cfg.rates = vec![0.05];
        cfg.seeds = vec![9];
        cfg.weights = vec![WeightFunction::new(1.0, 5.0).unwrap()];
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        let row = &out.rows[0];

        let gt = small_spec(11).realize().unwrap();
        let pr = ErrorSpec::new(ErrorKind::Erosion, 0.05, 9).apply(&gt).unwrap();
        let r = evaluate(&gt, &pr, &cfg.weights[0]).unwrap();
        assert_eq!(row.status, RowStatus::Ok);
        assert_eq!(row.error_count, Some(r.counts.errors()));
        assert_eq!(row.dsc, r.dsc);
        assert_eq!(row.mcc, r.mcc);
        assert_eq!(row.ahd, Some(r.ahd));
        assert_eq!(row.scc, r.scc);
        assert_eq!(row.max_error_distance, r.max_error_distance());
        assert_eq!(load_volume(cfg.output_dir.join(&row.gt_volume)).unwrap(), gt);
    }

    #[test]
    fn rows_follow_config_order_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), cfg.cell_count());
        let mut expected = Vec::new();
        for &kind in &cfg.kinds {
            for &rate in &cfg.rates {
                for &seed in &cfg.seeds {
                    for w in &cfg.weights {
                        expected.push((kind, rate, seed, w.a(), w.k()));
                    }
                }
            }
        }
        let got: Vec<_> = out.rows.iter().map(|r| (r.kind, r.rate, r.seed, r.a, r.k)).collect();
        assert_eq!(got, expected);
        assert_eq!(read_results(&out.results_path).unwrap(), out.rows);
        let total = 24usize.pow(3) as f64;
        for r in &out.rows {
            assert!((r.error_rate_measured.unwrap() - r.rate).abs() <= 1.0 / total);
        }
    }

    #[test]
    fn output_is_independent_of_worker_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.workers = Some(1);
        run_sweep(&cfg).unwrap();
        let one = fs::read(cfg.output_dir.join(RESULTS_FILE)).unwrap();
        cfg.workers = Some(4);
        cfg.output_dir = dir.path().join("out4");
        run_sweep(&cfg).unwrap();
        assert_eq!(one, fs::read(cfg.output_dir.join(RESULTS_FILE)).unwrap());
    }

    #[test]
    fn infeasible_cells_become_error_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.kinds = vec![ErrorKind::Erosion];
        cfg.rates = vec![0.9];
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.rows.len(), cfg.cell_count());
        for r in &out.rows {
            assert_eq!(r.status, RowStatus::Infeasible);
            assert!(r.dsc.is_none());
            assert!(r.message.as_deref().unwrap().contains("infeasible"));
        }
        assert!(out.summary.is_empty());
    }

    #[test]
    fn persisted_predictions_reproduce_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.persist_predictions = true;
        cfg.kinds = vec![ErrorKind::Nonuniform];
        let out = run_sweep(&cfg).unwrap();
        for r in &out.rows {
            let gt = load_volume(cfg.output_dir.join(&r.gt_volume)).unwrap();
            let pr = load_volume(cfg.output_dir.join(r.pr_volume.as_ref().unwrap())).unwrap();
            let rep = evaluate(&gt, &pr, &WeightFunction::new(r.a, r.k).unwrap()).unwrap();
            assert_eq!(rep.scc, r.scc);
            assert_eq!(Some(rep.ahd), r.ahd);
        }
    }

    #[test]
    fn loaded_volumes_are_supported() {
        let dir = tempfile::tempdir().unwrap();
        let gt = small_spec(5).realize().unwrap();
        crate::io::store_volume(&gt, dir.path().join("gt.sgv")).unwrap();
        let mut cfg =
            ExperimentConfig::new(vec![GeometrySource::File { id: None, path: PathBuf::from("gt.sgv") }], "out");
        cfg.base_dir = dir.path().to_path_buf();
        cfg.kinds = vec![ErrorKind::Uniform];
        cfg.rates = vec![0.05];
        let out = run_sweep(&cfg).unwrap();
        assert!(out.rows.iter().all(|r| r.geometry_id == "gt" && r.shape.is_none() && r.status == RowStatus::Ok));
        assert!(dir.path().join("out").join(RESULTS_FILE).is_file());
    }

    #[test]
    fn summary_pools_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.summary.len(), cfg.kinds.len() * cfg.rates.len() * cfg.weights.len());
        assert!(out.summary.iter().all(|s| s.n == cfg.seeds.len()));
    }
}
