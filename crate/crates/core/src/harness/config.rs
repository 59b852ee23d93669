use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometrySpec;
use crate::inject::{target_count, ErrorKind, VerticalIntensity};
use crate::metrics::WeightFunction;

/// The config schema version this build reads and writes.
pub const CONFIG_VERSION: u32 = 1;

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "SCC_WORKERS";

/// Seven evenly spaced error rates from 1% to 15%.
pub const DEFAULT_RATES: [f64; 7] =
    [0.01, 0.0333333333333333, 0.0566666666666667, 0.08, 0.1033333333333333, 0.1266666666666667, 0.15];

/// One ground truth: generated from particle parameters or loaded from an `SGV1` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySource {
    File {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        path: PathBuf,
    },
    Generated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        #[serde(flatten)]
        spec: GeometrySpec<f64>,
    },
}

impl GeometrySource {
    /// Row label: the explicit id, the file stem, or a name built from the geometry parameters.
    pub fn id(&self) -> String {
        match self {
            GeometrySource::File { id: Some(id), .. } | GeometrySource::Generated { id: Some(id), .. } => id.clone(),
            GeometrySource::File { path, .. } => {
                path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
            }
            GeometrySource::Generated { spec, .. } => format!(
                "{}-{}-{}-{}-s{}",
                spec.shape.name(),
                spec.placement.name(),
                spec.target_density,
                spec.dims,
                spec.seed
            ),
        }
    }
}

/// A sweep: every geometry x kind x rate x seed x weight combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub geometries: Vec<GeometrySource>,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ErrorKind>,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
    #[serde(default = "default_weights")]
    pub weights: Vec<WeightFunction<f64>>,
    /// Injection seeds, one replicate each.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Intensity profile for nonuniform injection.
    #[serde(default)]
    pub vertical: VerticalIntensity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Also store every corrupted volume next to the ground truths.
    #[serde(default)]
    pub persist_predictions: bool,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("sweep-out")
}

fn default_kinds() -> Vec<ErrorKind> {
    ErrorKind::ALL.to_vec()
}

fn default_rates() -> Vec<f64> {
    DEFAULT_RATES.to_vec()
}

fn default_weights() -> Vec<WeightFunction<f64>> {
    vec![WeightFunction::new(1.0, 5.0).unwrap(), WeightFunction::new(2.0, 3.0).unwrap()]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// Config with default grids for the given geometries.
    pub fn new(geometries: Vec<GeometrySource>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            version: CONFIG_VERSION,
            output_dir: output_dir.into(),
            geometries,
            kinds: default_kinds(),
            rates: default_rates(),
            weights: default_weights(),
            seeds: default_seeds(),
            vertical: VerticalIntensity::default(),
            workers: None,
            persist_predictions: false,
            base_dir: PathBuf::new(),
        }
    }

    /// Parses and validates TOML; relative paths stay relative to `base_dir`.
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::at(path, e.into()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| Error::at(path, e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported version {} (expected {CONFIG_VERSION})", self.version));
        }
        for (name, len) in [
            ("geometries", self.geometries.len()),
            ("kinds", self.kinds.len()),
            ("rates", self.rates.len()),
            ("weights", self.weights.len()),
            ("seeds", self.seeds.len()),
        ] {
            if len == 0 {
                return bad(format!("`{name}` must not be empty"));
            }
        }
        for &r in &self.rates {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("rate {r} is outside (0, 1)"));
            }
        }
        if self.workers == Some(0) {
            return bad("`workers` must be at least 1".into());
        }
        let mut ids = std::collections::HashSet::new();
        for g in &self.geometries {
            if let GeometrySource::Generated { spec, .. } = g {
                spec.validate().map_err(|e| Error::Config(format!("geometry {}: {e}", g.id())))?;
                // Rates that round to zero errors fail every cell; reject them up front.
                for &r in &self.rates {
                    target_count(r, spec.dims.len()).map_err(|e| Error::Config(format!("geometry {}: {e}", g.id())))?;
                }
            }
            if !ids.insert(g.id()) {
                return bad(format!("duplicate geometry id {}", g.id()));
            }
        }
        Ok(())
    }

    /// Resolves `p` against the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks that every referenced volume exists.
    pub fn check_paths(&self) -> Result<()> {
        for g in &self.geometries {
            if let GeometrySource::File { path, .. } = g {
                let p = self.resolve(path);
                if !p.is_file() {
                    return Err(Error::Config(format!("geometry {}: {} does not exist", g.id(), p.display())));
                }
            }
        }
        Ok(())
    }

    /// Worker count: the environment override, then the config, then all cores.
    pub fn effective_workers(&self) -> Result<usize> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
            };
        }
        Ok(self.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
    }

    /// Number of result rows a run produces.
    pub fn cell_count(&self) -> usize {
        self.geometries.len() * self.kinds.len() * self.rates.len() * self.seeds.len() * self.weights.len()
    }
}
