//! `scc`: generate, corrupt and evaluate binary voxel volumes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use scc_core::distance::boundary_distance;
use scc_core::geometry::{GeometrySpec, ParticleShape, Placement, DEFAULT_RSA_BUDGET, SHAPE_NAMES};
use scc_core::harness::{run_sweep, ExperimentConfig};
use scc_core::inject::{ErrorKind, ErrorSpec, VerticalIntensity};
use scc_core::io::{load_raw, load_volume, store_field, store_volume};
use scc_core::metrics::{distance_profile, evaluate, weight_map_slice, write_pgm, MetricReport, WeightFunction};
use scc_core::{GridDims, VoxelGrid};

#[derive(Parser)]
#[command(name = "scc", version, about = "Distance-aware quality metrics for binary voxel segmentations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Realize a particle system as an SGV1 volume.
    Generate(GenerateArgs),
    /// Inject systematic errors into a volume.
    Corrupt(CorruptArgs),
    /// Compare a prediction with a ground truth.
    Evaluate(EvaluateArgs),
    /// Write the boundary distance field as SGF1.
    Edt(EdtArgs),
    /// Export one z-slice of the weight map `1 - f(d)` as PGM.
    Weightmap(WeightmapArgs),
    /// Histogram of signed boundary distances as CSV.
    Profile(ProfileArgs),
    /// Run a config-driven sweep and write CSV results.
    Sweep(SweepArgs),
}

/// A volume on disk: SGV1 by default, headerless bytes with `--raw-dims`.
#[derive(Args)]
struct RawImport {
    /// Read headerless u8 volumes of this size (x fastest), e.g. 256x256x64.
    #[arg(long, value_parser = parse_dims)]
    raw_dims: Option<GridDims>,
    /// With --raw-dims, treat every nonzero byte as foreground.
    #[arg(long, requires = "raw_dims")]
    binarize: bool,
}

impl RawImport {
    fn load(&self, path: &Path) -> Result<VoxelGrid> {
        let grid = match self.raw_dims {
            Some(dims) => load_raw(path, dims, self.binarize)?,
            None => load_volume(path)?,
        };
        Ok(grid)
    }
}

#[derive(Args)]
struct WeightArgs {
    /// Transition speed of the logistic weight.
    #[arg(short, long, default_value_t = 1.0)]
    a: f64,
    /// Proximity range: distance with weight 1/2.
    #[arg(short, long, default_value_t = 5.0)]
    k: f64,
    /// Derive `a` from the distance where errors count as clearly distant.
    #[arg(long, conflicts_with = "a")]
    k_max: Option<f64>,
}

impl WeightArgs {
    fn weight(&self) -> Result<WeightFunction<f64>> {
        Ok(match self.k_max {
            Some(k_max) => WeightFunction::from_range(self.k, k_max)?,
            None => WeightFunction::new(self.a, self.k)?,
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Full geometry spec as TOML; overrides the shape options.
    #[arg(long, conflicts_with_all = ["shape", "params", "size", "dims", "density", "placement", "seed"])]
    spec: Option<PathBuf>,
    /// Reference particle shape.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SHAPE_NAMES), default_value = "sphere")]
    shape: String,
    /// Shape lengths replacing the reference ones: sphere r; cube e;
    /// cylinder r,h; ellipsoid a,b,c; cuboid a,b,c.
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
    /// Cubic grid edge.
    #[arg(long, default_value_t = 128, conflicts_with = "dims")]
    size: usize,
    /// Grid dimensions, e.g. 128x128x64.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<GridDims>,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, value_enum, default_value = "boolean")]
    placement: PlacementArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Proposal budget for non-overlapping placement.
    #[arg(long, default_value_t = DEFAULT_RSA_BUDGET)]
    rsa_budget: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Boolean,
    NonOverlapping,
}

#[derive(Args)]
struct CorruptArgs {
    input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    kind: ErrorKind,
    /// Fraction of all voxels to flip.
    #[arg(long)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nonuniform intensity at the first slice.
    #[arg(long, default_value_t = VerticalIntensity::default().intercept)]
    intercept: f64,
    /// Nonuniform intensity change across the volume.
    #[arg(long, default_value_t = VerticalIntensity::default().slope, allow_hyphen_values = true)]
    slope: f64,
    #[command(flatten)]
    import: RawImport,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct EvaluateArgs {
    ground_truth: PathBuf,
    prediction: PathBuf,
    #[command(flatten)]
    weight: WeightArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    import: RawImport,
}

#[derive(Args)]
struct EdtArgs {
    input: PathBuf,
    #[command(flatten)]
    import: RawImport,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct WeightmapArgs {
    input: PathBuf,
    #[command(flatten)]
    weight: WeightArgs,
    /// Slice index; defaults to the middle slice.
    #[arg(long)]
    z: Option<usize>,
    #[command(flatten)]
    import: RawImport,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    input: PathBuf,
    #[command(flatten)]
    import: RawImport,
    /// Defaults to stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Worker threads; the SCC_WORKERS environment variable takes precedence.
    #[arg(long)]
    workers: Option<usize>,
    /// Replaces the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn parse_dims(s: &str) -> std::result::Result<GridDims, String> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad dimension {p:?} in {s:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let [nx, ny, nz] = match nums[..] {
        [nx, ny] => [nx, ny, 1],
        [nx, ny, nz] => [nx, ny, nz],
        _ => return Err(format!("expected NXxNY or NXxNYxNZ, got {s:?}")),
    };
    GridDims::new(nx, ny, nz).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<ErrorKind, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = ErrorKind::ALL.iter().map(ErrorKind::name).collect();
        format!("unknown error kind {s:?}; expected one of {}", names.join(", "))
    })
}

fn shape_from(name: &str, params: Option<&[f64]>) -> Result<ParticleShape<f64>> {
    let reference = ParticleShape::reference(name).with_context(|| format!("unknown shape {name}"))?;
    let Some(p) = params else { return Ok(reference) };
    let shape = match (reference, p) {
        (ParticleShape::Sphere { .. }, &[radius]) => ParticleShape::Sphere { radius },
        (ParticleShape::Cube { .. }, &[edge]) => ParticleShape::Cube { edge },
        (ParticleShape::Cylinder { .. }, &[radius, height]) => ParticleShape::Cylinder { radius, height },
        (ParticleShape::Ellipsoid { .. }, &[a, b, c]) => ParticleShape::Ellipsoid { semi_axes: [a, b, c] },
        (ParticleShape::Cuboid { .. }, &[a, b, c]) => ParticleShape::Cuboid { edges: [a, b, c] },
        _ => bail!("wrong number of --params for {name}: got {}", p.len()),
    };
    Ok(shape)
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn generate(args: GenerateArgs) -> Result<()> {
    let spec: GeometrySpec<f64> = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing geometry spec {}", path.display()))?
        }
        None => GeometrySpec {
            dims: match args.dims {
                Some(d) => d,
                None => GridDims::cube(args.size)?,
            },
            shape: shape_from(&args.shape, args.params.as_deref())?,
            target_density: args.density,
            placement: match args.placement {
                PlacementArg::Boolean => Placement::Boolean,
                PlacementArg::NonOverlapping => Placement::NonOverlapping,
            },
            seed: args.seed,
            rsa_budget: Some(args.rsa_budget),
        },
    };
    let grid = spec.realize()?;
    store_volume(&grid, &args.output)?;
    eprintln!("{}: {} voxels, density {:.6}", args.output.display(), grid.dims(), grid.density());
    Ok(())
}

fn corrupt(args: CorruptArgs) -> Result<()> {
    let gt = args.import.load(&args.input)?;
    let spec = ErrorSpec {
        kind: args.kind,
        rate: args.rate,
        seed: args.seed,
        vertical: VerticalIntensity { intercept: args.intercept, slope: args.slope },
    };
    let pr = spec.apply(&gt)?;
    store_volume(&pr, &args.output)?;
    eprintln!("{}: flipped {} voxels", args.output.display(), spec.target_count(gt.len())?);
    Ok(())
}

const CSV_HEADER: &str = "tp,fp,fn,tn,error_rate,dsc,mcc,ahd,scc,a,k,max_error_distance,min_error_distance";

fn csv_row(r: &MetricReport<f64>) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let c = &r.counts;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.tp,
        c.fp,
        c.fn_,
        c.tn,
        r.error_rate,
        opt(r.dsc),
        opt(r.mcc),
        r.ahd,
        opt(r.scc),
        r.weight.a(),
        r.weight.k(),
        opt(r.max_error_distance()),
        opt(r.min_error_distance())
    )
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let gt = args.import.load(&args.ground_truth)?;
    let pr = args.import.load(&args.prediction)?;
    let report = evaluate(&gt, &pr, &args.weight.weight()?)?;
    let mut out = io::stdout().lock();
    match args.format {
        Format::Text => writeln!(out, "{report}")?,
        Format::Csv => writeln!(out, "{CSV_HEADER}\n{}", csv_row(&report))?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
    }
    Ok(())
}

fn edt(args: EdtArgs) -> Result<()> {
    let gt = args.import.load(&args.input)?;
    store_field(&boundary_distance(&gt)?, &args.output)?;
    Ok(())
}

fn weightmap(args: WeightmapArgs) -> Result<()> {
    let gt = args.import.load(&args.input)?;
    let d = boundary_distance(&gt)?;
    let z = args.z.unwrap_or(gt.dims().nz() / 2);
    let pixels = weight_map_slice(&d, &args.weight.weight()?, z)?;
    let mut out = output_writer(Some(&args.output))?;
    write_pgm(&mut out, gt.dims(), &pixels)?;
    out.flush()?;
    Ok(())
}

fn profile(args: ProfileArgs) -> Result<()> {
    let gt = args.import.load(&args.input)?;
    let d = boundary_distance(&gt)?;
    let mut out = output_writer(args.output.as_deref())?;
    distance_profile(&gt, &d)?.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Some(dir) = args.output_dir {
        cfg.output_dir = std::env::current_dir()?.join(dir);
    }
    let out = run_sweep(&cfg)?;
    let failed = out.rows.iter().filter(|r| r.status != scc_core::harness::RowStatus::Ok).count();
    eprintln!("{}: {} rows ({failed} failed cells)", out.results_path.display(), out.rows.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Edt(a) => edt(a),
        Command::Weightmap(a) => weightmap(a),
        Command::Profile(a) => profile(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
