//! Command-line pipeline: sample data, train flows, trace geodesics, run
//! low-rank approximations and the full metrics report.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 data/format error,
//! 4 numerical failure. Failures print a JSON diagnostic to stderr.

mod figures;
mod geometry_arg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use isoriem_core::analysis::{
    self, compute_metrics, low_rank_rel_rmse, tangent_rank_r, Variant,
};
use isoriem_core::data;
use isoriem_core::diffeo::Diffeomorphism;
use isoriem_core::flow::{self, FlowConfig};
use isoriem_core::geometry;
use isoriem_core::iso::{self, DEFAULT_RESOLUTION};
use isoriem_core::train::{train, TrainConfig};
use isoriem_core::Error;

use geometry_arg::resolve_geometry;

#[derive(Parser)]
#[command(
    name = "isoriem",
    about = "Data-driven pullback Riemannian geometry: flows, iso-geodesics, low-rank analysis"
)]
struct Cli {
    /// Cap the rayon thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Sample(SampleArgs),
    /// Train a flow from a JSON config and a CSV dataset.
    Train(TrainArgs),
    /// Trace a (plain or iso) geodesic between two points.
    Geodesic(GeodesicArgs),
    /// Tangent-space rank-r approximation of a dataset.
    Lowrank(LowrankArgs),
    /// Full metrics report: both rank-r variants, geodesic rel-RMSE, clouds.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    Bimodal,
    Hemisphere,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    dataset: Dataset,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ambient Gaussian noise (hemisphere only).
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

/// On-disk training configuration: the flow architecture plus optimizer
/// settings.
#[derive(Serialize, Deserialize)]
struct TrainFileConfig {
    flow: FlowConfig,
    train: TrainConfig,
    /// Seed for the parameter initialization of the flow.
    #[serde(default)]
    model_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file with {"flow": ..., "train": ..., "model_seed": ...}.
    #[arg(long)]
    config: PathBuf,
    /// Training data CSV (one point per row, header dim_0..).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_checkpoint: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Optional per-epoch loss CSV.
    #[arg(long)]
    losses_csv: Option<PathBuf>,
}

#[derive(Args)]
struct GeodesicArgs {
    /// "modeled", "quadratic", "identity:<d>", or a checkpoint path.
    #[arg(long)]
    geometry: String,
    /// Comma-separated coordinates, or @file.csv:<row> to take a CSV row.
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Number of segments; the output has steps + 1 rows.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Trace the arc-length reparametrized geodesic instead.
    #[arg(long)]
    iso: bool,
    /// Geodesic discretization resolution M.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional 2D SVG overlay (first two coordinates).
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Optional PGM strip for image geometries (one tile per step).
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Plain,
    Iso,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Plain => Variant::Plain,
            VariantArg::Iso => Variant::Iso,
        }
    }
}

#[derive(Args)]
struct LowrankArgs {
    #[arg(long)]
    geometry: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    rank: usize,
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    /// Base point (comma-separated); defaults to the Riemannian barycentre.
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    out_recon: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    geometry: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Geodesic sampling density m.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    m: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long)]
    base: Option<String>,
    /// Metrics report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Point cloud CSVs (default: next to the report).
    #[arg(long)]
    cloud_geodesic: Option<PathBuf>,
    #[arg(long)]
    cloud_reconstruction: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Shape(_) | Error::State(_) => 2,
        Error::Format(_) | Error::Io(_) | Error::Json(_) => 3,
        Error::NonFinite { .. }
        | Error::OutOfImage { .. }
        | Error::IncompleteGeodesic { .. }
        | Error::StepCap { .. }
        | Error::DegenerateDenominator
        | Error::Columns { .. }
        | Error::NonFiniteLoss { .. } => 4,
    }
}

fn kind_for(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Shape(_) => "shape",
        Error::State(_) => "state",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::NonFinite { .. } => "non_finite",
        Error::OutOfImage { .. } => "out_of_image",
        Error::IncompleteGeodesic { .. } => "incomplete_geodesic",
        Error::StepCap { .. } => "step_cap",
        Error::DegenerateDenominator => "degenerate_denominator",
        Error::Columns { .. } => "columns",
        Error::NonFiniteLoss { .. } => "non_finite_loss",
    }
}

fn emit_diagnostic(err: &Error) -> u8 {
    let code = exit_code_for(err);
    let mut obj = serde_json::json!({
        "code": code,
        "kind": kind_for(err),
        "message": err.to_string(),
    });
    if let Error::Columns { indices, .. } = err {
        obj["indices"] = serde_json::json!(indices);
    }
    eprintln!("{obj}");
    code
}

/// Parse "--from"/"--to"/"--base" point syntax: comma-separated floats or
/// `@file.csv:<row>`.
fn parse_point(s: &str) -> Result<Vec<f64>, Error> {
    if let Some(rest) = s.strip_prefix('@') {
        let (path, row) = rest.rsplit_once(':').ok_or_else(|| {
            Error::Config(format!("point reference '{s}' must look like @file.csv:<row>"))
        })?;
        let row: usize = row
            .parse()
            .map_err(|_| Error::Config(format!("bad row index in '{s}'")))?;
        let points = data::read_points_csv(std::path::Path::new(path))?;
        points
            .get(row)
            .cloned()
            .ok_or_else(|| Error::Config(format!("row {row} out of range ({} rows)", points.len())))
    } else {
        s.split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad coordinate '{f}'")))
            })
            .collect()
    }
}

fn load_data_checked(path: &PathBuf, dim: usize) -> Result<Vec<Vec<f64>>, Error> {
    let points = data::read_points_csv(path)?;
    if points.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    if points[0].len() != dim {
        return Err(Error::Shape(format!(
            "data dimension {} does not match geometry dimension {dim}",
            points[0].len()
        )));
    }
    Ok(points)
}

fn cmd_sample(a: &SampleArgs) -> Result<(), Error> {
    if a.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let points = match a.dataset {
        Dataset::Bimodal => data::sample_bimodal_gaussian(a.n, a.seed),
        Dataset::Hemisphere => {
            if a.noise_sigma < 0.0 {
                return Err(Error::Config("--noise-sigma must be >= 0".into()));
            }
            data::sample_hemisphere(a.n, a.seed, a.noise_sigma)
        }
    };
    data::write_points_csv(&a.out, &points)
}

fn cmd_train(a: &TrainArgs) -> Result<(), Error> {
    let cfg: TrainFileConfig = serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(&a.config)?,
    ))?;
    let mut model = flow::build_flow(&cfg.flow, cfg.model_seed)?;
    let points = load_data_checked(&a.data, model.dim())?;
    let report = train(&mut model, &points, &cfg.train)?;
    flow::save(&model, &a.out_checkpoint)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&a.report)?),
        &report,
    )?;
    if let Some(losses) = &a.losses_csv {
        let rows: Vec<Vec<f64>> = report
            .epoch_losses
            .iter()
            .enumerate()
            .map(|(e, &l)| vec![e as f64, l])
            .collect();
        let mut w = std::fs::File::create(losses)?;
        use std::io::Write;
        writeln!(w, "epoch,loss")?;
        for r in rows {
            writeln!(w, "{},{}", r[0] as usize, r[1])?;
        }
    }
    Ok(())
}

fn cmd_geodesic(a: &GeodesicArgs) -> Result<(), Error> {
    if a.steps == 0 {
        return Err(Error::Config("--steps must be at least 1".into()));
    }
    let geom = resolve_geometry(&a.geometry)?;
    let d: &dyn Diffeomorphism<f64> = geom.as_diffeo();
    let from = parse_point(&a.from)?;
    let to = parse_point(&a.to)?;
    if from.len() != d.dim() || to.len() != d.dim() {
        return Err(Error::Shape(format!(
            "endpoints must have dimension {}",
            d.dim()
        )));
    }
    let mut rows = Vec::with_capacity(a.steps + 1);
    if a.iso {
        let g = iso::discretize_geodesic(d, &from, &to, a.resolution)?;
        for k in 0..=a.steps {
            let t = k as f64 / a.steps as f64;
            rows.push(g.eval(d, g.time_change(t))?);
        }
    } else {
        for k in 0..=a.steps {
            let t = k as f64 / a.steps as f64;
            rows.push(geometry::geodesic(d, &from, &to, t)?);
        }
    }
    data::write_points_csv(&a.out, &rows)?;
    if let Some(svg) = &a.svg {
        figures::write_path_svg(svg, &rows)?;
    }
    if let Some(pgm) = &a.pgm {
        let (c, h, w) = geom.image_shape().ok_or_else(|| {
            Error::Config("--pgm needs an image geometry (checkpoint with image flow)".into())
        })?;
        if c != 1 {
            return Err(Error::Config("--pgm supports single-channel images".into()));
        }
        figures::write_strip_pgm(pgm, &rows, h, w)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LowrankReport {
    variant: Variant,
    rank: usize,
    resolution: usize,
    count: usize,
    base: Vec<f64>,
    singular_values: Vec<f64>,
    rel_rmse: f64,
}

fn resolve_base(
    d: &dyn Diffeomorphism<f64>,
    base: &Option<String>,
    points: &[Vec<f64>],
) -> Result<Vec<f64>, Error> {
    match base {
        Some(s) => {
            let p = parse_point(s)?;
            if p.len() != d.dim() {
                return Err(Error::Shape(format!(
                    "base point must have dimension {}",
                    d.dim()
                )));
            }
            Ok(p)
        }
        None => geometry::barycentre(d, points),
    }
}

fn cmd_lowrank(a: &LowrankArgs) -> Result<(), Error> {
    let geom = resolve_geometry(&a.geometry)?;
    let d = geom.as_diffeo();
    let points = load_data_checked(&a.data, d.dim())?;
    let base = resolve_base(d, &a.base, &points)?;
    let res = tangent_rank_r(d, &points, &base, a.rank, a.variant.into(), a.resolution)?;
    let rel = low_rank_rel_rmse(&points, &res.reconstructions, &base)?;
    data::write_points_csv(&a.out_recon, &res.reconstructions)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&a.out_report)?),
        &LowrankReport {
            variant: a.variant.into(),
            rank: a.rank,
            resolution: a.resolution,
            count: points.len(),
            base,
            singular_values: res.sigma.clone(),
            rel_rmse: rel,
        },
    )?;
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs) -> Result<(), Error> {
    let geom = resolve_geometry(&a.geometry)?;
    let d = geom.as_diffeo();
    let points = load_data_checked(&a.data, d.dim())?;
    let base = resolve_base(d, &a.base, &points)?;
    let report = compute_metrics(d, &points, &base, a.rank, a.m, a.resolution)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&a.out)?),
        &report,
    )?;
    let sibling = |suffix: &str| {
        let mut p = a.out.clone();
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "metrics".into());
        p.set_file_name(format!("{stem}_{suffix}.csv"));
        p
    };
    let cg = a.cloud_geodesic.clone().unwrap_or_else(|| sibling("cloud_geodesic"));
    let cr = a
        .cloud_reconstruction
        .clone()
        .unwrap_or_else(|| sibling("cloud_reconstruction"));
    analysis::write_cloud_csv(&cg, &report.cloud_geodesic)?;
    analysis::write_cloud_csv(&cr, &report.cloud_reconstruction)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // ignore the error if a pool already exists (e.g. in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Train(a) => cmd_train(a),
        Command::Geodesic(a) => cmd_geodesic(a),
        Command::Lowrank(a) => cmd_lowrank(a),
        Command::Metrics(a) => cmd_metrics(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!(
                "{}",
                serde_json::json!({"code": 2, "kind": "usage", "message": e.to_string()})
            );
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(emit_diagnostic(&e)),
    }
}
