//! `nemo`: synthesize scenes, train height fields, plan and evaluate paths.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nemo::planner::{
    path_csv, plan_path, polyline_rows, read_path_csv, spline_rows, SlopePenalty,
};
use nemo::{
    cast_rays_per_pose, evaluate_path, load_asc, load_checkpoint, orbit_cameras_for, path_cost,
    rasterize_field, read_nray, save_asc, save_checkpoint, train_height_field, write_nray, Bounds, HeightField,
    HeightFieldConfig, HillParams, MetricsError, OptimError, PathMetrics, PlanConfig, PlanError, RayCastConfig,
    RaySampleBatch, TerrainSpec, TrainConfig, TrainError,
};

/// Exit status for invalid input or usage.
const EXIT_USAGE: u8 = 2;
/// Exit status for numerical failure (divergence, degenerate speed).
const EXIT_NUMERIC: u8 = 3;
/// Exit status for file system failures.
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "nemo", version, about = "Height fields from ray samples and slope-aware path planning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write an analytic terrain scene and optionally a ray dump of it.
    Synth(SynthArgs),
    /// Fit a height field to ray samples and write a checkpoint.
    Train(TrainArgs),
    /// Plan a path with A* on the rasterized field, then refine it.
    Plan(PlanArgs),
    /// Compute distance, average slope and smoothness of a path CSV.
    Eval(EvalArgs),
    /// Rasterize a checkpoint to an ESRI ASCII grid.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TerrainArg {
    Flat,
    Gaussian,
    Sinusoid,
}

#[derive(Args)]
struct RayArgs {
    /// Camera poses on the orbit.
    #[arg(long, default_value_t = 16)]
    poses: usize,
    /// Rays per pose.
    #[arg(long, default_value_t = 2048)]
    rays: usize,
    /// Samples per ray.
    #[arg(long, default_value_t = 256)]
    samples: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    terrain: TerrainArg,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.5)]
    width: f64,
    /// Side of the square scene centered at the origin.
    #[arg(long, default_value_t = 4.0)]
    extent: f64,
    #[arg(long, default_value_t = 0.0)]
    base_height: f64,
    /// Scene JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Also cast rays through the scene and write an NRAY dump.
    #[arg(long)]
    emit_rays: bool,
    /// Dump path; defaults to the scene path with an `.nray` extension.
    #[arg(long)]
    rays_out: Option<PathBuf>,
    #[command(flatten)]
    ray: RayArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Scene JSON; rays are cast through it unless `--rays-in` is given.
    #[arg(long, required_unless_present = "rays_in")]
    scene: Option<PathBuf>,
    /// NRAY dump to train on.
    #[arg(long)]
    rays_in: Option<PathBuf>,
    /// Checkpoint output.
    #[arg(long)]
    out: PathBuf,
    /// History CSV output.
    #[arg(long)]
    history: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    quantile: f64,
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 8192)]
    batch_size: usize,
    /// Masking margin in height units; negative disables masking.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    mask_margin: f64,
    #[arg(long, default_value_t = 100)]
    mask_interval: usize,
    /// Seed for initialization, batching and the held-out split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for ray casting when training from a scene.
    #[arg(long, default_value_t = 1)]
    ray_seed: u64,
    #[command(flatten)]
    ray: RayArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Squared,
    Absolute,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    model: PathBuf,
    /// Start point `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    start: [f64; 2],
    /// Goal point `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    goal: [f64; 2],
    /// Directory for grid.asc, astar.csv, path.csv and cost_history.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    grid_cols: usize,
    #[arg(long, default_value_t = 64)]
    grid_rows: usize,
    /// Weight of height change in the A* edge cost.
    #[arg(long, default_value_t = 1.0)]
    slope_weight: f64,
    #[arg(long, default_value_t = 32)]
    waypoints: usize,
    #[arg(long, default_value_t = 8)]
    samples_per_segment: usize,
    /// Path duration in seconds.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1.0)]
    beta1: f64,
    #[arg(long, default_value_t = 1.0)]
    beta2: f64,
    #[arg(long, default_value_t = 1.0)]
    r_v: f64,
    #[arg(long, default_value_t = 1.0)]
    r_omega: f64,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, value_enum, default_value = "squared")]
    penalty: PenaltyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Path CSV (`tau,x,y,z,theta,v,omega`).
    #[arg(long)]
    path: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Metrics CSV output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 64)]
    cols: usize,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let f = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok([f(parts[0])?, f(parts[1])?])
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<HeightField<f64>> {
    let bytes = read(path)?;
    load_checkpoint(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    if !(a.extent > 0.0) {
        bail!(Usage(format!("--extent must be positive, got {}", a.extent)));
    }
    let bounds = Bounds::centered_square(a.extent);
    let spec = match a.terrain {
        TerrainArg::Flat => TerrainSpec::flat(a.base_height, bounds),
        TerrainArg::Gaussian => {
            let mut s = TerrainSpec::single_hill(a.amplitude, a.width, bounds);
            s.base_height = a.base_height;
            s
        }
        TerrainArg::Sinusoid => {
            let mut s = TerrainSpec::flat(a.base_height, bounds);
            s.kind = nemo::TerrainKind::Sinusoid;
            s.parameters = vec![HillParams {
                center: [0.0, 0.0],
                amplitude: a.amplitude,
                width: a.width,
            }];
            s
        }
    };
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    write(&a.out, spec.to_json())?;
    if a.emit_rays {
        let poses = orbit_cameras_for(&spec, a.ray.poses)?;
        let cfg = RayCastConfig::for_terrain(&spec, a.ray.rays, a.ray.samples, a.seed);
        let batch = RaySampleBatch::concat(cast_rays_per_pose(&spec, &poses, &cfg)?);
        let out = a.rays_out.unwrap_or_else(|| a.out.with_extension("nray"));
        write(&out, write_nray(&batch))?;
        println!("wrote {} rays ({} samples) to {}", batch.n_rays(), batch.len(), out.display());
    }
    println!("wrote scene to {}", a.out.display());
    Ok(())
}

/// Square bounds and height range covering the surface samples of a dump.
fn bounds_from_rays(batch: &RaySampleBatch<f32>) -> Result<(Bounds<f32>, f32, f32)> {
    let (mut lo, mut hi) = ([f32::INFINITY; 3], [f32::NEG_INFINITY; 3]);
    for (p, &w) in batch.points.iter().zip(&batch.weights) {
        if w > 0.1 {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
    }
    if !(lo[0] < hi[0] && lo[1] < hi[1]) {
        bail!(Usage("ray dump has no surface samples to derive bounds from".into()));
    }
    let b = Bounds::new(lo[0], hi[0], lo[1], hi[1]);
    Ok((b, lo[2], hi[2]))
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = TrainConfig::<f32> {
        quantile: a.quantile as f32,
        learning_rate: a.learning_rate as f32,
        batch_size: a.batch_size,
        iterations: a.iterations,
        mask_margin: a.mask_margin as f32,
        mask_interval: a.mask_interval,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let scene = match &a.scene {
        Some(p) => Some(TerrainSpec::<f32>::from_json(&read_text(p)?).map_err(|e| Usage(e.to_string()))?),
        None => None,
    };
    let batches = match (&a.rays_in, &scene) {
        (Some(p), _) => vec![read_nray::<f32>(&read(p)?).with_context(|| format!("loading {}", p.display()))?],
        (None, Some(spec)) => {
            let poses = orbit_cameras_for(spec, a.ray.poses)?;
            let rc = RayCastConfig::for_terrain(spec, a.ray.rays, a.ray.samples, a.ray_seed);
            cast_rays_per_pose(spec, &poses, &rc)?
        }
        (None, None) => unreachable!("clap requires --scene or --rays-in"),
    };
    let field_cfg = match &scene {
        Some(spec) => HeightFieldConfig::for_terrain(spec),
        None => {
            let (b, lo, hi) = bounds_from_rays(&batches[0])?;
            HeightFieldConfig::new(b, (hi - lo).max(1.0), 0.5 * (lo + hi))
        }
    };
    let bounds = field_cfg.bounds;
    let model = HeightField::init(field_cfg, a.seed)?;
    let (model, hist) = train_height_field(&batches, model, Some(bounds), &cfg)?;
    write(&a.out, save_checkpoint(&model))?;
    write(&a.history, hist.to_csv())?;
    match hist.held_out_mae {
        Some(m) => println!("held-out mean |e|: {m}"),
        None => println!("held-out mean |e|: n/a (no held-out surface samples)"),
    }
    Ok(())
}

fn plan(a: PlanArgs) -> Result<()> {
    let field = load_model(&a.model)?;
    let cfg = PlanConfig::<f64> {
        grid_cols: a.grid_cols,
        grid_rows: a.grid_rows,
        slope_weight: a.slope_weight,
        n_waypoints: a.waypoints,
        samples_per_segment: a.samples_per_segment,
        horizon: a.horizon,
        beta1: a.beta1,
        beta2: a.beta2,
        r_v: a.r_v,
        r_omega: a.r_omega,
        refine_iterations: a.iterations,
        learning_rate: a.learning_rate,
        seed: a.seed,
        slope_penalty: match a.penalty {
            PenaltyArg::Squared => SlopePenalty::Squared,
            PenaltyArg::Absolute => SlopePenalty::Absolute,
        },
        ..PlanConfig::default()
    };
    let out = plan_path(&field, field.bounds(), a.start, a.goal, &cfg)?;
    let (best, history) = (&out.refined, &out.history);
    let report = path_cost(best, &field, &cfg, cfg.total_samples())?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write(&a.out_dir.join("grid.asc"), save_asc(&out.grid))?;
    write(&a.out_dir.join("astar.csv"), path_csv(&polyline_rows(&out.polyline, &field, cfg.horizon)?))?;
    let rows = spline_rows(best, &field, cfg.total_samples(), cfg.v_min)?;
    write(&a.out_dir.join("path.csv"), path_csv(&rows))?;
    write(&a.out_dir.join("cost_history.csv"), history.to_csv())?;

    let init_cost = history.initial().map(|r| r.j_total).unwrap_or(f64::NAN);
    println!("A* cells: {}", out.cells.len());
    println!("best iterate: {} of {}", history.best_iteration, cfg.refine_iterations);
    println!("J1 = {}", report.j1_integral);
    println!("J2 = {}", report.j2_integral);
    println!("J3 = {}", report.j3_integral);
    println!("J_total = {} (initial {init_cost})", report.j_total);
    println!("wrote grid.asc, astar.csv, path.csv, cost_history.csv to {}", a.out_dir.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let field = load_model(&a.model)?;
    let text = read_text(&a.path)?;
    let rows = read_path_csv(&text).map_err(|e| Usage(format!("{}: {e}", a.path.display())))?;
    if rows.len() < 4 {
        return Err(MetricsError::TooFewPoints {
            got: rows.len(),
            min: 4,
        }
        .into());
    }
    let dt = (rows[rows.len() - 1].tau - rows[0].tau) / (rows.len() - 1) as f64;
    let pts: Vec<[f64; 2]> = rows.iter().map(|r| [r.x, r.y]).collect();
    let m = evaluate_path(&pts, &field, dt)?;
    let csv = format!("{}\n{}\n", PathMetrics::<f64>::CSV_HEADER, m.csv_row());
    let report = format!(
        "points: {}\ndt: {dt}\ndistance_2d: {}\naverage slope: {}\nsmoothness (mean jerk): {}",
        rows.len(),
        m.distance_2d,
        m.average_slope,
        m.smoothness
    );
    match &a.out {
        Some(p) => {
            write(p, csv)?;
            println!("{report}");
        }
        None => {
            print!("{csv}");
            eprintln!("{report}");
        }
    }
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let field = load_model(&a.model)?;
    let grid = rasterize_field(&field, field.bounds(), a.cols, a.rows)?;
    write(&a.out, save_asc(&grid))?;
    // confirm the written raster loads back
    load_asc::<f64>(&read_text(&a.out)?)?;
    println!("wrote {}x{} grid to {}", a.cols, a.rows, a.out.display());
    Ok(())
}

/// Invalid input detected by the binary itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return match e {
                TrainError::Diverged { .. } | TrainError::Optim(_) => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            };
        }
        if let Some(e) = cause.downcast_ref::<PlanError>() {
            return match e {
                PlanError::DegenerateSpeed { .. } | PlanError::Optim(_) => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            };
        }
        if cause.is::<OptimError>() {
            return EXIT_NUMERIC;
        }
    }
    EXIT_USAGE
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("NEMO_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Usage(format!("NEMO_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            bail!(Usage("NEMO_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<()> {
        init_threads()?;
        match cli.cmd {
            Cmd::Synth(a) => synth(a),
            Cmd::Train(a) => train(a),
            Cmd::Plan(a) => plan(a),
            Cmd::Eval(a) => eval(a),
            Cmd::Export(a) => export(a),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
