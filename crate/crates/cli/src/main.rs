//! Command-line front end: synthetic experiments, scene generation and
//! localization with reproducible seeds.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use p1ac::bench::{
    parse_grid, run_noise_sweep, run_stability, run_timings, ExperimentConfig, ExperimentReport, NoiseGrid,
    NoiseSpec, DEFAULT_FOCAL_PX, DEFAULT_METHODS,
};
use p1ac::localizer::{
    load_scene_file, localize, save_scene_file, simulate_scene, LocalizationResult, PoseRecord, RansacConfig,
    SceneParams,
};
use p1ac::solvers::Method;
use p1ac::{pose_error, Error};

#[derive(Parser, Debug)]
#[command(name = "p1ac", version, about = "Absolute pose from affine correspondences: experiments and localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Zero-noise accuracy of each solver.
    Stability(StabilityArgs),
    /// Accuracy over a grid of point, affine and normal noise levels.
    NoiseSweep(NoiseSweepArgs),
    /// Mean solve time per method.
    Timings(TimingsArgs),
    /// Robust localization on a scene file.
    Localize(LocalizeArgs),
    /// Simulate a scene file.
    GenScene(GenSceneArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct CommonArgs {
    /// Master seed; every random draw derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated methods: p3p, p3p-1ac, p1ac-null, p1ac-3q3.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Canonical frame scale for P3P (1AC).
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    feature_scale: f64,
    /// Output file; standard output when omitted. With CSV output a JSON
    /// summary is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

impl CommonArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            methods: self.methods.clone().unwrap_or_else(|| DEFAULT_METHODS.to_vec()),
            seed: self.seed,
            feature_scale: self.feature_scale,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct StabilityArgs {
    #[arg(long, default_value_t = 10_000, value_parser = at_least_one)]
    n: usize,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Serialize)]
struct NoiseSweepArgs {
    /// Instances per cell.
    #[arg(long, default_value_t = 1000, value_parser = at_least_one)]
    n: usize,
    // Fully qualified `Vec` so clap parses the whole value as one grid.
    /// Point noise levels in pixels: `a,b,c` or `start:stop:count`.
    #[arg(long, value_parser = grid)]
    point_grid: Option<::std::vec::Vec<f64>>,
    /// Affine noise levels.
    #[arg(long, value_parser = grid)]
    affine_grid: Option<::std::vec::Vec<f64>>,
    /// Normal noise levels in degrees.
    #[arg(long, value_parser = grid)]
    normal_grid: Option<::std::vec::Vec<f64>>,
    /// Pixels per calibrated unit.
    #[arg(long, default_value_t = DEFAULT_FOCAL_PX, value_parser = positive)]
    focal: f64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Serialize)]
struct TimingsArgs {
    #[arg(long, default_value_t = 10_000, value_parser = at_least_one)]
    n: usize,
    /// Fail unless mean times are strictly ordered, e.g. `p3p<3q3<null`.
    #[arg(long, value_parser = parse_order)]
    assert_order: Option<::std::vec::Vec<Method>>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Serialize)]
struct LocalizeArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "p1ac-3q3", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 16.0, value_parser = positive)]
    threshold_px: f64,
    #[arg(long, default_value_t = 1000, value_parser = at_least_one)]
    max_iterations: usize,
    #[arg(long, default_value_t = 10)]
    lo_steps: usize,
    #[arg(long, default_value_t = 10)]
    ls_iterations: usize,
    #[arg(long, default_value_t = 0.99, value_parser = probability)]
    confidence: f64,
    #[arg(long, default_value_t = 10)]
    min_inliers: usize,
    #[arg(long, default_value_t = DEFAULT_FOCAL_PX, value_parser = positive)]
    focal: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GenSceneArgs {
    #[arg(long, default_value_t = 4, value_parser = at_least_one)]
    refs: usize,
    #[arg(long, default_value_t = 200, value_parser = at_least_one)]
    corrs: usize,
    #[arg(long, default_value_t = 0.5, value_parser = outlier_ratio)]
    outlier_ratio: f64,
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    point_noise_px: f64,
    #[arg(long, default_value_t = 0.005, value_parser = non_negative)]
    affine_noise: f64,
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    normal_noise_deg: f64,
    #[arg(long, default_value_t = DEFAULT_FOCAL_PX, value_parser = positive)]
    focal: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_order(s: &str) -> Result<Vec<Method>, String> {
    let methods = s.split('<').map(parse_method).collect::<Result<Vec<_>, _>>()?;
    if methods.len() < 2 {
        return Err("expected at least two methods separated by '<'".into());
    }
    Ok(methods)
}

fn grid(s: &str) -> Result<Vec<f64>, String> {
    parse_grid(s).map_err(|e| e.to_string())
}

fn number(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| e.to_string())
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a non-negative number, got {s}"))
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("expected a value in (0, 1), got {s}"))
    }
}

fn outlier_ratio(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("outlier ratio must lie in [0, 1), got {s}"))
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s}")),
    }
}

fn log_config<T: Serialize>(name: &str, args: &T) {
    match serde_json::to_string(args) {
        Ok(json) => log::info!("{name} configuration: {json}"),
        Err(_) => log::info!("{name} configuration unavailable"),
    }
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn summary_path(path: &Path) -> PathBuf {
    path.with_extension("summary.json")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

fn write_report(report: &ExperimentReport, out: Option<&Path>, format: Format) -> anyhow::Result<()> {
    let mut w = open_output(out)?;
    match format {
        Format::Csv => {
            report.write_csv(&mut w)?;
            w.flush()?;
            if let Some(path) = out {
                let summary = summary_path(path);
                let mut s = open_output(Some(&summary))?;
                report.write_summary_json(&mut s)?;
                s.flush()?;
                log::info!("wrote {} and {}", path.display(), summary.display());
            }
        }
        Format::Json => {
            report.write_summary_json(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn stability(args: &StabilityArgs) -> anyhow::Result<()> {
    log_config("stability", args);
    let report = run_stability(args.n, &args.common.config())?;
    for c in &report.summary {
        log::info!(
            "{}: mean angular {:.3e} deg, mean position {:.3e}, median angular {:.3e} deg, failures {}, tail {}",
            c.method,
            c.mean_angular_deg,
            c.mean_position,
            c.median_angular_deg,
            c.failures,
            c.tail_count
        );
    }
    write_report(&report, args.common.out.as_deref(), args.common.format)
}

fn noise_sweep(args: &NoiseSweepArgs) -> anyhow::Result<()> {
    log_config("noise-sweep", args);
    let cfg = args.common.config();
    let custom = args.point_grid.is_some() || args.affine_grid.is_some() || args.normal_grid.is_some();
    if custom {
        let grid = NoiseGrid {
            point_sigma_px: args.point_grid.clone().unwrap_or_else(|| vec![0.0]),
            affine_sigma: args.affine_grid.clone().unwrap_or_else(|| vec![0.0]),
            normal_sigma_deg: args.normal_grid.clone().unwrap_or_else(|| vec![0.0]),
            focal_px: args.focal,
        };
        let report = run_noise_sweep(&grid, args.n, &cfg)?;
        return write_report(&report, args.common.out.as_deref(), args.common.format);
    }
    for (name, mut grid) in [
        ("point_affine", NoiseGrid::point_affine()),
        ("point_normal", NoiseGrid::point_normal()),
    ] {
        grid.focal_px = args.focal;
        log::info!("default grid {name}");
        let report = run_noise_sweep(&grid, args.n, &cfg)?;
        let out = args.common.out.as_deref().map(|p| with_suffix(p, name));
        write_report(&report, out.as_deref(), args.common.format)?;
    }
    Ok(())
}

fn timings(args: &TimingsArgs) -> anyhow::Result<()> {
    log_config("timings", args);
    let mut cfg = args.common.config();
    if let Some(order) = &args.assert_order {
        for m in order {
            if !cfg.methods.contains(m) {
                cfg.methods.push(*m);
            }
        }
    }
    let report = run_timings(args.n, &cfg)?;
    for c in &report.summary {
        log::info!("{}: {:.3} us per call", c.method, c.mean_solve_time_us);
    }
    write_report(&report, args.common.out.as_deref(), args.common.format)?;
    if let Some(order) = &args.assert_order {
        let time = |m: Method| report.method_summary(m).map(|c| c.mean_solve_time_us).unwrap_or(f64::NAN);
        for pair in order.windows(2) {
            let (a, b) = (time(pair[0]), time(pair[1]));
            if !(a < b) {
                bail!("timing order violated: {} ({a:.3} us) is not faster than {} ({b:.3} us)", pair[0], pair[1]);
            }
        }
        log::info!("timing order satisfied");
    }
    Ok(())
}

#[derive(Serialize)]
struct LocalizeOutput {
    method: Method,
    pose: PoseRecord,
    inlier_count: usize,
    iterations: usize,
    elapsed_ms: f64,
    succeeded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    angular_err_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    position_err: Option<f64>,
    /// Ground-truth inliers among the reported inliers, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    true_inliers_found: Option<usize>,
}

fn localize_cmd(args: &LocalizeArgs) -> anyhow::Result<()> {
    log_config("localize", args);
    let (scene, corrs) =
        load_scene_file(&args.scene).with_context(|| format!("cannot load scene {}", args.scene.display()))?;
    let cfg = RansacConfig {
        inlier_threshold_px: args.threshold_px,
        max_iterations: args.max_iterations,
        lo_steps: args.lo_steps,
        ls_iterations: args.ls_iterations,
        confidence: args.confidence,
        min_inliers: args.min_inliers,
        focal_px: args.focal,
        seed: args.seed,
    };
    let result: LocalizationResult = localize(&corrs, &scene, &cfg, args.method)?;
    let err = scene.query_truth.as_ref().map(|t| pose_error(&result.pose, t));
    let output = LocalizeOutput {
        method: args.method,
        pose: PoseRecord::from(&result.pose),
        inlier_count: result.inlier_count,
        iterations: result.iterations,
        elapsed_ms: result.elapsed_ms,
        succeeded: result.succeeded,
        angular_err_deg: err.map(|e| e.angular_deg),
        position_err: err.map(|e| e.position),
        true_inliers_found: corrs
            .inlier_mask
            .as_ref()
            .map(|m| m.iter().zip(&result.inlier_mask).filter(|(a, b)| **a && **b).count()),
    };
    log::info!(
        "{}: {} inliers after {} iterations ({})",
        args.method,
        result.inlier_count,
        result.iterations,
        if result.succeeded { "succeeded" } else { "failed" }
    );
    let mut w = open_output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &output)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn gen_scene(args: &GenSceneArgs) -> anyhow::Result<()> {
    log_config("gen-scene", args);
    let params = SceneParams {
        references: args.refs,
        correspondences: args.corrs,
        outlier_ratio: args.outlier_ratio,
        noise: NoiseSpec::new(args.point_noise_px, args.affine_noise, args.normal_noise_deg, args.focal)?,
        seed: args.seed,
    };
    let (scene, corrs) = simulate_scene(&params)?;
    save_scene_file(&args.out, &scene, &corrs).with_context(|| format!("cannot write {}", args.out.display()))?;
    log::info!(
        "wrote {} correspondences ({} outliers) to {}",
        corrs.len(),
        params.outlier_count(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests print to stdout and succeed.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Stability(a) => stability(a),
        Command::NoiseSweep(a) => noise_sweep(a),
        Command::Timings(a) => timings(a),
        Command::Localize(a) => localize_cmd(a),
        Command::GenScene(a) => gen_scene(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::InvalidArgument(_)) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
