use std::collections::BTreeMap;
use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_noise, generate_problem, NoiseGrid, NoiseSpec, SyntheticProblem};
use crate::error::{Error, Result};
use crate::geometry::{pose_error, Pose};
use crate::seeding::{substream, substream_rng};
use crate::solvers::{
    scale_canonical_frame, solve_p1ac_3q3, solve_p1ac_nullspace, solve_p3p, solve_p3p_1ac,
    CanonicalAffineFrame, Method, SolutionSet,
};

/// Errors above this count as tail failures in the summaries.
pub const TAIL_THRESHOLD: f64 = 1e-6;
const FAILURE_ANGLE_DEG: f64 = 180.0;
const WARM_UP_CALLS: usize = 200;

/// P3P and both P1AC solvers; P3P (1AC) is opt-in.
pub const DEFAULT_METHODS: [Method; 3] = [Method::P3p, Method::P1acNullspace, Method::P1ac3q3];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Scale of the canonical frame used by P3P (1AC).
    pub feature_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: DEFAULT_METHODS.to_vec(),
            seed: 0,
            feature_scale: 1.0,
        }
    }
}

/// One solver call on one instance at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: Method,
    pub point_sigma_px: f64,
    pub affine_sigma: f64,
    pub normal_sigma_deg: f64,
    pub angular_err_deg: f64,
    pub position_err: f64,
    pub solve_time_us: f64,
    /// Instance seed: `generate_problem(seed)` replays the instance.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceError {
    pub angular_deg: f64,
    pub position: f64,
    /// No pose was returned (or the solver raised an error).
    pub failed: bool,
}

impl InstanceError {
    fn failure() -> Self {
        Self {
            angular_deg: FAILURE_ANGLE_DEG,
            position: f64::INFINITY,
            failed: true,
        }
    }

    /// Error of the solution-set member closest to `truth`.
    pub fn best_of(set: &SolutionSet<f64>, truth: &Pose<f64>) -> Self {
        set.poses
            .iter()
            .map(|p| pose_error(p, truth))
            .min_by(|a, b| (a.angular_deg + a.position).total_cmp(&(b.angular_deg + b.position)))
            .map_or_else(Self::failure, |e| Self {
                angular_deg: e.angular_deg,
                position: e.position,
                failed: false,
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub point_sigma_px: f64,
    pub affine_sigma: f64,
    pub normal_sigma_deg: f64,
    pub count: usize,
    /// Instances with an empty solution set; excluded from the means.
    pub failures: usize,
    /// Instances whose angular or position error exceeds 1e-6.
    pub tail_count: usize,
    pub mean_angular_deg: f64,
    pub median_angular_deg: f64,
    pub mean_position: f64,
    pub median_position: f64,
    pub mean_solve_time_us: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<CellSummary>,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    cells: &'a [CellSummary],
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, writer: W) -> Result<()> {
        let mut writer = writer;
        serde_json::to_writer_pretty(&mut writer, &SummaryDocument { cells: &self.summary })?;
        writeln!(writer)?;
        Ok(())
    }

    pub fn cell(&self, method: Method, spec: &NoiseSpec) -> Option<&CellSummary> {
        self.summary.iter().find(|c| {
            c.method == method
                && c.point_sigma_px == spec.point_sigma_px
                && c.affine_sigma == spec.affine_sigma
                && c.normal_sigma_deg == spec.normal_sigma_deg
        })
    }

    pub fn method_summary(&self, method: Method) -> Option<&CellSummary> {
        self.summary.iter().find(|c| c.method == method)
    }

    /// Copy with all timing values zeroed, for determinism checks.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.rows.iter_mut().for_each(|r| r.solve_time_us = 0.0);
        out.summary.iter_mut().for_each(|c| c.mean_solve_time_us = 0.0);
        out
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "method",
    "point_sigma_px",
    "affine_sigma",
    "normal_sigma_deg",
    "angular_err_deg",
    "position_err",
    "solve_time_us",
    "seed",
];

/// Runs `method` on an instance. P3P uses the three point matches; the
/// other methods use the first affine correspondence.
pub fn solve_instance<R: Rng + ?Sized>(
    method: Method,
    problem: &SyntheticProblem,
    feature_scale: f64,
    rng: &mut R,
) -> Result<SolutionSet<f64>> {
    let first = &problem.problems[0];
    match method {
        Method::P3p => {
            let c = problem.point_correspondences();
            solve_p3p(&c[0], &c[1], &c[2])
        }
        Method::P3p1ac => {
            let frame = scale_canonical_frame(&CanonicalAffineFrame::identity(), feature_scale)?;
            solve_p3p_1ac(first, &frame)
        }
        Method::P1acNullspace => solve_p1ac_nullspace(first),
        Method::P1ac3q3 => solve_p1ac_3q3(first, rng),
    }
}

fn method_index(method: Method) -> u64 {
    Method::ALL.iter().position(|m| *m == method).unwrap_or(0) as u64
}

fn validate(n: usize, cfg: &ExperimentConfig) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one problem instance".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods selected".into()));
    }
    scale_canonical_frame(&CanonicalAffineFrame::<f64>::identity(), cfg.feature_scale)?;
    Ok(())
}

/// Zero-noise accuracy over `n` instances.
pub fn run_stability(n: usize, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_cells(&[NoiseSpec::zero()], n, cfg)
}

/// Every cell of `grid` over the same `n` instances, with common noise draws.
pub fn run_noise_sweep(grid: &NoiseGrid, n: usize, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_cells(&grid.cells()?, n, cfg)
}

fn run_cells(cells: &[NoiseSpec], n: usize, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    validate(n, cfg)?;
    log::info!(
        "running {} instances x {} cells x {} methods (seed {})",
        n,
        cells.len(),
        cfg.methods.len(),
        cfg.seed
    );
    // Indexed [instance][cell][method].
    let per_instance: Vec<Vec<Vec<ExperimentRow>>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = substream(cfg.seed, "problem", i);
            let problem = generate_problem(seed)?;
            Ok(cells
                .iter()
                .map(|spec| {
                    let noisy = apply_noise(&problem, spec, seed);
                    cfg.methods
                        .iter()
                        .map(|&method| {
                            let mut rng = substream_rng(seed, "solver", method_index(method));
                            let start = Instant::now();
                            let result = solve_instance(method, &noisy, cfg.feature_scale, &mut rng);
                            let elapsed = start.elapsed().as_secs_f64() * 1e6;
                            let err = result
                                .map(|set| InstanceError::best_of(&set, &problem.truth))
                                .unwrap_or_else(|_| InstanceError::failure());
                            ExperimentRow {
                                method,
                                point_sigma_px: spec.point_sigma_px,
                                affine_sigma: spec.affine_sigma,
                                normal_sigma_deg: spec.normal_sigma_deg,
                                angular_err_deg: err.angular_deg,
                                position_err: err.position,
                                solve_time_us: elapsed,
                                seed,
                            }
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::default();
    for c in 0..cells.len() {
        for m in 0..cfg.methods.len() {
            let rows: Vec<&ExperimentRow> = per_instance.iter().map(|inst| &inst[c][m]).collect();
            report.summary.push(summarize(&rows));
        }
        for inst in &per_instance {
            report.rows.extend(inst[c].iter().cloned());
        }
    }
    Ok(report)
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn summarize(rows: &[&ExperimentRow]) -> CellSummary {
    let first = rows[0];
    let failed = |r: &&&ExperimentRow| r.position_err.is_infinite();
    let ok = || rows.iter().filter(|r| !failed(r));
    CellSummary {
        method: first.method,
        point_sigma_px: first.point_sigma_px,
        affine_sigma: first.affine_sigma,
        normal_sigma_deg: first.normal_sigma_deg,
        count: rows.len(),
        failures: rows.iter().filter(failed).count(),
        tail_count: rows
            .iter()
            .filter(|r| !(r.angular_err_deg <= TAIL_THRESHOLD && r.position_err <= TAIL_THRESHOLD))
            .count(),
        mean_angular_deg: mean(ok().map(|r| r.angular_err_deg)),
        median_angular_deg: median(rows.iter().map(|r| r.angular_err_deg).collect()),
        mean_position: mean(ok().map(|r| r.position_err)),
        median_position: median(rows.iter().map(|r| r.position_err).collect()),
        mean_solve_time_us: mean(rows.iter().map(|r| r.solve_time_us)),
    }
}

/// Mean wall-clock time per solver call, measured sequentially on the
/// calling thread over `n` pre-generated zero-noise instances after a
/// warm-up pass. One row per method; the error columns hold mean errors.
pub fn run_timings(n: usize, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    validate(n, cfg)?;
    if n < 1000 {
        log::warn!("timing over only {n} calls; statistics will be unstable");
    }
    let problems: Vec<SyntheticProblem> = (0..n as u64)
        .into_par_iter()
        .map(|i| generate_problem(substream(cfg.seed, "problem", i)))
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::default();
    for &method in &cfg.methods {
        let mut rng = substream_rng(cfg.seed, "timing", method_index(method));
        for p in problems.iter().take(WARM_UP_CALLS) {
            let _ = black_box(solve_instance(method, black_box(p), cfg.feature_scale, &mut rng));
        }
        let mut results = Vec::with_capacity(n);
        let start = Instant::now();
        for p in &problems {
            results.push(black_box(solve_instance(method, black_box(p), cfg.feature_scale, &mut rng)));
        }
        let mean_us = start.elapsed().as_secs_f64() * 1e6 / n as f64;

        let errors: Vec<InstanceError> = results
            .into_iter()
            .zip(&problems)
            .map(|(r, p)| {
                r.map(|set| InstanceError::best_of(&set, &p.truth))
                    .unwrap_or_else(|_| InstanceError::failure())
            })
            .collect();
        let rows: Vec<ExperimentRow> = errors
            .iter()
            .map(|e| ExperimentRow {
                method,
                point_sigma_px: 0.0,
                affine_sigma: 0.0,
                normal_sigma_deg: 0.0,
                angular_err_deg: e.angular_deg,
                position_err: e.position,
                solve_time_us: mean_us,
                seed: cfg.seed,
            })
            .collect();
        let mut summary = summarize(&rows.iter().collect::<Vec<_>>());
        summary.mean_solve_time_us = mean_us;
        report.rows.push(ExperimentRow {
            angular_err_deg: summary.mean_angular_deg,
            position_err: summary.mean_position,
            ..rows[0].clone()
        });
        report.summary.push(summary);
    }
    Ok(report)
}

/// Outcome of comparing the two P1AC solvers on the same instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub total: usize,
    pub matched: usize,
    /// Instance seeds where the solution sets differ.
    pub discrepant_seeds: Vec<u64>,
}

fn sets_match(a: &SolutionSet<f64>, b: &SolutionSet<f64>, tol: f64) -> bool {
    let covered = |from: &SolutionSet<f64>, to: &SolutionSet<f64>| {
        from.poses.iter().all(|p| {
            to.poses.iter().any(|q| {
                let e = pose_error(p, q);
                e.angular_deg <= tol && e.position <= tol
            })
        })
    };
    a.len() == b.len() && covered(a, b) && covered(b, a)
}

/// Checks on `n` zero-noise instances whether the nullspace and 3Q3 solvers
/// return the same pose sets (nearest-pose pairing within `tol`).
pub fn run_agreement(n: usize, seed: u64, tol: f64) -> Result<AgreementReport> {
    let outcomes: Vec<(u64, bool)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = substream(seed, "problem", i);
            let problem = generate_problem(s)?;
            let first = &problem.problems[0];
            let mut rng = substream_rng(s, "solver", method_index(Method::P1ac3q3));
            let matched = match (solve_p1ac_nullspace(first), solve_p1ac_3q3(first, &mut rng)) {
                (Ok(a), Ok(b)) => sets_match(&a, &b, tol),
                _ => false,
            };
            Ok((s, matched))
        })
        .collect::<Result<_>>()?;
    let discrepant_seeds: Vec<u64> = outcomes.iter().filter(|o| !o.1).map(|o| o.0).collect();
    for s in &discrepant_seeds {
        log::info!("solvers disagree on instance seed {s}");
    }
    Ok(AgreementReport {
        total: n,
        matched: n - discrepant_seeds.len(),
        discrepant_seeds,
    })
}

/// Per-method count of rows, for quick sanity checks.
pub fn rows_per_method(report: &ExperimentReport) -> BTreeMap<Method, usize> {
    let mut out = BTreeMap::new();
    for r in &report.rows {
        *out.entry(r.method).or_insert(0) += 1;
    }
    out
}
