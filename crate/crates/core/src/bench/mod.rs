//! Synthetic experiments: random problem generation, the three noise models,
//! and the stability, noise-sweep and timing runs.

mod experiments;
mod grid;

pub use experiments::{
    rows_per_method, run_agreement, run_noise_sweep, run_stability, run_timings, solve_instance,
    AgreementReport, CellSummary, ExperimentConfig, ExperimentReport, ExperimentRow, InstanceError,
    CSV_HEADER, DEFAULT_METHODS, TAIL_THRESHOLD,
};
pub use grid::{parse_grid, NoiseGrid};

use nalgebra::{Matrix2, Rotation3, Unit, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{projection_differential, random_rotation, AffineCorrespondence, OrientedPoint, Pose};
use crate::seeding::substream_rng;
use crate::solvers::{P1acProblem, PointCorrespondence};

/// Correspondences per generated instance.
pub const CORRESPONDENCES_PER_PROBLEM: usize = 3;
pub const DEFAULT_FOCAL_PX: f64 = 1000.0;

const MAX_ATTEMPTS: usize = 10_000;
/// Smallest accepted |cos| between a viewing ray and the plane normal.
const MIN_INCIDENCE_COS: f64 = 0.05;
/// Smallest accepted depth of a point in the query camera.
const MIN_QUERY_DEPTH: f64 = 0.1;

/// A query pose and three affine correspondences seen from a reference
/// camera at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticProblem {
    pub truth: Pose<f64>,
    pub problems: Vec<P1acProblem<f64>>,
    pub seed: u64,
}

impl SyntheticProblem {
    /// The three correspondences as 2D–3D point matches.
    pub fn point_correspondences(&self) -> Vec<PointCorrespondence<f64>> {
        self.problems
            .iter()
            .map(|p| PointCorrespondence {
                world_point: p.world_point(),
                observation: p.ac.y,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Observation noise, pixels.
    pub point_sigma_px: f64,
    /// Per-entry noise of the affine matrix.
    pub affine_sigma: f64,
    /// Normal rotation angle noise, degrees.
    pub normal_sigma_deg: f64,
    /// Pixels per calibrated unit.
    pub focal_px: f64,
}

impl NoiseSpec {
    pub fn new(point_sigma_px: f64, affine_sigma: f64, normal_sigma_deg: f64, focal_px: f64) -> Result<Self> {
        let spec = Self {
            point_sigma_px,
            affine_sigma,
            normal_sigma_deg,
            focal_px,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero() -> Self {
        Self {
            point_sigma_px: 0.0,
            affine_sigma: 0.0,
            normal_sigma_deg: 0.0,
            focal_px: DEFAULT_FOCAL_PX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.point_sigma_px, self.affine_sigma, self.normal_sigma_deg];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigmas must be finite and non-negative: {sigmas:?}")));
        }
        if !(self.focal_px > 0.0) || !self.focal_px.is_finite() {
            return Err(Error::InvalidArgument(format!("focal length must be positive, got {}", self.focal_px)));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.point_sigma_px == 0.0 && self.affine_sigma == 0.0 && self.normal_sigma_deg == 0.0
    }
}

/// Random unit vector.
pub(crate) fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Deterministic in `seed`. Instances where a point is behind (or almost
/// at) the query camera, or where a viewing ray nearly grazes the local
/// plane in either view, are redrawn.
pub fn generate_problem(seed: u64) -> Result<SyntheticProblem> {
    let mut rng = substream_rng(seed, "generate", 0);
    for _ in 0..MAX_ATTEMPTS {
        let truth = Pose::from_parts(random_rotation(&mut rng), random_direction(&mut rng));
        let problems: Option<Vec<_>> = (0..CORRESPONDENCES_PER_PROBLEM)
            .map(|_| generate_correspondence(&mut rng, &truth))
            .collect();
        let Some(problems) = problems else {
            continue;
        };
        let p: Vec<Vector3<f64>> = problems.iter().map(|p| p.point.point()).collect();
        let (d1, d2) = (p[1] - p[0], p[2] - p[0]);
        if d1.cross(&d2).norm() < 1e-3 * d1.norm() * d2.norm() {
            continue;
        }
        return Ok(SyntheticProblem { truth, problems, seed });
    }
    Err(Error::DegenerateConfiguration("no valid synthetic instance within the retry budget"))
}

pub(crate) fn generate_correspondence<R: Rng + ?Sized>(rng: &mut R, truth: &Pose<f64>) -> Option<P1acProblem<f64>> {
    let x = Vector2::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
    let depth = rng.random_range(4.0..=8.0);
    let xh = Vector3::new(x[0], x[1], 1.0);
    let mut normal = random_direction(rng);
    // Face the reference camera: nᵀp < 0.
    if normal.dot(&xh) > 0.0 {
        normal = -normal;
    }
    if normal.dot(&xh).abs() < MIN_INCIDENCE_COS * xh.norm() {
        return None;
    }
    let op = OrientedPoint::new(x, depth, normal).ok()?;
    let diff = projection_differential(truth, &op).ok()?;
    if !(diff.q[2] > MIN_QUERY_DEPTH) {
        return None;
    }
    let normal_query = truth.rotation * op.normal;
    if normal_query.dot(&diff.q).abs() < MIN_INCIDENCE_COS * diff.q.norm() {
        return None;
    }
    let ac = AffineCorrespondence::new(x, diff.v, diff.jacobian);
    Some(P1acProblem::new(ac, op))
}

/// Perturbs observations (both images), affine matrices and normals. The
/// same standard-normal draws are used whatever the sigmas, so noise levels
/// compared on one seed differ only in scale. Zero sigmas leave the
/// corresponding fields bit-identical.
pub fn apply_noise(problem: &SyntheticProblem, spec: &NoiseSpec, seed: u64) -> SyntheticProblem {
    let mut rng = substream_rng(seed, "noise", 0);
    let mut out = problem.clone();
    for p in &mut out.problems {
        perturb(p, spec, &mut rng);
    }
    out
}

/// Noise model for a single correspondence; consumes the same number of
/// draws whatever the sigmas.
pub fn perturb<R: Rng + ?Sized>(p: &mut P1acProblem<f64>, spec: &NoiseSpec, rng: &mut R) {
    let mut draw = || rng.sample::<f64, _>(StandardNormal);
    let dx = Vector2::new(draw(), draw());
    let dy = Vector2::new(draw(), draw());
    let da = Matrix2::new(draw(), draw(), draw(), draw());
    let angle = draw().abs();
    let axis = random_direction(rng);

    let point_sigma = spec.point_sigma_px / spec.focal_px;
    if point_sigma > 0.0 {
        let x = p.ac.x + dx * point_sigma;
        p.ac.x = x;
        p.point.x = x;
        p.ac.y += dy * point_sigma;
    }
    if spec.affine_sigma > 0.0 {
        p.ac.a += da * spec.affine_sigma;
    }
    if spec.normal_sigma_deg > 0.0 {
        let angle = (angle * spec.normal_sigma_deg).to_radians();
        let rot = Rotation3::from_axis_angle(&Unit::new_unchecked(axis), angle);
        p.point.normal = rot * p.point.normal;
    }
}
