//! LO-RANSAC absolute pose over many correspondences with a pluggable
//! minimal solver.

mod refine;
mod scene;

pub use refine::{refine_non_minimal, Refinement, MIN_REFINEMENT_POINTS};
pub use scene::{
    load_scene, load_scene_file, save_scene, save_scene_file, simulate_scene, PoseRecord, SceneParams,
    SCENE_VERSION,
};

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineCorrespondence, OrientedPoint, Pose};
use crate::seeding::substream;
use crate::solvers::{
    solve_p1ac_3q3, solve_p1ac_nullspace, solve_p3p, solve_p3p_1ac, CanonicalAffineFrame, Method,
    P1acProblem, PointCorrespondence, SolutionSet,
};

/// Reference cameras with known world-to-camera poses and the oriented
/// points observed in them, plus the query pose when known.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub reference_poses: Vec<Pose<f64>>,
    /// One oriented point per correspondence, in its reference camera frame.
    pub oriented_points: Vec<OrientedPoint<f64>>,
    pub query_truth: Option<Pose<f64>>,
}

/// Affine match between a reference image and the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneCorrespondence {
    pub ac: AffineCorrespondence<f64>,
    pub point: OrientedPoint<f64>,
    pub reference: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub items: Vec<SceneCorrespondence>,
    /// Ground-truth inlier flags, when simulated.
    pub inlier_mask: Option<Vec<bool>>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if let Some(i) = self.items.iter().position(|c| c.reference >= scene.reference_poses.len()) {
            return Err(Error::InvalidArgument(format!(
                "correspondence {i} refers to missing reference {}",
                self.items[i].reference
            )));
        }
        if let Some(mask) = &self.inlier_mask {
            if mask.len() != self.items.len() {
                return Err(Error::InvalidArgument("inlier mask length mismatch".into()));
            }
        }
        Ok(())
    }

    fn problem(&self, scene: &Scene, i: usize) -> P1acProblem<f64> {
        let c = &self.items[i];
        P1acProblem::with_reference(c.ac, c.point, scene.reference_poses[c.reference])
    }

    /// World point and query observation of every correspondence.
    pub fn point_matches(&self, scene: &Scene) -> Vec<PointCorrespondence<f64>> {
        (0..self.len())
            .map(|i| PointCorrespondence {
                world_point: self.problem(scene, i).world_point(),
                observation: self.items[i].ac.y,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub inlier_threshold_px: f64,
    pub max_iterations: usize,
    pub lo_steps: usize,
    pub ls_iterations: usize,
    pub confidence: f64,
    pub min_inliers: usize,
    pub focal_px: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold_px: 16.0,
            max_iterations: 1000,
            lo_steps: 10,
            ls_iterations: 10,
            confidence: 0.99,
            min_inliers: 10,
            focal_px: 1000.0,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold_px > 0.0) || !self.inlier_threshold_px.is_finite() {
            return Err(Error::InvalidArgument("inlier threshold must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidArgument("confidence must lie in (0, 1)".into()));
        }
        if !(self.focal_px > 0.0) || !self.focal_px.is_finite() {
            return Err(Error::InvalidArgument("focal length must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max iterations must be at least 1".into()));
        }
        Ok(())
    }

    fn threshold(&self) -> f64 {
        self.inlier_threshold_px / self.focal_px
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationResult {
    pub pose: Pose<f64>,
    pub inlier_count: usize,
    pub inlier_mask: Vec<bool>,
    /// Minimal samples drawn.
    pub iterations: usize,
    pub elapsed_ms: f64,
    /// `inlier_count >= min_inliers`.
    pub succeeded: bool,
}

/// RANSAC iterations needed to draw one all-inlier sample of size
/// `sample_size` with probability `confidence`, given inlier ratio
/// `inlier_ratio`, clamped to `[1, max_iterations]`.
pub fn adaptive_iteration_bound(inlier_ratio: f64, sample_size: usize, confidence: f64, max_iterations: usize) -> usize {
    let all_inliers = inlier_ratio.clamp(0.0, 1.0).powi(sample_size as i32);
    if all_inliers >= 1.0 {
        return 1;
    }
    if all_inliers <= 0.0 {
        return max_iterations.max(1);
    }
    let bound = ((1.0 - confidence).ln() / (1.0 - all_inliers).ln()).ceil();
    if !bound.is_finite() || bound >= max_iterations as f64 {
        max_iterations.max(1)
    } else {
        (bound as usize).clamp(1, max_iterations.max(1))
    }
}

/// Inliers of `pose`: points in front of the camera whose reprojection
/// error is below `threshold_px` (converted with `focal_px`).
pub fn score_hypothesis(
    pose: &Pose<f64>,
    matches: &[PointCorrespondence<f64>],
    threshold_px: f64,
    focal_px: f64,
) -> (usize, Vec<bool>) {
    score(pose, matches, threshold_px / focal_px)
}

fn score(pose: &Pose<f64>, matches: &[PointCorrespondence<f64>], threshold: f64) -> (usize, Vec<bool>) {
    let threshold_sq = threshold * threshold;
    let mask: Vec<bool> = matches
        .iter()
        .map(|m| {
            let q = pose.transform_point(&m.world_point);
            if !(q[2] > 0.0) {
                return false;
            }
            let dx = q[0] / q[2] - m.observation[0];
            let dy = q[1] / q[2] - m.observation[1];
            dx * dx + dy * dy < threshold_sq
        })
        .collect();
    (mask.iter().filter(|b| **b).count(), mask)
}

fn selected(matches: &[PointCorrespondence<f64>], mask: &[bool]) -> Vec<PointCorrespondence<f64>> {
    matches.iter().zip(mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect()
}

fn hypotheses<R: Rng>(
    method: Method,
    corrs: &CorrespondenceSet,
    scene: &Scene,
    matches: &[PointCorrespondence<f64>],
    sample: &[usize],
    rng: &mut R,
) -> Result<SolutionSet<f64>> {
    match method {
        Method::P3p => solve_p3p(&matches[sample[0]], &matches[sample[1]], &matches[sample[2]]),
        Method::P3p1ac => solve_p3p_1ac(&corrs.problem(scene, sample[0]), &CanonicalAffineFrame::identity()),
        Method::P1acNullspace => solve_p1ac_nullspace(&corrs.problem(scene, sample[0])),
        Method::P1ac3q3 => solve_p1ac_3q3(&corrs.problem(scene, sample[0]), rng),
    }
}

struct Model {
    pose: Pose<f64>,
    count: usize,
    mask: Vec<bool>,
}

/// Polishes `model` by repeated refinement on its inliers, keeping each
/// step only while the inlier count does not drop.
fn local_optimization(model: Model, matches: &[PointCorrespondence<f64>], cfg: &RansacConfig) -> Model {
    let mut best = model;
    for _ in 0..cfg.lo_steps {
        let inliers = selected(matches, &best.mask);
        let Ok(refined) = refine_non_minimal(&best.pose, &inliers, cfg.ls_iterations) else {
            break;
        };
        let (count, mask) = score(&refined.pose, matches, cfg.threshold());
        if count < best.count {
            break;
        }
        let changed = mask != best.mask;
        best = Model {
            pose: refined.pose,
            count,
            mask,
        };
        if !changed {
            break;
        }
    }
    best
}

/// Hypothesize-and-verify with local optimization of every new best model
/// and a final refinement on the inliers.
pub fn localize(
    corrs: &CorrespondenceSet,
    scene: &Scene,
    cfg: &RansacConfig,
    method: Method,
) -> Result<LocalizationResult> {
    let start = Instant::now();
    cfg.validate()?;
    corrs.validate(scene)?;
    let n = corrs.len();
    let sample_size = method.sample_size();
    if n < sample_size.max(1) {
        return Err(Error::InsufficientCorrespondences {
            needed: sample_size.max(1),
            got: n,
        });
    }
    let matches = corrs.point_matches(scene);
    let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, "ransac", 0));

    let mut best: Option<Model> = None;
    let mut bound = cfg.max_iterations;
    let mut iterations = 0;
    while iterations < bound {
        iterations += 1;
        let picked = sample(&mut rng, n, sample_size).into_vec();
        let Ok(set) = hypotheses(method, corrs, scene, &matches, &picked, &mut rng) else {
            continue;
        };
        for pose in set.poses {
            let (count, mask) = score(&pose, &matches, cfg.threshold());
            if best.as_ref().is_some_and(|b| count <= b.count) {
                continue;
            }
            let model = local_optimization(Model { pose, count, mask }, &matches, cfg);
            let ratio = model.count as f64 / n as f64;
            bound = adaptive_iteration_bound(ratio, sample_size, cfg.confidence, cfg.max_iterations);
            best = Some(model);
        }
    }

    let Some(mut model) = best else {
        return Ok(LocalizationResult {
            pose: Pose::identity(),
            inlier_count: 0,
            inlier_mask: vec![false; n],
            iterations,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            succeeded: false,
        });
    };
    let inliers = selected(&matches, &model.mask);
    if let Ok(refined) = refine_non_minimal(&model.pose, &inliers, cfg.ls_iterations) {
        let (count, mask) = score(&refined.pose, &matches, cfg.threshold());
        if count >= model.count {
            model = Model {
                pose: refined.pose,
                count,
                mask,
            };
        }
    }
    Ok(LocalizationResult {
        pose: model.pose,
        inlier_count: model.count,
        inlier_mask: model.mask,
        iterations,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        succeeded: model.count >= cfg.min_inliers,
    })
}

/// Number of uniform samples of size `sample_size` drawn until the first
/// one consisting only of inliers under `mask`, capped at `cap`.
pub fn draws_until_clean_sample<R: Rng + ?Sized>(mask: &[bool], sample_size: usize, cap: usize, rng: &mut R) -> usize {
    for draw in 1..=cap {
        if sample(rng, mask.len(), sample_size).iter().all(|i| mask[i]) {
            return draw;
        }
    }
    cap
}
