//! Levenberg–Marquardt refinement of a pose on 2D–3D point matches.

use nalgebra::{Matrix2x3, Matrix3, Matrix6, Rotation3, SMatrix, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::solvers::PointCorrespondence;

pub const MIN_REFINEMENT_POINTS: usize = 4;
const MIN_DEPTH: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refinement {
    pub pose: Pose<f64>,
    /// Sum of squared reprojection residuals (calibrated units) before and
    /// after; `cost_after <= cost_before` always.
    pub cost_before: f64,
    pub cost_after: f64,
}

/// Squared reprojection residuals over the points in front of the camera,
/// or `None` when one of `active` has moved behind it.
fn cost(pose: &Pose<f64>, points: &[PointCorrespondence<f64>], active: &[bool]) -> Option<f64> {
    let mut total = 0.0;
    for (c, &on) in points.iter().zip(active) {
        if !on {
            continue;
        }
        let q = pose.transform_point(&c.world_point);
        if !(q[2] > MIN_DEPTH) {
            return None;
        }
        total += (Vector2::new(q[0] / q[2], q[1] / q[2]) - c.observation).norm_squared();
    }
    Some(total)
}

/// Pose update: rotation perturbed on the left by `exp(ω)`, translation
/// shifted by `δt`, so the chart is centred on the current estimate.
fn retract(pose: &Pose<f64>, step: &Vector6<f64>) -> Pose<f64> {
    let omega = Vector3::new(step[0], step[1], step[2]);
    let rot = Rotation3::new(omega).into_inner();
    Pose::from_parts(rot * pose.rotation, rot * pose.translation + Vector3::new(step[3], step[4], step[5]))
}

/// Damped least squares on the reprojection error. Points behind the
/// initial pose are ignored; steps that move a used point behind the camera
/// or do not lower the cost are rejected. Singular normal equations leave
/// the pose unchanged.
pub fn refine_non_minimal(
    pose: &Pose<f64>,
    points: &[PointCorrespondence<f64>],
    iterations: usize,
) -> Result<Refinement> {
    if points.len() < MIN_REFINEMENT_POINTS {
        return Err(Error::InsufficientCorrespondences {
            needed: MIN_REFINEMENT_POINTS,
            got: points.len(),
        });
    }
    let active: Vec<bool> = points
        .iter()
        .map(|c| pose.transform_point(&c.world_point)[2] > MIN_DEPTH)
        .collect();
    let initial = cost(pose, points, &active).unwrap_or(0.0);
    let mut current = *pose;
    let mut current_cost = initial;
    let mut lambda = 1e-3;

    for _ in 0..iterations {
        if current_cost == 0.0 {
            break;
        }
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for (c, &on) in points.iter().zip(&active) {
            if !on {
                continue;
            }
            let q = current.transform_point(&c.world_point);
            let (x, y, z) = (q[0], q[1], q[2]);
            let r = Vector2::new(x / z, y / z) - c.observation;
            let dproj = Matrix2x3::new(1.0 / z, 0.0, -x / (z * z), 0.0, 1.0 / z, -y / (z * z));
            // d(exp(ω) q)/dω = −[q]×
            let skew = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0);
            let mut jq = SMatrix::<f64, 3, 6>::zeros();
            jq.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew));
            jq.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            let j = dproj * jq;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let scale = jtj.diagonal().max();
        if !(scale > 0.0) || !scale.is_finite() {
            break;
        }
        let mut accepted = false;
        for _ in 0..10 {
            let mut damped = jtj;
            for k in 0..6 {
                damped[(k, k)] += lambda * scale;
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                break;
            };
            let candidate = retract(&current, &step);
            match cost(&candidate, points, &active) {
                Some(c) if c < current_cost => {
                    current = candidate;
                    current_cost = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(Refinement {
        pose: current,
        cost_before: initial,
        cost_after: current_cost,
    })
}
