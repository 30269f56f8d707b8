//! Random noise-free problem generation shared by unit tests.

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::Rng;

use crate::geometry::{projection_differential, AffineCorrespondence, OrientedPoint, Pose};

pub(crate) struct Synthetic {
    pub ac: AffineCorrespondence<f64>,
    pub op: OrientedPoint<f64>,
    pub truth: Pose<f64>,
}

pub(crate) fn random_rotation<R: Rng>(rng: &mut R, max_deg: f64) -> Matrix3<f64> {
    let axis = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 1e-3 && v.norm() <= 1.0 {
            break v;
        }
    };
    let angle = rng.random_range(0.0..max_deg).to_radians();
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
}

/// Reference camera at the origin, query pose `truth`, point in front of
/// both cameras on a plane that is not grazing for either.
pub(crate) fn random_problem<R: Rng>(rng: &mut R) -> Synthetic {
    loop {
        let r = random_rotation(rng, 179.0);
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let truth = Pose::from_parts(r, t);
        let x = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let depth = rng.random_range(4.0..8.0);
        let n = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..-0.2),
        );
        let Ok(op) = OrientedPoint::<f64>::new(x, depth, n) else {
            continue;
        };
        if op.plane_dot().abs() < 0.2 * op.homogeneous().norm() {
            continue;
        }
        let Ok(diff) = projection_differential(&truth, &op) else {
            continue;
        };
        if diff.q[2] < 0.5 || diff.v.norm() > 3.0 {
            continue;
        }
        // Plane seen at a reasonable angle from the query camera too.
        let nq = r * op.normal;
        if nq.dot(&diff.q).abs() < 0.1 * diff.q.norm() {
            continue;
        }
        let ac = AffineCorrespondence::new(x, diff.v, diff.jacobian);
        return Synthetic { ac, op, truth };
    }
}
