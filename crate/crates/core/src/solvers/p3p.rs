//! Point-based baselines: Lambda Twist P3P, and the construction that turns
//! one affine correspondence into three point correspondences.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use super::{nearest_rotation, P1acProblem, SolutionSet};
use crate::error::{Error, Result};
use crate::geometry::{project, unproject, AffineCorrespondence, OrientedPoint, Pose};
use crate::scalar::Real;

pub const MAX_P3P_SOLUTIONS: usize = 4;

const CUBIC_ITERATIONS: usize = 50;
const REFINE_ITERATIONS: usize = 40;

/// A known 3D point and its normalized observation in the query image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointCorrespondence<T: Real> {
    pub world_point: Vector3<T>,
    pub observation: Vector2<T>,
}

impl<T: Real> PointCorrespondence<T> {
    pub fn new(world_point: Vector3<T>, observation: Vector2<T>) -> Result<Self> {
        let finite = world_point.iter().chain(observation.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite point correspondence".into()));
        }
        Ok(Self {
            world_point,
            observation,
        })
    }
}

/// Maps canonical feature coordinates into the reference image; its columns
/// are the offsets at which the two extra points are generated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalAffineFrame<T: Real> {
    pub ax: Matrix2<T>,
}

impl<T: Real> CanonicalAffineFrame<T> {
    pub fn new(ax: Matrix2<T>) -> Result<Self> {
        let det = ax.determinant();
        if !(det.abs() > T::zero()) || !det.is_finite() {
            return Err(Error::InvalidArgument("canonical frame must be invertible".into()));
        }
        Ok(Self { ax })
    }

    pub fn identity() -> Self {
        Self {
            ax: Matrix2::identity(),
        }
    }
}

impl<T: Real> Default for CanonicalAffineFrame<T> {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn scale_canonical_frame<T: Real>(
    frame: &CanonicalAffineFrame<T>,
    scale: T,
) -> Result<CanonicalAffineFrame<T>> {
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("feature scale must be positive, got {scale}")));
    }
    Ok(CanonicalAffineFrame {
        ax: frame.ax * scale,
    })
}

/// The original match plus two points offset along the columns of the
/// canonical frame. World points are expressed in the reference camera frame;
/// query observations follow the affine map, so they are exact only to first
/// order in the offset.
pub fn expand_ac_to_points<T: Real>(
    ac: &AffineCorrespondence<T>,
    op: &OrientedPoint<T>,
    frame: &CanonicalAffineFrame<T>,
) -> Result<[PointCorrespondence<T>; 3]> {
    let centre = PointCorrespondence {
        world_point: op.point(),
        observation: ac.y,
    };
    let generate = |k: usize| -> Result<PointCorrespondence<T>> {
        let offset = frame.ax.column(k).into_owned();
        let x = op.x + offset;
        Ok(PointCorrespondence {
            world_point: unproject(&x, op)?,
            observation: ac.y + ac.a * offset,
        })
    };
    Ok([centre, generate(0)?, generate(1)?])
}

/// P3P on the points generated from the problem's affine correspondence.
pub fn solve_p3p_1ac<T: Real>(
    problem: &P1acProblem<T>,
    frame: &CanonicalAffineFrame<T>,
) -> Result<SolutionSet<T>> {
    let to_world = problem.reference.inverse();
    let mut points = expand_ac_to_points(&problem.ac, &problem.point, frame)?;
    for p in &mut points {
        p.world_point = to_world.transform_point(&p.world_point);
    }
    solve_p3p(&points[0], &points[1], &points[2])
}

/// Lambda Twist P3P. Residuals are the largest reprojection error over the
/// three points; every pose has all three points in front of the camera.
pub fn solve_p3p<T: Real>(
    c1: &PointCorrespondence<T>,
    c2: &PointCorrespondence<T>,
    c3: &PointCorrespondence<T>,
) -> Result<SolutionSet<T>> {
    let corrs = [c1, c2, c3];
    let rays: [Vector3<T>; 3] = std::array::from_fn(|i| {
        let o = corrs[i].observation;
        Vector3::new(o[0], o[1], T::one()).normalize()
    });
    let xs: [Vector3<T>; 3] = std::array::from_fn(|i| corrs[i].world_point);

    let d12 = xs[0] - xs[1];
    let d13 = xs[0] - xs[2];
    let d23 = xs[1] - xs[2];
    let normal = d12.cross(&d13);
    let collinear_tol = T::tol(1e-10);
    if !(normal.norm() > collinear_tol * d12.norm() * d13.norm()) {
        return Err(Error::DegenerateConfiguration("collinear world points"));
    }
    let duplicate_tol = T::one() - T::tol(1e-12);
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if rays[i].dot(&rays[j]) >= duplicate_tol {
            return Err(Error::DegenerateConfiguration("duplicate observation rays"));
        }
    }

    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let b12 = -two * rays[0].dot(&rays[1]);
    let b13 = -two * rays[0].dot(&rays[2]);
    let b23 = -two * rays[1].dot(&rays[2]);
    let a12 = d12.norm_squared();
    let a13 = d13.norm_squared();
    let a23 = d23.norm_squared();
    let dist = Distances {
        a12,
        a13,
        a23,
        b12,
        b13,
        b23,
    };

    // Cubic whose root makes the pencil of the two distance conics degenerate.
    let c31 = -half * b13;
    let c23 = -half * b23;
    let c12 = -half * b12;
    let blob = c12 * c23 * c31 - T::one();
    let s31 = T::one() - c31 * c31;
    let s23 = T::one() - c23 * c23;
    let s12 = T::one() - c12 * c12;
    let p3 = a13 * (a23 * s31 - a13 * s23);
    let p2 = two * blob * a23 * a13 + a13 * (two * a12 + a13) * s23 + a23 * (a23 - a12) * s31;
    let p1 = a23 * (a13 - a23) * s12 - a12 * a12 * s23 - two * a12 * (blob * a23 + a13 * s23);
    let p0 = a12 * (a12 * s23 - a23 * s12);
    let scale = p3.abs().max(p2.abs()).max(p1.abs()).max(p0.abs());
    if !(p3.abs() > T::tol(1e-14) * scale) {
        return Err(Error::DegenerateConfiguration("degenerate conic pencil"));
    }
    let g = cubic_root(p2 / p3, p1 / p3, p0 / p3);

    let m00 = a23 * (T::one() - g);
    let m01 = a23 * b12 * half;
    let m02 = -a23 * b13 * g * half;
    let m11 = a23 - a12 + a13 * g;
    let m12 = b23 * (a13 * g - a12) * half;
    let m22 = g * (a13 - a23) - a12;
    let pencil = Matrix3::new(m00, m01, m02, m01, m11, m12, m02, m12, m22);
    let Some((e1, e2, v1, v2)) = eigen_with_known_zero(&pencil) else {
        return Ok(SolutionSet::default());
    };
    let ratio = (-e2 / e1).max(T::zero()).sqrt();

    let mut lambdas: Vec<Vector3<T>> = Vec::with_capacity(4);
    for s in [ratio, -ratio] {
        let u = v1 - v2 * s;
        if u[0].abs() < u[1].abs() {
            // Solve through λ2 when the λ1 coefficient is small.
            let a = (a23 - a12) * u[2] * u[2] - a12 * u[1] * u[1] + a12 * b23 * u[1] * u[2];
            let b = (two * a23 * u[0] * u[2] - two * a12 * u[0] * u[2] + a12 * b23 * u[0] * u[1]
                - a23 * b12 * u[1] * u[2])
                / a;
            let c = (a23 * u[0] * u[0] - a12 * u[0] * u[0] + a23 * u[1] * u[1]
                - a23 * b12 * u[0] * u[1])
                / a;
            for tau in quadratic_roots(b, c) {
                if !(tau > T::zero()) {
                    continue;
                }
                let l1 = (a13 / (tau * (tau + b13) + T::one())).sqrt();
                let l3 = tau * l1;
                let l2 = -(u[0] * l1 + u[2] * l3) / u[1];
                if l1 > T::zero() && l2 > T::zero() {
                    lambdas.push(Vector3::new(l1, l2, l3));
                }
            }
        } else {
            let w2 = T::one() / (-u[0]);
            let w0 = u[1] * w2;
            let w1 = u[2] * w2;
            let a = T::one() / ((a13 - a12) * w1 * w1 - a12 * b13 * w1 - a12);
            let b = (a13 * b12 * w1 - a12 * b13 * w0 - two * w0 * w1 * (a12 - a13)) * a;
            let c = ((a13 - a12) * w0 * w0 + a13 * b12 * w0 + a13) * a;
            for tau in quadratic_roots(b, c) {
                if !(tau > T::zero()) {
                    continue;
                }
                let l2 = (a23 / (tau * (b23 + tau) + T::one())).sqrt();
                let l3 = tau * l2;
                let l1 = w0 * l2 + w1 * l3;
                if l1 > T::zero() && l2 > T::zero() {
                    lambdas.push(Vector3::new(l1, l2, l3));
                }
            }
        }
    }

    let world_frame = Matrix3::from_columns(&[d12, d13, normal]);
    let Some(world_inv) = world_frame.try_inverse() else {
        return Err(Error::DegenerateConfiguration("collinear world points"));
    };
    let mut out = SolutionSet::default();
    for l in lambdas {
        let l = dist.refine(l);
        if !l.iter().all(|v| v.is_finite() && *v > T::zero()) {
            continue;
        }
        let cam: [Vector3<T>; 3] = std::array::from_fn(|i| rays[i] * l[i]);
        let e1 = cam[0] - cam[1];
        let e2 = cam[0] - cam[2];
        let camera_frame = Matrix3::from_columns(&[e1, e2, e1.cross(&e2)]);
        let r = camera_frame * world_inv;
        let orth = (r.transpose() * r - Matrix3::identity()).norm();
        if !(orth <= T::tol(1e-4)) {
            continue;
        }
        let Some(r) = (if orth <= T::tol(1e-12) {
            Some(r)
        } else {
            nearest_rotation(&r)
        }) else {
            continue;
        };
        let centroid_cam = (cam[0] + cam[1] + cam[2]) / T::lit(3.0);
        let centroid_world = (xs[0] + xs[1] + xs[2]) / T::lit(3.0);
        let pose = Pose::from_parts(r, centroid_cam - r * centroid_world);

        let duplicate = out.poses.iter().any(|p: &Pose<T>| {
            (p.rotation - pose.rotation).amax() < T::tol(1e-10)
                && (p.translation - pose.translation).amax()
                    < T::tol(1e-10) * (T::one() + pose.translation.amax())
        });
        if duplicate || out.len() >= MAX_P3P_SOLUTIONS {
            continue;
        }
        let mut residual = T::zero();
        let mut in_front = true;
        for c in corrs {
            let q = pose.transform_point(&c.world_point);
            in_front &= q[2] > T::zero();
            match project(&q) {
                Ok(v) => residual = residual.max((v - c.observation).amax()),
                Err(_) => residual = T::lit(f64::INFINITY),
            }
        }
        out.push(pose, residual, in_front);
    }
    Ok(out)
}

/// Squared inter-point distances `a` and ray cosines `b = −2 cos`.
struct Distances<T> {
    a12: T,
    a13: T,
    a23: T,
    b12: T,
    b13: T,
    b23: T,
}

impl<T: Real> Distances<T> {
    fn residual(&self, l: &Vector3<T>) -> Vector3<T> {
        let (l1, l2, l3) = (l[0], l[1], l[2]);
        Vector3::new(
            l1 * l1 + l2 * l2 + self.b12 * l1 * l2 - self.a12,
            l1 * l1 + l3 * l3 + self.b13 * l1 * l3 - self.a13,
            l2 * l2 + l3 * l3 + self.b23 * l2 * l3 - self.a23,
        )
    }

    /// Newton on the three distance equations, keeping only improving steps.
    fn refine(&self, mut l: Vector3<T>) -> Vector3<T> {
        let two = T::lit(2.0);
        let mut r = self.residual(&l);
        for _ in 0..REFINE_ITERATIONS {
            let err = r.abs().sum();
            if err == T::zero() {
                break;
            }
            let (l1, l2, l3) = (l[0], l[1], l[2]);
            let jac = Matrix3::new(
                two * l1 + self.b12 * l2,
                two * l2 + self.b12 * l1,
                T::zero(),
                two * l1 + self.b13 * l3,
                T::zero(),
                two * l3 + self.b13 * l1,
                T::zero(),
                two * l2 + self.b23 * l3,
                two * l3 + self.b23 * l2,
            );
            let Some(step) = jac.lu().solve(&r) else {
                break;
            };
            let next = l - step;
            let next_r = self.residual(&next);
            if !(next_r.abs().sum() < err) {
                break;
            }
            l = next;
            r = next_r;
        }
        l
    }
}

/// Real roots of `x² + b x + c`, computed without cancellation.
fn quadratic_roots<T: Real>(b: T, c: T) -> Vec<T> {
    let disc = b * b - T::lit(4.0) * c;
    if !(disc >= T::zero()) {
        return Vec::new();
    }
    let y = disc.sqrt();
    let q = if b < T::zero() { (-b + y) * T::lit(0.5) } else { (-b - y) * T::lit(0.5) };
    if q == T::zero() {
        return vec![T::zero()];
    }
    vec![q, c / q]
}

/// One real root of the monic cubic `x³ + b x² + c x + d`.
fn cubic_root<T: Real>(b: T, c: T, d: T) -> T {
    let three = T::lit(3.0);
    let two = T::lit(2.0);
    let eval = |x: T| ((x + b) * x + c) * x + d;
    let mut r = if b * b >= three * c {
        // Start from the quadratic model around a stationary point, on the
        // side where a root must lie.
        let v = (b * b - three * c).sqrt();
        let t1 = (-b - v) / three;
        let k = eval(t1);
        if k > T::zero() {
            t1 - (-k / (three * t1 + b)).max(T::zero()).sqrt()
        } else {
            let t2 = (-b + v) / three;
            let k = eval(t2);
            t2 + (-k / (three * t2 + b)).max(T::zero()).sqrt()
        }
    } else {
        let r = -b / three;
        if ((three * r + two * b) * r + c).abs() < T::tol(1e-4) {
            r + T::one()
        } else {
            r
        }
    };
    for _ in 0..CUBIC_ITERATIONS {
        let fx = eval(r);
        if fx == T::zero() {
            break;
        }
        let fpx = (three * r + two * b) * r + c;
        if fpx == T::zero() {
            break;
        }
        let step = fx / fpx;
        r -= step;
        if step.abs() <= T::lit(T::UNIT_ROUNDOFF) * r.abs() {
            break;
        }
    }
    r
}

/// The two nonzero eigenvalues (larger magnitude first) and their unit
/// eigenvectors of a symmetric 3×3 matrix known to be singular.
fn eigen_with_known_zero<T: Real>(m: &Matrix3<T>) -> Option<(T, T, Vector3<T>, Vector3<T>)> {
    let b = -m[(0, 0)] - m[(1, 1)] - m[(2, 2)];
    let c = -m[(0, 1)] * m[(0, 1)] - m[(0, 2)] * m[(0, 2)] - m[(1, 2)] * m[(1, 2)]
        + m[(0, 0)] * (m[(1, 1)] + m[(2, 2)])
        + m[(1, 1)] * m[(2, 2)];
    let disc = b * b - T::lit(4.0) * c;
    let y = disc.max(T::zero()).sqrt();
    let (mut e1, mut e2) = ((-b + y) * T::lit(0.5), (-b - y) * T::lit(0.5));
    if e1.abs() < e2.abs() {
        std::mem::swap(&mut e1, &mut e2);
    }
    if e1 == T::zero() {
        return None;
    }
    let vector = |e: T| -> Option<Vector3<T>> {
        // Null vector of (M − eI) via the largest cross product of its rows.
        let shifted = m - Matrix3::identity() * e;
        let rows = [shifted.row(0), shifted.row(1), shifted.row(2)];
        let crosses = [
            rows[0].cross(&rows[1]),
            rows[0].cross(&rows[2]),
            rows[1].cross(&rows[2]),
        ];
        let best = crosses.iter().max_by(|a, b| {
            a.norm_squared()
                .partial_cmp(&b.norm_squared())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        let n = best.norm();
        (n > T::zero()).then(|| best.transpose() / n)
    };
    Some((e1, e2, vector(e1)?, vector(e2)?))
}
