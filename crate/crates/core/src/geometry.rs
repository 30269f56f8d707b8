//! Poses, projection, local plane unprojection and the image-to-image
//! differential induced by a locally planar surface.
//!
//! All image coordinates are calibrated (intrinsics already removed), so a
//! pixel position `u` corresponds to the ray `[u, 1]`.

use nalgebra::{Matrix2, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Guard used for divisions by depths, plane offsets and `m`.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// Rigid transform mapping world (or reference) coordinates into a camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not orthonormal with
    /// determinant one (tolerance `1e-9`).
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        let pose = Self::from_parts(rotation, translation);
        let err = pose.orthogonality_error();
        let tol = T::tol(1e-9);
        if !(err <= tol) || (rotation.determinant() - T::one()).abs() > tol {
            return Err(Error::InvalidRotation(err.as_f64()));
        }
        Ok(pose)
    }

    /// Builds a pose without validation.
    pub fn from_parts(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthogonality_error(&self) -> T {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// Camera center `c = −Rᵀt` in the source frame.
    pub fn center(&self) -> Vector3<T> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::from_parts(rt, -(rt * self.translation))
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &Pose<T>) -> Self {
        Self::from_parts(
            self.rotation * first.rotation,
            self.rotation * first.translation + self.translation,
        )
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose::from_parts(
            self.rotation.map(|v| U::lit(v.as_f64())),
            self.translation.map(|v| U::lit(v.as_f64())),
        )
    }

    /// Row-major `[r11, r12, …, r33, t1, t2, t3]`, the unknown vector of
    /// the linear constraint system.
    pub fn to_vec12(&self) -> [T; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t[0],
            t[1],
            t[2],
        ]
    }
}

/// Three Cayley parameters `w = (x, y, z)` of a rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CayleyRotation<T: Real> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> CayleyRotation<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn from_vector(w: &Vector3<T>) -> Self {
        Self::new(w[0], w[1], w[2])
    }

    pub fn as_vector(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// `s = 1 + x² + y² + z²`.
    pub fn scale(&self) -> T {
        T::one() + self.x * self.x + self.y * self.y + self.z * self.z
    }

    /// Numerator of the rational rotation, i.e. `s·R`.
    pub fn scaled_matrix(&self) -> Matrix3<T> {
        let (x, y, z) = (self.x, self.y, self.z);
        let one = T::one();
        let two = T::lit(2.0);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        Matrix3::new(
            one + xx - yy - zz,
            two * (x * y - z),
            two * (y + x * z),
            two * (x * y + z),
            one - xx + yy - zz,
            two * (y * z - x),
            two * (x * z - y),
            two * (x + y * z),
            one - xx - yy + zz,
        )
    }

    pub fn to_matrix(&self) -> Matrix3<T> {
        self.scaled_matrix() / self.scale()
    }

    /// Inverse of [`CayleyRotation::to_matrix`]. Fails at (and numerically
    /// near) half turns, where `1 + trace(R)` vanishes.
    pub fn from_matrix(r: &Matrix3<T>) -> Result<Self> {
        let denom = T::one() + r.trace();
        if denom < T::tol(1e-10) {
            return Err(Error::UnrepresentableRotation);
        }
        Ok(Self::new(
            (r[(2, 1)] - r[(1, 2)]) / denom,
            (r[(0, 2)] - r[(2, 0)]) / denom,
            (r[(1, 0)] - r[(0, 1)]) / denom,
        ))
    }
}

pub fn cayley_to_matrix<T: Real>(c: &CayleyRotation<T>) -> Matrix3<T> {
    c.to_matrix()
}

pub fn matrix_to_cayley<T: Real>(r: &Matrix3<T>) -> Result<CayleyRotation<T>> {
    CayleyRotation::from_matrix(r)
}

/// A scene point observed at `x` in the reference image at depth `depth`,
/// lying on a local plane with unit normal `normal` (reference frame).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedPoint<T: Real> {
    pub x: Vector2<T>,
    pub depth: T,
    pub normal: Vector3<T>,
}

impl<T: Real> OrientedPoint<T> {
    /// Validates depth and normal; the normal is rescaled to unit length.
    pub fn new(x: Vector2<T>, depth: T, normal: Vector3<T>) -> Result<Self> {
        if !(depth > T::zero()) {
            return Err(Error::InvalidOrientedPoint("depth must be positive"));
        }
        let len = normal.norm();
        if !(len > T::tol(DEGENERACY_EPS)) {
            return Err(Error::InvalidOrientedPoint("normal has zero length"));
        }
        let op = Self {
            x,
            depth,
            normal: normal / len,
        };
        if op.plane_dot().abs() < T::tol(DEGENERACY_EPS) {
            return Err(Error::GrazingRay);
        }
        Ok(op)
    }

    pub fn homogeneous(&self) -> Vector3<T> {
        Vector3::new(self.x[0], self.x[1], T::one())
    }

    /// `p = d·x̃`.
    pub fn point(&self) -> Vector3<T> {
        self.homogeneous() * self.depth
    }

    /// `nᵀx̃`.
    pub fn plane_dot(&self) -> T {
        self.normal.dot(&self.homogeneous())
    }

    pub fn cast<U: Real>(&self) -> OrientedPoint<U> {
        OrientedPoint {
            x: self.x.map(|v| U::lit(v.as_f64())),
            depth: U::lit(self.depth.as_f64()),
            normal: self.normal.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Matched points `x ↔ y` with the local affine map `a` from the
/// neighbourhood of `x` to that of `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineCorrespondence<T: Real> {
    pub x: Vector2<T>,
    pub y: Vector2<T>,
    pub a: Matrix2<T>,
}

impl<T: Real> AffineCorrespondence<T> {
    pub fn new(x: Vector2<T>, y: Vector2<T>, a: Matrix2<T>) -> Self {
        Self { x, y, a }
    }

    /// False when `a` is singular or non-finite. Such correspondences are
    /// still accepted by the solvers.
    pub fn is_well_posed(&self) -> bool {
        let finite = self.a.iter().all(|v| v.is_finite());
        finite && self.a.determinant().abs() > T::tol(DEGENERACY_EPS)
    }

    pub fn cast<U: Real>(&self) -> AffineCorrespondence<U> {
        AffineCorrespondence {
            x: self.x.map(|v| U::lit(v.as_f64())),
            y: self.y.map(|v| U::lit(v.as_f64())),
            a: self.a.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Quantities of the plane-induced warp evaluated at the reference point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionDifferential<T: Real> {
    /// `q = R p + t`.
    pub q: Vector3<T>,
    /// `π(q)`.
    pub v: Vector2<T>,
    /// `nᵀx̃ · (d r₃ᵀx̃ + t₃)`.
    pub m: T,
    /// Jacobian of `u ↦ π(R π⁻¹(u) + t)` at `u = x`.
    pub jacobian: Matrix2<T>,
}

/// Angular (degrees) and position (scene units) discrepancy of two poses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseError {
    pub angular_deg: f64,
    pub position: f64,
}

pub fn project<T: Real>(p: &Vector3<T>) -> Result<Vector2<T>> {
    if p[2].abs() < T::tol(DEGENERACY_EPS) {
        return Err(Error::PointAtInfinity);
    }
    Ok(Vector2::new(p[0] / p[2], p[1] / p[2]))
}

/// Intersects the ray through `u` with the local plane of `op`.
pub fn unproject<T: Real>(u: &Vector2<T>, op: &OrientedPoint<T>) -> Result<Vector3<T>> {
    let ray = Vector3::new(u[0], u[1], T::one());
    let denom = op.normal.dot(&ray);
    if denom.abs() < T::tol(DEGENERACY_EPS) {
        return Err(Error::GrazingRay);
    }
    if *u == op.x {
        return Ok(op.point());
    }
    let alpha = op.normal.dot(&op.point()) / denom;
    Ok(ray * alpha)
}

/// Evaluates the plane-induced image-to-image warp and its Jacobian at the
/// reference observation of `op` for the query pose `pose`.
pub fn projection_differential<T: Real>(
    pose: &Pose<T>,
    op: &OrientedPoint<T>,
) -> Result<ProjectionDifferential<T>> {
    let r = &pose.rotation;
    let t = &pose.translation;
    let xh = op.homogeneous();
    let q = pose.transform_point(&op.point());
    let v = project(&q)?;
    let k = op.normal.dot(&xh);
    let m = k * q[2];
    if m.abs() < T::tol(DEGENERACY_EPS) {
        return Err(Error::DegenerateDifferential(m.as_f64()));
    }
    let dk = op.depth * k;
    let n2 = Vector2::new(op.normal[0], op.normal[1]);
    let r2 = r.fixed_view::<2, 2>(0, 0).into_owned();
    let r3 = Vector2::new(r[(2, 0)], r[(2, 1)]);
    let t12 = Vector2::new(t[0], t[1]);
    let jacobian = ((r2 - v * r3.transpose()) * dk + (t12 - v * t[2]) * n2.transpose()) / m;
    Ok(ProjectionDifferential { q, v, m, jacobian })
}

/// Compares an estimate against ground truth.
///
/// The angle is the magnitude of `R̂Rᵀ`, computed from the chordal distance
/// `‖R̂ − R‖_F = 2√2 sin(θ/2)` so that sub-microradian errors are resolved
/// and the result is exactly symmetric in its arguments.
pub fn pose_error<T: Real>(estimate: &Pose<T>, truth: &Pose<T>) -> PoseError {
    let chord = (estimate.rotation - truth.rotation).norm().as_f64();
    let chord_sq = chord * chord;
    let angle = 2.0 * chord.atan2((8.0 - chord_sq).max(0.0).sqrt());
    let angular_deg = angle.to_degrees().clamp(0.0, 180.0);
    let position = (estimate.center() - truth.center()).norm().as_f64();
    PoseError {
        angular_deg,
        position,
    }
}

/// Lifts a pose solved relative to a reference camera back to world
/// coordinates, given the reference camera's world-to-camera pose.
pub fn change_reference_frame<T: Real>(reference: &Pose<T>, solved: &Pose<T>) -> Pose<T> {
    solved.compose(reference)
}

/// Rotation drawn uniformly (Haar measure) from `SO(3)`.
pub fn random_rotation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Matrix3<T> {
    let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let q = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    q.to_rotation_matrix().into_inner().map(T::lit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rot(axis: Vector3<f64>, deg: f64) -> Matrix3<f64> {
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), deg.to_radians()).into_inner()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
        let axis = Vector3::new(rng.random(), rng.random(), rng.random()) - Vector3::repeat(0.5);
        let r = rot(axis, rng.random_range(0.0..170.0));
        let t = Vector3::new(rng.random(), rng.random(), rng.random()) - Vector3::repeat(0.5);
        Pose::from_parts(r, t)
    }

    /// Central differences of the full warp `u ↦ π(R π⁻¹(u) + t)`.
    fn fd_jacobian(pose: &Pose<f64>, op: &OrientedPoint<f64>, h: f64) -> Matrix2<f64> {
        let warp = |u: Vector2<f64>| {
            let p = unproject(&u, op).unwrap();
            project(&pose.transform_point(&p)).unwrap()
        };
        let mut j = Matrix2::zeros();
        for c in 0..2 {
            let mut e = Vector2::zeros();
            e[c] = h;
            let d = (warp(op.x + e) - warp(op.x - e)) / (2.0 * h);
            j.set_column(c, &d);
        }
        j
    }

    #[test]
    fn project_examples() {
        assert_eq!(project(&Vector3::new(2.0, 4.0, 2.0)).unwrap(), Vector2::new(1.0, 2.0));
        assert_eq!(project(&Vector3::new(0.0, 0.0, 5.0)).unwrap(), Vector2::zeros());
        assert!(matches!(
            project(&Vector3::new(0.3, -0.7, 0.0)),
            Err(Error::PointAtInfinity)
        ));
    }

    #[test]
    fn unproject_examples() {
        let op = OrientedPoint::new(Vector2::zeros(), 5.0, Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(unproject(&Vector2::zeros(), &op).unwrap(), Vector3::new(0.0, 0.0, 5.0));
        let p = unproject(&Vector2::new(0.1, 0.0), &op).unwrap();
        assert!((p - Vector3::new(0.5, 0.0, 5.0)).norm() < 1e-15);
    }

    #[test]
    fn unproject_rejects_grazing_rays() {
        let op = OrientedPoint::new(Vector2::zeros(), 5.0, Vector3::new(1.0, 0.0, -1.0)).unwrap();
        // n·[1,0,1]ᵀ = 0
        assert!(matches!(
            unproject(&Vector2::new(1.0, 0.0), &op),
            Err(Error::GrazingRay)
        ));
    }

    #[test]
    fn oriented_point_validation() {
        let x = Vector2::new(0.2, 0.1);
        assert!(OrientedPoint::new(x, -1.0, Vector3::z()).is_err());
        assert!(OrientedPoint::new(x, 1.0, Vector3::zeros()).is_err());
        let op = OrientedPoint::<f64>::new(x, 2.0, Vector3::new(0.0, 0.0, -3.0)).unwrap();
        assert!((op.normal.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_pose_has_identity_jacobian() {
        let op = OrientedPoint::new(
            Vector2::new(0.3, -0.4),
            6.0,
            Vector3::new(0.2, -0.1, -1.0),
        )
        .unwrap();
        let d = projection_differential(&Pose::identity(), &op).unwrap();
        assert!((d.jacobian - Matrix2::identity()).norm() < 1e-14);
        assert!((d.v - op.x).norm() < 1e-15);
    }

    #[test]
    fn differential_fails_on_principal_plane() {
        let op = OrientedPoint::new(Vector2::zeros(), 5.0, Vector3::new(0.0, 0.0, -1.0)).unwrap();
        // Query camera placed so that q₃ = 0: translate the point onto its plane z = 0.
        let pose = Pose::from_parts(Matrix3::identity(), Vector3::new(0.0, 0.0, -5.0));
        assert!(projection_differential(&pose, &op).is_err());
    }

    #[test]
    fn differential_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let pose = random_pose(&mut rng);
            let x = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                -1.0,
            );
            let op = OrientedPoint::new(x, rng.random_range(4.0..8.0), n).unwrap();
            let Ok(d) = projection_differential(&pose, &op) else {
                continue;
            };
            if d.q[2] < 0.1 || d.m.abs() < 1e-6 || op.plane_dot().abs() < 0.05 {
                continue;
            }
            let fd = fd_jacobian(&pose, &op, 1e-6);
            let rel = (fd - d.jacobian).norm() / d.jacobian.norm();
            assert!(rel < 1e-6, "relative error {rel}");
            checked += 1;
        }
    }

    #[test]
    fn cayley_examples() {
        let id = CayleyRotation::new(0.0, 0.0, 0.0).to_matrix();
        assert_eq!(id, Matrix3::identity());
        let rx = CayleyRotation::new(1.0, 0.0, 0.0).to_matrix();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((rx - expected).norm() < 1e-15);
        assert!((rx - rot(Vector3::x(), 90.0)).norm() < 1e-15);
        // 90 degrees about y exercises the middle diagonal entry.
        let ry = CayleyRotation::new(0.0, 1.0, 0.0).to_matrix();
        assert!((ry - rot(Vector3::y(), 90.0)).norm() < 1e-15);
        let back = CayleyRotation::from_matrix(&expected).unwrap();
        assert!((back.as_vector() - Vector3::x()).norm() < 1e-15);
        let zero = CayleyRotation::from_matrix(&Matrix3::<f64>::identity()).unwrap();
        assert_eq!(zero.as_vector(), Vector3::zeros());
        assert!(matches!(
            CayleyRotation::from_matrix(&rot(Vector3::z(), 180.0)),
            Err(Error::UnrepresentableRotation)
        ));
    }

    #[test]
    fn pose_error_examples() {
        let id = Pose::<f64>::identity();
        let e = pose_error(&id, &id);
        assert_eq!((e.angular_deg, e.position), (0.0, 0.0));

        let r = rot(Vector3::new(0.3, -1.0, 2.0), 10.0);
        let est = Pose::from_parts(r, Vector3::zeros());
        let e = pose_error(&est, &id);
        assert!((e.angular_deg - 10.0).abs() < 1e-12);
        assert!(e.position < 1e-15);

        let truth = Pose::from_parts(Matrix3::identity(), -Vector3::new(1.0, 2.0, 3.0));
        let est = Pose::from_parts(Matrix3::identity(), -Vector3::new(1.0, 2.0, 4.0));
        let e = pose_error(&est, &truth);
        assert_eq!(e.angular_deg, 0.0);
        assert!((e.position - 1.0).abs() < 1e-15);

        let half = Pose::from_parts(rot(Vector3::x(), 180.0), Vector3::zeros());
        assert!((pose_error(&half, &id).angular_deg - 180.0).abs() < 1e-6);
    }

    #[test]
    fn pose_error_resolves_tiny_angles() {
        let id = Pose::<f64>::identity();
        let r = rot(Vector3::new(1.0, 2.0, 3.0), 1e-11);
        let e = pose_error(&Pose::from_parts(r, Vector3::zeros()), &id);
        assert!((e.angular_deg / 1e-11 - 1.0).abs() < 1e-3, "{}", e.angular_deg);
    }

    #[test]
    fn change_reference_frame_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_pose(&mut rng);
        assert_eq!(change_reference_frame(&Pose::identity(), &p), p);

        let t0 = Vector3::new(0.5, -1.0, 2.0);
        let reference = Pose::from_parts(Matrix3::identity(), t0);
        let q = change_reference_frame(&reference, &Pose::identity());
        assert!((q.center() - reference.center()).norm() < 1e-15);

        for _ in 0..100 {
            let reference = random_pose(&mut rng);
            let solved = random_pose(&mut rng);
            let composed = change_reference_frame(&reference, &solved);
            let world = Vector3::new(rng.random(), rng.random(), rng.random::<f64>() + 3.0);
            let two_step = solved.transform_point(&reference.transform_point(&world));
            assert!((composed.transform_point(&world) - two_step).norm() < 1e-12);
        }
    }

    #[test]
    fn pose_validation() {
        assert!(Pose::new(Matrix3::<f64>::identity() * 1.01, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(Pose::new(reflect, Vector3::zeros()).is_err());
        assert!(Pose::new(rot(Vector3::y(), 33.0), Vector3::zeros()).is_ok());
    }

    #[test]
    fn single_precision_differential() {
        let op = OrientedPoint::<f32>::new(
            Vector2::new(0.1, 0.2),
            5.0,
            Vector3::new(0.0, 0.3, -1.0),
        )
        .unwrap();
        let d = projection_differential(&Pose::identity(), &op).unwrap();
        assert!((d.jacobian - Matrix2::identity()).norm() < 1e-6);
    }

    proptest! {
        #[test]
        fn cayley_round_trip(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
            prop_assume!((x * x + y * y + z * z).sqrt() <= 10.0);
            let c = CayleyRotation::new(x, y, z);
            let r = c.to_matrix();
            let pose = Pose::new(r, Vector3::zeros());
            prop_assert!(pose.is_ok());
            let back = CayleyRotation::from_matrix(&r).unwrap();
            prop_assert!((back.as_vector() - c.as_vector()).norm() < 1e-12);
        }

        #[test]
        fn cayley_scale_at_least_one(x in -1e3f64..1e3, y in -1e3f64..1e3, z in -1e3f64..1e3) {
            prop_assert!(CayleyRotation::new(x, y, z).scale() >= 1.0);
        }

        #[test]
        fn unprojection_lies_on_plane(
            ux in -2.0f64..2.0, uy in -2.0f64..2.0,
            xx in -1.0f64..1.0, xy in -1.0f64..1.0,
            d in 0.5f64..20.0,
            nx in -1.0f64..1.0, ny in -1.0f64..1.0,
        ) {
            let op = OrientedPoint::new(Vector2::new(xx, xy), d, Vector3::new(nx, ny, -1.0)).unwrap();
            let u = Vector2::new(ux, uy);
            prop_assume!(op.normal.dot(&Vector3::new(ux, uy, 1.0)).abs() > 1e-3);
            let p = unproject(&u, &op).unwrap();
            let off = op.normal.dot(&(p - op.point()));
            prop_assert!(off.abs() <= 1e-12 * op.point().norm().max(p.norm()));
        }

        #[test]
        fn angular_error_is_symmetric(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            prop_assert_eq!(pose_error(&a, &b).angular_deg, pose_error(&b, &a).angular_deg);
        }
    }
}
