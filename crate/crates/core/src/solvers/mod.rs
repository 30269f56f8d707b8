//! Minimal absolute-pose solvers from one affine correspondence and one
//! oriented point.
//!
//! Both solvers work in the reference camera frame and lift their results to
//! world coordinates through the reference pose of the problem.

mod cayley;
mod nullspace;
mod p3p;

pub use cayley::solve_p1ac_3q3;
pub use nullspace::{nullspace_basis, solve_p1ac_nullspace, NullspaceBasis};
pub use p3p::{
    expand_ac_to_points, scale_canonical_frame, solve_p3p, solve_p3p_1ac, CanonicalAffineFrame,
    PointCorrespondence, MAX_P3P_SOLUTIONS,
};

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::constraints::LinearConstraintSystem;
use crate::error::{Error, Result};
use crate::geometry::{change_reference_frame, AffineCorrespondence, OrientedPoint, Pose};
use crate::scalar::Real;

/// Upper bound on the number of poses either P1AC solver returns.
pub const MAX_SOLUTIONS: usize = 8;

/// Minimal solver selector shared by the experiments and the localizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "p3p")]
    P3p,
    #[serde(rename = "p3p-1ac")]
    P3p1ac,
    #[serde(rename = "p1ac-null")]
    P1acNullspace,
    #[serde(rename = "p1ac-3q3")]
    P1ac3q3,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::P3p, Method::P3p1ac, Method::P1acNullspace, Method::P1ac3q3];

    pub fn name(self) -> &'static str {
        match self {
            Method::P3p => "p3p",
            Method::P3p1ac => "p3p-1ac",
            Method::P1acNullspace => "p1ac-null",
            Method::P1ac3q3 => "p1ac-3q3",
        }
    }

    /// Correspondences per minimal sample.
    pub fn sample_size(self) -> usize {
        match self {
            Method::P3p => 3,
            _ => 1,
        }
    }

    pub fn max_solutions(self) -> usize {
        match self {
            Method::P3p | Method::P3p1ac => MAX_P3P_SOLUTIONS,
            _ => MAX_SOLUTIONS,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the full names and the short forms `null` and `3q3`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p3p" => Ok(Method::P3p),
            "p3p-1ac" | "p3p1ac" => Ok(Method::P3p1ac),
            "p1ac-null" | "null" | "nullspace" => Ok(Method::P1acNullspace),
            "p1ac-3q3" | "3q3" => Ok(Method::P1ac3q3),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// One affine correspondence between a reference image and the query, the
/// oriented point observed in the reference image, and the reference
/// camera's world-to-camera pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct P1acProblem<T: Real> {
    pub ac: AffineCorrespondence<T>,
    pub point: OrientedPoint<T>,
    pub reference: Pose<T>,
}

impl<T: Real> P1acProblem<T> {
    /// Problem posed directly in the reference camera frame.
    pub fn new(ac: AffineCorrespondence<T>, point: OrientedPoint<T>) -> Self {
        Self::with_reference(ac, point, Pose::identity())
    }

    pub fn with_reference(
        ac: AffineCorrespondence<T>,
        point: OrientedPoint<T>,
        reference: Pose<T>,
    ) -> Self {
        Self {
            ac,
            point,
            reference,
        }
    }

    /// The oriented point's 3D position in world coordinates.
    pub fn world_point(&self) -> Vector3<T> {
        self.reference.inverse().transform_point(&self.point.point())
    }
}

/// Candidate world-to-query poses with per-pose diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionSet<T: Real> {
    pub poses: Vec<Pose<T>>,
    /// Largest absolute value of the six (unit-norm) constraint rows for
    /// the P1AC solvers; largest reprojection error for P3P.
    pub residuals: Vec<T>,
    /// Whether the observed point lies in front of the query camera.
    pub cheirality: Vec<bool>,
}

impl<T: Real> Default for SolutionSet<T> {
    fn default() -> Self {
        Self {
            poses: Vec::new(),
            residuals: Vec::new(),
            cheirality: Vec::new(),
        }
    }
}

impl<T: Real> SolutionSet<T> {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    fn push(&mut self, pose: Pose<T>, residual: T, in_front: bool) {
        self.poses.push(pose);
        self.residuals.push(residual);
        self.cheirality.push(in_front);
    }
}

/// Keeps the poses that see the oriented point in front of the query camera.
pub fn filter_cheirality<T: Real>(solutions: &SolutionSet<T>, problem: &P1acProblem<T>) -> SolutionSet<T> {
    let x = problem.world_point();
    let mut out = SolutionSet::default();
    for (i, pose) in solutions.poses.iter().enumerate() {
        if pose.transform_point(&x)[2] > T::zero() {
            out.push(*pose, solutions.residuals[i], true);
        }
    }
    out
}

/// Snaps a nearly orthonormal matrix onto `SO(3)`; `None` past `1e-4`.
pub(crate) fn validate_rotation<T: Real>(r: &Matrix3<T>) -> Option<Matrix3<T>> {
    let err = (r.transpose() * r - Matrix3::identity()).norm();
    if !(err <= T::tol(1e-4)) || !(r.determinant() > T::zero()) {
        return None;
    }
    if err <= T::tol(1e-8) {
        return Some(*r);
    }
    nearest_rotation(r)
}

/// Closest rotation in Frobenius norm.
pub(crate) fn nearest_rotation<T: Real>(r: &Matrix3<T>) -> Option<Matrix3<T>> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut rot = u * vt;
    if rot.determinant() < T::zero() {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rot = u * vt;
    }
    Some(rot)
}

/// Appends a reference-frame solution to `out`, lifted to world coordinates.
pub(crate) fn push_solution<T: Real>(
    out: &mut SolutionSet<T>,
    problem: &P1acProblem<T>,
    sys: &LinearConstraintSystem<T>,
    local: Pose<T>,
) {
    let v = SVector::<T, 12>::from_column_slice(&local.to_vec12());
    let residual = sys.apply(&v).amax();
    let in_front = local.transform_point(&problem.point.point())[2] > T::zero();
    let pose = change_reference_frame(&problem.reference, &local);
    out.push(pose, residual, in_front);
}

#[cfg(test)]
mod tests;
