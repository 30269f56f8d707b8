//! Absolute camera pose from a single affine correspondence.
//!
//! Given one oriented scene point (depth along a reference ray plus the local
//! surface normal) and an affine correspondence between the reference image
//! and a query image, the minimal solvers in [`solvers`] recover the query
//! camera pose. Point-based P3P baselines, synthetic experiments and an
//! LO-RANSAC localizer are included for comparison.

pub mod bench;
pub mod constraints;
pub mod error;
pub mod geometry;
pub mod localizer;
mod poly;
#[cfg(test)]
mod test_support;
pub mod re3q3;
pub mod scalar;
pub mod seeding;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{
    change_reference_frame, pose_error, project, projection_differential, random_rotation, unproject,
    AffineCorrespondence, CayleyRotation, OrientedPoint, Pose, PoseError,
    ProjectionDifferential,
};
pub use scalar::Real;

pub type Pose64 = Pose<f64>;
pub type Pose32 = Pose<f32>;
pub type OrientedPoint64 = OrientedPoint<f64>;
pub type OrientedPoint32 = OrientedPoint<f32>;
pub type AffineCorrespondence64 = AffineCorrespondence<f64>;
pub type AffineCorrespondence32 = AffineCorrespondence<f32>;
