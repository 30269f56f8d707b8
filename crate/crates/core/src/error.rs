use thiserror::Error;

/// Errors raised by the geometry, solver and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point has (near) zero depth and cannot be projected")]
    PointAtInfinity,
    #[error("ray is parallel to the local surface plane")]
    GrazingRay,
    #[error("projection differential is undefined (m = {0:e})")]
    DegenerateDifferential(f64),
    #[error("180 degree rotations have no Cayley parameters")]
    UnrepresentableRotation,
    #[error("matrix is not a rotation (orthogonality error {0:e})")]
    InvalidRotation(f64),
    #[error("invalid oriented point: {0}")]
    InvalidOrientedPoint(&'static str),
    #[error("affine correspondence constraints are degenerate")]
    DegenerateConstraint,
    #[error("translation block is rank deficient; elimination failed")]
    EliminationSingular,
    #[error("quadric system has a continuum of solutions")]
    DegenerateQuadrics,
    #[error("constraint matrix is rank deficient")]
    RankDeficient,
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
