//! Rotation in Cayley parameters: eliminating the translation leaves three
//! quadrics in the parameters, solved by the general 3Q3 kernel.
//!
//! Half-turn rotations have no Cayley parameters, so truths near 180° may
//! be missing from the output.

use rand::Rng;

use super::{push_solution, validate_rotation, P1acProblem, SolutionSet};
use crate::constraints::{build_linear_system, eliminate_translation, monomial_system_from_linear};
use crate::error::Result;
use crate::geometry::{CayleyRotation, Pose};
use crate::re3q3::{solve3q3, QuadricTriple};
use crate::scalar::Real;

/// `rng` seeds the kernel's random change of variables.
pub fn solve_p1ac_3q3<T: Real, R: Rng + ?Sized>(
    problem: &P1acProblem<T>,
    rng: &mut R,
) -> Result<SolutionSet<T>> {
    let sys = build_linear_system(&problem.ac, &problem.point)?;
    let reduced = eliminate_translation(&monomial_system_from_linear(&sys))?;
    let roots = solve3q3(&QuadricTriple::new(reduced.quadrics)?, rng)?;
    let mut out = SolutionSet::default();
    for w in roots.roots {
        let cayley = CayleyRotation::from_vector(&w);
        let s = cayley.scale();
        let t = reduced.scaled_translation(w[0], w[1], w[2]) / s;
        let Some(rotation) = validate_rotation(&cayley.to_matrix()) else {
            continue;
        };
        if t.iter().all(|v| v.is_finite()) && out.len() < super::MAX_SOLUTIONS {
            push_solution(&mut out, problem, &sys, Pose::from_parts(rotation, t));
        }
    }
    Ok(out)
}
