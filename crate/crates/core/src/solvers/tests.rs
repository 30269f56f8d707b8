use nalgebra::{Matrix2, Matrix3, Rotation3, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::constraints::build_linear_system;
use crate::error::Error;
use crate::geometry::{pose_error, project, projection_differential, random_rotation};
use crate::test_support::random_problem;

fn identity_problem() -> P1acProblem<f64> {
    let x = Vector2::new(0.1, -0.2);
    let op = OrientedPoint::new(x, 5.0, Vector3::new(0.1, 0.2, -1.0)).unwrap();
    P1acProblem::new(AffineCorrespondence::new(x, x, Matrix2::identity()), op)
}

fn best_error(set: &SolutionSet<f64>, truth: &Pose<f64>) -> (f64, f64) {
    set.poses
        .iter()
        .map(|p| pose_error(p, truth))
        .map(|e| (e.angular_deg, e.position))
        .fold((f64::INFINITY, f64::INFINITY), |b, e| if e.0 + e.1 < b.0 + b.1 { e } else { b })
}

fn contains(set: &SolutionSet<f64>, truth: &Pose<f64>, tol: f64) -> bool {
    let (a, p) = best_error(set, truth);
    a < tol && p < tol
}

#[test]
fn identity_problem_nullspace() {
    let set = solve_p1ac_nullspace(&identity_problem()).unwrap();
    assert!(contains(&set, &Pose::identity(), 1e-8), "{:?}", set.poses);
}

#[test]
fn identity_problem_3q3() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let set = solve_p1ac_3q3(&identity_problem(), &mut rng).unwrap();
    assert!(contains(&set, &Pose::identity(), 1e-10), "{:?}", set.poses);
}

#[test]
fn nullspace_basis_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let s = random_problem(&mut rng);
        let sys = build_linear_system(&s.ac, &s.op).unwrap();
        let b = nullspace_basis(&sys).unwrap();
        assert!((sys.m * b.basis).amax() < 1e-9 * sys.m.amax());
        let gram = b.basis.transpose() * b.basis;
        assert!((gram - nalgebra::SMatrix::<f64, 6, 6>::identity()).amax() < 1e-12);
    }
}

#[test]
fn rank_deficient_system_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_problem(&mut rng);
    let mut sys = build_linear_system(&s.ac, &s.op).unwrap();
    let r0 = sys.m.row(0).into_owned();
    sys.m.set_row(5, &r0);
    assert!(matches!(nullspace_basis(&sys), Err(Error::RankDeficient)));
}

#[test]
fn noise_free_problems_are_solved_accurately() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 2000;
    let (mut null_sum, mut cayley_misses) = (0.0, 0);
    for _ in 0..n {
        let s = random_problem(&mut rng);
        let problem = P1acProblem::new(s.ac, s.op);
        let null = solve_p1ac_nullspace(&problem).unwrap();
        let (a, p) = best_error(&null, &s.truth);
        null_sum += a + p;
        let cay = solve_p1ac_3q3(&problem, &mut rng).unwrap();
        if !contains(&cay, &s.truth, 1e-6) {
            cayley_misses += 1;
        }
    }
    assert!(null_sum / n as f64 / 2.0 < 1e-10, "mean {}", null_sum / n as f64 / 2.0);
    assert!(cayley_misses * 100 < n, "{cayley_misses}");
}

#[test]
fn solvers_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 500;
    let mut disagreements = 0;
    for _ in 0..n {
        let s = random_problem(&mut rng);
        let problem = P1acProblem::new(s.ac, s.op);
        let null = solve_p1ac_nullspace(&problem).unwrap();
        let cay = solve_p1ac_3q3(&problem, &mut rng).unwrap();
        let matched = null.len() == cay.len() && null.poses.iter().all(|p| contains(&cay, p, 1e-6));
        if !matched {
            disagreements += 1;
        }
    }
    assert!(disagreements * 100 <= n, "{disagreements}");
}

#[test]
fn returned_poses_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..300 {
        let s = random_problem(&mut rng);
        let problem = P1acProblem::new(s.ac, s.op);
        let sets = [
            solve_p1ac_nullspace(&problem).unwrap(),
            solve_p1ac_3q3(&problem, &mut rng).unwrap(),
        ];
        for set in sets {
            assert!(set.len() <= MAX_SOLUTIONS);
            for pose in &set.poses {
                assert!(pose.orthogonality_error() < 1e-8);
                assert!((pose.rotation.determinant() - 1.0).abs() < 1e-8);
                let Ok(d) = projection_differential(pose, &s.op) else {
                    continue;
                };
                assert!((d.v - s.ac.y).amax() < 1e-6);
                assert!((d.jacobian - s.ac.a).norm() < 1e-6 * s.ac.a.norm().max(1.0));
            }
        }
    }
}

#[test]
fn near_half_turn_does_not_crash() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let axis = Unit::new_normalize(Vector3::new(0.3, -0.5, 0.8));
    let r = Rotation3::from_axis_angle(&axis, 179.9f64.to_radians()).into_inner();
    let x = Vector2::new(0.05, 0.1);
    let op = OrientedPoint::new(x, 5.0, Vector3::new(0.1, -0.2, -1.0)).unwrap();
    // Place the query camera so the point is in front of it.
    let t = Vector3::new(0.0, 0.0, 6.0) - r * op.point();
    let truth = Pose::from_parts(r, t);
    let d = projection_differential(&truth, &op).unwrap();
    let problem = P1acProblem::new(AffineCorrespondence::new(x, d.v, d.jacobian), op);
    let set = solve_p1ac_3q3(&problem, &mut rng).unwrap();
    for p in &set.poses {
        assert!(p.orthogonality_error() < 1e-8);
    }
    assert!(contains(&solve_p1ac_nullspace(&problem).unwrap(), &truth, 1e-6));
}

#[test]
fn cheirality_filter() {
    let problem = identity_problem();
    let set = solve_p1ac_nullspace(&problem).unwrap();
    let kept = filter_cheirality(&set, &problem);
    assert!(contains(&kept, &Pose::identity(), 1e-8));
    assert!(kept.cheirality.iter().all(|c| *c));

    let flip = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
    let behind = Pose::from_parts(flip, Vector3::zeros());
    let constructed = SolutionSet {
        poses: vec![Pose::identity(), behind],
        residuals: vec![0.0, 0.0],
        cheirality: vec![true, false],
    };
    let kept = filter_cheirality(&constructed, &problem);
    assert_eq!(kept.poses, vec![Pose::identity()]);
}

#[test]
fn truth_passes_cheirality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let s = random_problem(&mut rng);
        let problem = P1acProblem::new(s.ac, s.op);
        let truth_only = SolutionSet {
            poses: vec![s.truth],
            residuals: vec![0.0],
            cheirality: vec![true],
        };
        assert_eq!(filter_cheirality(&truth_only, &problem).len(), 1);
    }
}

#[test]
fn reference_frame_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let s = random_problem(&mut rng);
        let g = Pose::from_parts(
            random_rotation(&mut rng),
            Vector3::new(rng.random(), rng.random(), rng.random()),
        );
        let local = P1acProblem::new(s.ac, s.op);
        let lifted = P1acProblem::with_reference(s.ac, s.op, g);
        let a = solve_p1ac_nullspace(&local).unwrap();
        let b = solve_p1ac_nullspace(&lifted).unwrap();
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.poses.iter().zip(&b.poses) {
            let expected = change_reference_frame(&g, pa);
            assert!((expected.rotation - pb.rotation).amax() < 1e-8);
            assert!((expected.translation - pb.translation).amax() < 1e-8);
        }
        let world_truth = s.truth.compose(&g);
        assert!(contains(&b, &world_truth, 1e-6));
        let x = lifted.world_point();
        let q = world_truth.transform_point(&x);
        assert!((project(&q).unwrap() - s.ac.y).amax() < 1e-9);
    }
}

#[test]
fn single_precision_solvers() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut hits = 0;
    for _ in 0..50 {
        let s = random_problem(&mut rng);
        let problem = P1acProblem::new(s.ac.cast::<f32>(), s.op.cast::<f32>());
        let truth = s.truth.cast::<f32>();
        let set = solve_p1ac_3q3(&problem, &mut rng).unwrap();
        if set.poses.iter().any(|p| {
            let e = pose_error(p, &truth);
            e.angular_deg < 0.1 && e.position < 1e-2
        }) {
            hits += 1;
        }
    }
    assert!(hits >= 45, "{hits}");
}
