//! Pose as a combination of the six nullspace vectors of the constraint
//! matrix, with coefficients fixed by requiring a scaled rotation.
//!
//! The ten orthogonality conditions are quadratic in the coefficients. After
//! fixing one coefficient to 1 they are solved by multiplying each equation
//! by `{1, b₁, …, b₅}`, taking the 8-dimensional nullspace of the resulting
//! degree-3 Macaulay matrix and diagonalizing the multiplication map of a
//! random linear form on it.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use super::{push_solution, validate_rotation, P1acProblem, SolutionSet};
use crate::constraints::{build_linear_system, LinearConstraintSystem};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scalar::Real;

/// Orthonormal basis of the nullspace of the 6×12 constraint matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NullspaceBasis<T: Real> {
    pub basis: SMatrix<T, 12, 6>,
}

impl<T: Real> NullspaceBasis<T> {
    /// `B b`.
    pub fn combine(&self, coefficients: &SVector<T, 6>) -> SVector<T, 12> {
        self.basis * coefficients
    }
}

pub fn nullspace_basis<T: Real>(sys: &LinearConstraintSystem<T>) -> Result<NullspaceBasis<T>> {
    let mut padded = SMatrix::<T, 12, 12>::zeros();
    padded.fixed_rows_mut::<6>(0).copy_from(&sys.m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.ok_or(Error::RankDeficient)?;
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sigma_max = svd.singular_values[order[0]];
    if !(svd.singular_values[order[5]] > T::tol(1e-10) * sigma_max) {
        return Err(Error::RankDeficient);
    }
    let mut basis = SMatrix::<T, 12, 6>::zeros();
    for (c, &i) in order[6..].iter().enumerate() {
        basis.set_column(c, &vt.row(i).transpose());
    }
    Ok(NullspaceBasis { basis })
}

const NVARS: usize = 5;

/// Monomials of degree ≤ 3 in five unknowns, and the maps the Macaulay
/// construction needs.
struct Layout {
    exponents: Vec<[u8; NVARS]>,
    index: Vec<usize>,
    low_degree: Vec<usize>,
    one: usize,
    linear: [usize; NVARS],
}

impl Layout {
    fn key(e: &[u8; NVARS]) -> usize {
        e.iter().fold(0, |acc, &d| acc * 4 + d as usize)
    }

    fn get() -> &'static Layout {
        static LAYOUT: OnceLock<Layout> = OnceLock::new();
        LAYOUT.get_or_init(|| {
            let mut exponents = Vec::new();
            for deg in (0..=3u8).rev() {
                for k in 0..4usize.pow(NVARS as u32) {
                    let mut e = [0u8; NVARS];
                    let mut r = k;
                    for slot in e.iter_mut().rev() {
                        *slot = (r % 4) as u8;
                        r /= 4;
                    }
                    if e.iter().sum::<u8>() == deg {
                        exponents.push(e);
                    }
                }
            }
            let mut index = vec![usize::MAX; 4usize.pow(NVARS as u32)];
            for (i, e) in exponents.iter().enumerate() {
                index[Self::key(e)] = i;
            }
            let low_degree = (0..exponents.len())
                .filter(|&i| exponents[i].iter().sum::<u8>() <= 2)
                .collect();
            let one = index[0];
            let linear = std::array::from_fn(|k| {
                let mut e = [0u8; NVARS];
                e[k] = 1;
                index[Self::key(&e)]
            });
            Layout {
                exponents,
                index,
                low_degree,
                one,
                linear,
            }
        })
    }

    fn len(&self) -> usize {
        self.exponents.len()
    }

    /// Index of monomial `i` multiplied by unknown `k`.
    fn shifted(&self, i: usize, k: usize) -> usize {
        let mut e = self.exponents[i];
        e[k] += 1;
        self.index[Self::key(&e)]
    }
}

/// The ten conditions for `[R | t] = B b` to have `R` proportional to a
/// rotation, as symmetric forms in `b`.
fn orthogonality_forms<T: Real>(basis: &SMatrix<T, 12, 6>) -> [Matrix6<T>; 10] {
    let entry = |i: usize, j: usize| basis.row(3 * i + j).transpose();
    let rows = |a: usize, b: usize| -> Matrix6<T> {
        (0..3).fold(Matrix6::zeros(), |acc, j| acc + entry(a, j) * entry(b, j).transpose())
    };
    let cols = |a: usize, b: usize| -> Matrix6<T> {
        (0..3).fold(Matrix6::zeros(), |acc, j| acc + entry(j, a) * entry(j, b).transpose())
    };
    let sym = |m: Matrix6<T>| (m + m.transpose()) * T::lit(0.5);
    [
        sym(rows(0, 0) - rows(1, 1)),
        sym(rows(0, 0) - rows(2, 2)),
        sym(cols(0, 0) - cols(1, 1)),
        sym(cols(0, 0) - cols(2, 2)),
        sym(rows(0, 1)),
        sym(rows(0, 2)),
        sym(rows(1, 2)),
        sym(cols(0, 1)),
        sym(cols(0, 2)),
        sym(cols(1, 2)),
    ]
}

type Matrix6<T> = SMatrix<T, 6, 6>;

/// Coefficients of `bᵀ Q b` over the Macaulay monomials once `b[fixed] = 1`.
fn dehomogenize<T: Real>(q: &Matrix6<T>, fixed: usize, layout: &Layout) -> Vec<(usize, T)> {
    let slot = |a: usize| -> Option<usize> {
        match a.cmp(&fixed) {
            std::cmp::Ordering::Less => Some(a),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(a - 1),
        }
    };
    let mut out: Vec<(usize, T)> = Vec::with_capacity(21);
    for a in 0..6 {
        for b in a..6 {
            let coeff = if a == b { q[(a, a)] } else { q[(a, b)] * T::lit(2.0) };
            let mut e = [0u8; NVARS];
            for s in [slot(a), slot(b)].into_iter().flatten() {
                e[s] += 1;
            }
            out.push((layout.index[Layout::key(&e)], coeff));
        }
    }
    out
}

/// Coefficients of the random linear form whose multiplication map is
/// diagonalized. Fixed so results are reproducible.
const FORM: [f64; NVARS] = [0.5377, 1.8339, -2.2588, 0.8622, 0.3188];

/// Real solutions `b` (with `b[fixed] = 1`) of the ten forms.
fn solve_coefficients<T: Real>(forms: &[Matrix6<T>; 10], fixed: usize) -> Vec<SVector<T, 6>> {
    let layout = Layout::get();
    let n = layout.len();
    let polys: Vec<Vec<(usize, T)>> = forms.iter().map(|q| dehomogenize(q, fixed, layout)).collect();

    let mut mac = DMatrix::<T>::zeros(polys.len() * (NVARS + 1), n);
    let mut row = 0;
    for p in &polys {
        for shift in 0..=NVARS {
            for &(i, c) in p {
                let col = if shift == 0 { i } else { layout.shifted(i, shift - 1) };
                mac[(row, col)] += c;
            }
            row += 1;
        }
    }

    let svd = mac.svd(false, true);
    let Some(vt) = svd.v_t else {
        return Vec::new();
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let k = super::MAX_SOLUTIONS;
    let null = DMatrix::from_fn(n, k, |r, c| vt[(order[c], r)]);

    // Greedy pivoting picks the best-conditioned low-degree rows as basis.
    let basis_rows = pivot_rows(&null, &layout.low_degree, k);
    let sel = DMatrix::from_fn(k, k, |r, c| null[(basis_rows[r], c)]);
    let shifted = DMatrix::from_fn(k, k, |r, c| {
        (0..NVARS).fold(T::zero(), |acc, v| {
            acc + null[(layout.shifted(basis_rows[r], v), c)] * T::lit(FORM[v])
        })
    });
    let Some(action) = sel.lu().solve(&shifted) else {
        return Vec::new();
    };

    let eig = action.clone().complex_eigenvalues();
    let scale = eig.iter().fold(T::one(), |m, e| m.max((e.re * e.re + e.im * e.im).sqrt()));
    let mut out: Vec<SVector<T, 6>> = Vec::new();
    for lambda in eig.iter() {
        if lambda.im.abs() > T::tol(1e-8) * scale {
            continue;
        }
        let shifted = &action - DMatrix::identity(k, k) * lambda.re;
        let s = shifted.svd(false, true);
        let Some(vt) = s.v_t else { continue };
        let (imin, _) = s.singular_values.argmin();
        let w = vt.row(imin).transpose();
        let v = &null * w;
        let one = v[layout.one];
        if one.abs() <= T::tol(1e-12) * v.amax() {
            continue;
        }
        let mut b = SVector::<T, 6>::zeros();
        let mut slot = 0;
        for (a, item) in b.iter_mut().enumerate() {
            if a == fixed {
                *item = T::one();
            } else {
                *item = v[layout.linear[slot]] / one;
                slot += 1;
            }
        }
        out.push(refine_coefficients(forms, fixed, b));
    }
    out
}

/// Row indices (from `candidates`) chosen by column-pivoted Gram–Schmidt.
fn pivot_rows<T: Real>(null: &DMatrix<T>, candidates: &[usize], k: usize) -> Vec<usize> {
    let mut rows: Vec<DVector<T>> = candidates.iter().map(|&r| null.row(r).transpose()).collect();
    let mut remaining: Vec<usize> = (0..candidates.len()).collect();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(p, &i)| (p, rows[i].norm_squared()))
            .fold((0, T::lit(-1.0)), |best, cur| if cur.1 > best.1 { cur } else { best });
        let pick = remaining.swap_remove(pos);
        chosen.push(candidates[pick]);
        let norm = rows[pick].norm();
        if norm == T::zero() {
            continue;
        }
        let q = &rows[pick] / norm;
        for &i in &remaining {
            let d = rows[i].dot(&q);
            rows[i] -= &q * d;
        }
    }
    chosen
}

/// Gauss–Newton on the ten forms in the five free coefficients.
fn refine_coefficients<T: Real>(forms: &[Matrix6<T>; 10], fixed: usize, mut b: SVector<T, 6>) -> SVector<T, 6> {
    let residual = |b: &SVector<T, 6>| SVector::<T, 10>::from_fn(|i, _| (b.transpose() * forms[i] * b)[(0, 0)]);
    let mut r = residual(&b);
    for _ in 0..3 {
        let mut jac = SMatrix::<T, 10, 5>::zeros();
        for (i, q) in forms.iter().enumerate() {
            let g = q * b * T::lit(2.0);
            let mut slot = 0;
            for a in 0..6 {
                if a != fixed {
                    jac[(i, slot)] = g[a];
                    slot += 1;
                }
            }
        }
        let Some(step) = (jac.transpose() * jac).lu().solve(&(jac.transpose() * r)) else {
            break;
        };
        let mut cand = b;
        let mut slot = 0;
        for a in 0..6 {
            if a != fixed {
                cand[a] -= step[slot];
                slot += 1;
            }
        }
        let rc = residual(&cand);
        if !(rc.norm() < r.norm()) {
            break;
        }
        b = cand;
        r = rc;
    }
    b
}

/// Scaled-rotation vector `B b` turned into a pose, or `None` if it is too
/// far from a rotation.
fn pose_from_vector<T: Real>(p: &SVector<T, 12>) -> Option<Pose<T>> {
    let mut r = Matrix3::from_fn(|i, j| p[3 * i + j]);
    let mut t = Vector3::new(p[9], p[10], p[11]);
    let scale = r.column(0).norm();
    if !(scale > T::zero()) || !scale.is_finite() {
        return None;
    }
    r /= scale;
    t /= scale;
    if r.determinant() < T::zero() {
        r = -r;
        t = -t;
    }
    validate_rotation(&r).map(|rot| Pose::from_parts(rot, t))
}

pub fn solve_p1ac_nullspace<T: Real>(problem: &P1acProblem<T>) -> Result<SolutionSet<T>> {
    let sys = build_linear_system(&problem.ac, &problem.point)?;
    let null = nullspace_basis(&sys)?;
    let forms = orthogonality_forms(&null.basis);
    // If the solution has b₆ = 0 nothing survives; retry with b₁ fixed.
    for fixed in [5, 0] {
        let mut out = SolutionSet::default();
        let mut seen: Vec<Pose<T>> = Vec::new();
        for b in solve_coefficients(&forms, fixed) {
            let Some(local) = pose_from_vector(&null.combine(&b)) else {
                continue;
            };
            let tol = T::tol(1e-9);
            let duplicate = seen.iter().any(|p| {
                (p.rotation - local.rotation).amax() < tol
                    && (p.translation - local.translation).amax() < tol
            });
            if !duplicate && seen.len() < super::MAX_SOLUTIONS {
                seen.push(local);
                push_solution(&mut out, problem, &sys, local);
            }
        }
        if !out.is_empty() {
            return Ok(out);
        }
    }
    Ok(SolutionSet::default())
}
