//! Linear constraints that one affine correspondence and one oriented point
//! place on the query pose.
//!
//! Unknowns are ordered `[r11 r12 r13 r21 r22 r23 r31 r32 r33 t1 t2 t3]`.
//! The first two rows say the point projects to `y`; the remaining four say
//! the plane-induced warp has Jacobian `A` at the reference observation.

use nalgebra::{SMatrix, SVector, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{AffineCorrespondence, CayleyRotation, OrientedPoint, DEGENERACY_EPS};
use crate::scalar::Real;

/// Monomials `[x², xy, xz, y², yz, z², x, y, z, 1]` of the Cayley parameters.
pub fn quadric_monomials<T: Real>(x: T, y: T, z: T) -> SVector<T, 10> {
    SVector::<T, 10>::from_column_slice(&[
        x * x,
        x * y,
        x * z,
        y * y,
        y * z,
        z * z,
        x,
        y,
        z,
        T::one(),
    ])
}

/// Six homogeneous linear equations in `vec([R | t])`, each row of unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearConstraintSystem<T: Real> {
    pub m: SMatrix<T, 6, 12>,
}

impl<T: Real> LinearConstraintSystem<T> {
    /// `M · vec([R | t])`.
    pub fn apply(&self, unknowns: &SVector<T, 12>) -> SVector<T, 6> {
        self.m * unknowns
    }
}

/// The same six equations after substituting the Cayley rotation and
/// multiplying through by `s`, over
/// `[st₁, st₂, st₃, x², xy, xz, y², yz, z², x, y, z, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialConstraintSystem<T: Real> {
    pub m: SMatrix<T, 6, 13>,
}

impl<T: Real> MonomialConstraintSystem<T> {
    pub fn from_matrix(m: SMatrix<T, 6, 13>) -> Self {
        Self { m }
    }

    /// Monomial vector for Cayley parameters `w` and scaled translation `st`.
    pub fn monomials(w: &CayleyRotation<T>, st: &Vector3<T>) -> SVector<T, 13> {
        let q = quadric_monomials(w.x, w.y, w.z);
        let mut v = SVector::<T, 13>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(st);
        v.fixed_rows_mut::<10>(3).copy_from(&q);
        v
    }

    pub fn apply(&self, monomials: &SVector<T, 13>) -> SVector<T, 6> {
        self.m * monomials
    }
}

/// Three quadrics in the Cayley parameters left after eliminating the
/// translation, together with the map back to `s·t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedQuadricSystem<T: Real> {
    /// Rows over `[x², xy, xz, y², yz, z², x, y, z, 1]`.
    pub quadrics: SMatrix<T, 3, 10>,
    /// `s·t = back_substitution · monomials(x, y, z)`.
    pub back_substitution: SMatrix<T, 3, 10>,
}

impl<T: Real> ReducedQuadricSystem<T> {
    pub fn residuals(&self, x: T, y: T, z: T) -> Vector3<T> {
        self.quadrics * quadric_monomials(x, y, z)
    }

    pub fn scaled_translation(&self, x: T, y: T, z: T) -> Vector3<T> {
        self.back_substitution * quadric_monomials(x, y, z)
    }
}

pub fn build_linear_system<T: Real>(
    ac: &AffineCorrespondence<T>,
    op: &OrientedPoint<T>,
) -> Result<LinearConstraintSystem<T>> {
    let y = Vector3::new(ac.y[0], ac.y[1], T::one());
    build_linear_system_homogeneous(&y, &ac.a, op)
}

/// Variant taking the query observation as a homogeneous vector `ỹ`; the
/// rows are linear in `ỹ`, so any nonzero rescaling of it gives the same
/// normalized system up to row signs.
pub fn build_linear_system_homogeneous<T: Real>(
    y: &Vector3<T>,
    a: &nalgebra::Matrix2<T>,
    op: &OrientedPoint<T>,
) -> Result<LinearConstraintSystem<T>> {
    let k = op.plane_dot();
    if !(k.abs() >= T::tol(DEGENERACY_EPS)) {
        return Err(Error::DegenerateConstraint);
    }
    let p = op.point();
    let dk = op.depth * k;
    let n = &op.normal;
    let w = y[2];
    let mut m = SMatrix::<T, 6, 12>::zeros();

    // w·(r_i·p + t_i) − y_i·(r₃·p + t₃) = 0, written with the opposite sign.
    for i in 0..2 {
        for c in 0..3 {
            m[(i, 6 + c)] = y[i] * p[c];
            m[(i, 3 * i + c)] = -w * p[c];
        }
        m[(i, 11)] = y[i];
        m[(i, 9 + i)] = -w;
    }

    // m·A − m·J = 0 with m = nᵀx̃·(r₃·p + t₃), expanded linearly.
    let mut row = 2;
    for i in 0..2 {
        for j in 0..2 {
            let aij = a[(i, j)] * w;
            for c in 0..3 {
                m[(row, 6 + c)] += aij * k * p[c];
            }
            m[(row, 11)] += aij * k + y[i] * n[j];
            m[(row, 3 * i + j)] -= w * dk;
            m[(row, 6 + j)] += dk * y[i];
            m[(row, 9 + i)] -= w * n[j];
            row += 1;
        }
    }

    for mut r in m.row_iter_mut() {
        let len = r.norm();
        if !(len > T::zero()) || !len.is_finite() {
            return Err(Error::DegenerateConstraint);
        }
        r /= len;
    }
    Ok(LinearConstraintSystem { m })
}

/// Linear map from the ten Cayley monomials to the nine entries (row-major)
/// of `s·R`.
fn cayley_numerator_map<T: Real>() -> SMatrix<T, 9, 10> {
    // columns: x² xy xz y² yz z² x y z 1
    #[rustfmt::skip]
    let c: [[f64; 10]; 9] = [
        [ 1.0, 0.0, 0.0, -1.0, 0.0, -1.0,  0.0,  0.0,  0.0, 1.0],
        [ 0.0, 2.0, 0.0,  0.0, 0.0,  0.0,  0.0,  0.0, -2.0, 0.0],
        [ 0.0, 0.0, 2.0,  0.0, 0.0,  0.0,  0.0,  2.0,  0.0, 0.0],
        [ 0.0, 2.0, 0.0,  0.0, 0.0,  0.0,  0.0,  0.0,  2.0, 0.0],
        [-1.0, 0.0, 0.0,  1.0, 0.0, -1.0,  0.0,  0.0,  0.0, 1.0],
        [ 0.0, 0.0, 0.0,  0.0, 2.0,  0.0, -2.0,  0.0,  0.0, 0.0],
        [ 0.0, 0.0, 2.0,  0.0, 0.0,  0.0,  0.0, -2.0,  0.0, 0.0],
        [ 0.0, 0.0, 0.0,  0.0, 2.0,  0.0,  2.0,  0.0,  0.0, 0.0],
        [-1.0, 0.0, 0.0, -1.0, 0.0,  1.0,  0.0,  0.0,  0.0, 1.0],
    ];
    SMatrix::<T, 9, 10>::from_fn(|r, col| T::lit(c[r][col]))
}

pub fn build_monomial_system<T: Real>(
    ac: &AffineCorrespondence<T>,
    op: &OrientedPoint<T>,
) -> Result<MonomialConstraintSystem<T>> {
    Ok(monomial_system_from_linear(&build_linear_system(ac, op)?))
}

pub fn monomial_system_from_linear<T: Real>(
    lin: &LinearConstraintSystem<T>,
) -> MonomialConstraintSystem<T> {
    let rot = lin.m.fixed_columns::<9>(0) * cayley_numerator_map::<T>();
    let mut m = SMatrix::<T, 6, 13>::zeros();
    m.fixed_columns_mut::<3>(0).copy_from(&lin.m.fixed_columns::<3>(9));
    m.fixed_columns_mut::<10>(3).copy_from(&rot);
    MonomialConstraintSystem { m }
}

/// Gauss–Jordan on the `s·t` block with partial pivoting. The three rows that
/// end up free of `s·t` are the quadrics; the pivot rows give `s·t`.
pub fn eliminate_translation<T: Real>(
    sys: &MonomialConstraintSystem<T>,
) -> Result<ReducedQuadricSystem<T>> {
    let mut m = sys.m;
    let block_max = m
        .fixed_columns::<3>(0)
        .iter()
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    if !(block_max > T::zero()) || !block_max.is_finite() {
        return Err(Error::EliminationSingular);
    }
    let threshold = T::tol(1e-10) * block_max;
    for col in 0..3 {
        let (pivot_row, pivot) = (col..6)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot < threshold {
            return Err(Error::EliminationSingular);
        }
        m.swap_rows(col, pivot_row);
        let inv = T::one() / m[(col, col)];
        let pivot_vals = m.row(col) * inv;
        m.set_row(col, &pivot_vals);
        for r in 0..6 {
            if r != col {
                let f = m[(r, col)];
                if f != T::zero() {
                    let updated = m.row(r) - pivot_vals * f;
                    m.set_row(r, &updated);
                }
            }
        }
    }
    let back_substitution = -m.fixed_view::<3, 10>(0, 3).into_owned();
    let mut quadrics = m.fixed_view::<3, 10>(3, 3).into_owned();
    for mut row in quadrics.row_iter_mut() {
        let scale = row.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        if scale > T::zero() {
            row /= scale;
        }
    }
    Ok(ReducedQuadricSystem {
        quadrics,
        back_substitution,
    })
}

/// `[y, 1]`.
pub fn homogeneous_observation<T: Real>(y: &Vector2<T>) -> Vector3<T> {
    Vector3::new(y[0], y[1], T::one())
}
