//! Real roots of three quadratic equations in three unknowns.
//!
//! The generic path hides `z`: after a random rotation of the unknowns, the
//! monomials `x², xy, y²` are expressed linearly in `(x, y, 1)` with
//! coefficients polynomial in `z`. Three consistency relations between these
//! expressions give a 3×3 polynomial matrix whose determinant is a degree-8
//! polynomial in `z`; its real roots are isolated with Sturm sequences and
//! `(x, y)` is read off the matrix nullvector.
//!
//! Systems whose quadratic parts are linearly dependent contain affine
//! equations. Those are handled by restricting to the affine solution set and
//! solving the smaller system directly.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SMatrix, Vector3};
use rand::Rng;

use crate::constraints::quadric_monomials;
use crate::error::{Error, Result};
use crate::geometry::random_rotation;
use crate::poly::Poly;
use crate::scalar::Real;

pub const MAX_ROOTS: usize = 8;

/// Three quadrics over `[x², xy, xz, y², yz, z², x, y, z, 1]`. Rows without
/// quadratic terms are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadricTriple<T: Real> {
    pub coeffs: SMatrix<T, 3, 10>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootSet<T: Real> {
    pub roots: Vec<Vector3<T>>,
    /// Largest absolute quadric residual at each root.
    pub residuals: Vec<T>,
}

impl<T: Real> Default for RootSet<T> {
    fn default() -> Self {
        Self {
            roots: Vec::new(),
            residuals: Vec::new(),
        }
    }
}

impl<T: Real> RootSet<T> {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

impl<T: Real> QuadricTriple<T> {
    pub fn new(coeffs: SMatrix<T, 3, 10>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite quadric coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn residuals(&self, v: &Vector3<T>) -> Vector3<T> {
        self.coeffs * quadric_monomials(v[0], v[1], v[2])
    }

    pub fn jacobian(&self, v: &Vector3<T>) -> Matrix3<T> {
        let (x, y, z) = (v[0], v[1], v[2]);
        let two = T::lit(2.0);
        let o = T::zero();
        let i = T::one();
        #[rustfmt::skip]
        let d = SMatrix::<T, 10, 3>::from_row_slice(&[
            two * x, o, o,
            y, x, o,
            z, o, x,
            o, two * y, o,
            o, z, y,
            o, o, two * z,
            i, o, o,
            o, i, o,
            o, o, i,
            o, o, o,
        ]);
        self.coeffs * d
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> T {
        self.coeffs
            .row_iter()
            .map(|r| r.iter().fold(T::zero(), |s, c| s + c.abs()))
            .fold(T::zero(), |m, s| m.max(s))
    }

    /// Rows rescaled to unit max-abs; `None` if a row vanishes.
    fn row_normalized(&self) -> Option<Self> {
        let mut c = self.coeffs;
        for mut row in c.row_iter_mut() {
            let m = row.amax();
            if m == T::zero() {
                return None;
            }
            row /= m;
        }
        Some(Self { coeffs: c })
    }
}

/// Damped Newton on the three residuals, at most ten iterations. The input
/// is returned unchanged when the Jacobian is singular there.
pub fn polish_root<T: Real>(sys: &QuadricTriple<T>, root: &Vector3<T>) -> Vector3<T> {
    let mut v = *root;
    let mut f = sys.residuals(&v);
    let mut fnorm = f.norm();
    for _ in 0..10 {
        if fnorm == T::zero() || !fnorm.is_finite() {
            break;
        }
        let j = sys.jacobian(&v);
        let jn = j.norm();
        if !(j.determinant().abs() > T::tol(1e-14) * jn * jn * jn) {
            break;
        }
        let Some(step) = j.lu().solve(&f) else {
            break;
        };
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..8 {
            let cand = v - step * lambda;
            let fc = sys.residuals(&cand);
            let fcn = fc.norm();
            if fcn < fnorm {
                v = cand;
                f = fc;
                fnorm = fcn;
                accepted = true;
                break;
            }
            lambda *= T::lit(0.5);
        }
        if !accepted || step.norm() * lambda <= T::default_epsilon() * (T::one() + v.norm()) {
            break;
        }
    }
    v
}

/// All real roots, polished, deduplicated and sorted by residual. `rng`
/// drives the random change of variables.
pub fn solve3q3<T: Real, R: Rng + ?Sized>(
    sys: &QuadricTriple<T>,
    rng: &mut R,
) -> Result<RootSet<T>> {
    let norm = sys.row_normalized().ok_or(Error::DegenerateQuadrics)?;
    let candidates = if quadratic_rank(&norm.coeffs) == 3 {
        match hidden_variable_candidates(&norm.coeffs, rng)? {
            Some(c) => c,
            None => reduced_candidates(&norm.coeffs, rng)?,
        }
    } else {
        reduced_candidates(&norm.coeffs, rng)?
    };

    let accept = T::tol(1e-6);
    let mut polished: Vec<(Vector3<T>, T)> = candidates
        .into_iter()
        .map(|c| polish_root(&norm, &c))
        .filter(|v| v.iter().all(|c| c.is_finite()))
        .map(|v| (v, norm.residuals(&v).amax()))
        .filter(|(_, r)| *r < accept)
        .collect();
    polished.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

    let mut out = RootSet::default();
    let dup = T::tol(1e-6);
    for (v, _) in polished {
        if out.roots.iter().any(|r| (r - v).norm() < dup) {
            continue;
        }
        if out.roots.len() == MAX_ROOTS {
            break;
        }
        out.residuals.push(sys.residuals(&v).amax());
        out.roots.push(v);
    }
    Ok(out)
}

fn quadratic_rank<T: Real>(c: &SMatrix<T, 3, 10>) -> usize {
    let q = c.fixed_columns::<6>(0).into_owned();
    let sv = q.singular_values();
    let max = sv.max();
    if max == T::zero() {
        return 0;
    }
    sv.iter().filter(|s| **s > T::tol(1e-10) * max).count()
}

/// Symmetric form `vᵀHv + gᵀv + c` of one row.
fn row_to_form<T: Real>(row: &[T; 10]) -> (Matrix3<T>, Vector3<T>, T) {
    let h = T::lit(0.5);
    let m = Matrix3::new(
        row[0], row[1] * h, row[2] * h,
        row[1] * h, row[3], row[4] * h,
        row[2] * h, row[4] * h, row[5],
    );
    (m, Vector3::new(row[6], row[7], row[8]), row[9])
}

fn form_to_row<T: Real>(m: &Matrix3<T>, g: &Vector3<T>, c: T) -> [T; 10] {
    let two = T::lit(2.0);
    [
        m[(0, 0)],
        two * m[(0, 1)],
        two * m[(0, 2)],
        m[(1, 1)],
        two * m[(1, 2)],
        m[(2, 2)],
        g[0],
        g[1],
        g[2],
        c,
    ]
}

/// Coefficients of the system in `u`, where `v = q u`.
fn rotate_system<T: Real>(c: &SMatrix<T, 3, 10>, q: &Matrix3<T>) -> SMatrix<T, 3, 10> {
    let mut out = SMatrix::<T, 3, 10>::zeros();
    for i in 0..3 {
        let row: [T; 10] = std::array::from_fn(|k| c[(i, k)]);
        let (m, g, c0) = row_to_form(&row);
        let r = form_to_row(&(q.transpose() * m * q), &(q.transpose() * g), c0);
        for k in 0..10 {
            out[(i, k)] = r[k];
        }
    }
    out
}

/// A linear form `a·x + b·y + c` with coefficients polynomial in `z`.
type Lin<T> = [Poly<T>; 3];

fn lin_add<T: Real>(a: &Lin<T>, b: &Lin<T>) -> Lin<T> {
    [&a[0] + &b[0], &a[1] + &b[1], &a[2] + &b[2]]
}

fn lin_scale<T: Real>(p: &Poly<T>, a: &Lin<T>) -> Lin<T> {
    [p * &a[0], p * &a[1], p * &a[2]]
}

/// Reduction of `x²`, `xy`, `y²` to linear forms. With `magnitude` set,
/// every subtraction becomes an addition of absolute values, which yields a
/// coefficient-wise bound on the exact construction.
struct Reducer<T: Real> {
    sq_x: Lin<T>,
    xy: Lin<T>,
    sq_y: Lin<T>,
    magnitude: bool,
}

impl<T: Real> Reducer<T> {
    fn sub(&self, a: &Poly<T>, b: &Poly<T>) -> Poly<T> {
        if self.magnitude {
            a + b
        } else {
            a - b
        }
    }

    fn lin_sub(&self, a: &Lin<T>, b: &Lin<T>) -> Lin<T> {
        [self.sub(&a[0], &b[0]), self.sub(&a[1], &b[1]), self.sub(&a[2], &b[2])]
    }

    /// `x · (a x + b y + c)` reduced to a linear form.
    fn times_x(&self, f: &Lin<T>) -> Lin<T> {
        let mut out = lin_add(&lin_scale(&f[0], &self.sq_x), &lin_scale(&f[1], &self.xy));
        out[0] = &out[0] + &f[2];
        out
    }

    fn times_y(&self, f: &Lin<T>) -> Lin<T> {
        let mut out = lin_add(&lin_scale(&f[0], &self.xy), &lin_scale(&f[1], &self.sq_y));
        out[1] = &out[1] + &f[2];
        out
    }

    /// Rows acting on `(x, y, 1)`.
    fn relations(&self) -> [Lin<T>; 3] {
        // x·(xy) = y·(x²),  y·(xy) = x·(y²),  (xy)·(xy) = (x²)·(y²)
        let e1 = self.lin_sub(&self.times_x(&self.xy), &self.times_y(&self.sq_x));
        let e2 = self.lin_sub(&self.times_y(&self.xy), &self.times_x(&self.sq_y));
        let xy_sq = lin_add(
            &lin_add(
                &lin_scale(&self.xy[0], &self.times_y(&self.sq_x)),
                &lin_scale(&self.xy[1], &self.times_x(&self.sq_y)),
            ),
            &lin_scale(&self.xy[2], &self.xy),
        );
        let x2_y2 = lin_add(
            &lin_add(
                &lin_scale(&self.sq_y[0], &self.times_x(&self.sq_x)),
                &lin_scale(&self.sq_y[1], &self.times_y(&self.sq_x)),
            ),
            &lin_scale(&self.sq_y[2], &self.sq_x),
        );
        [e1, e2, self.lin_sub(&xy_sq, &x2_y2)]
    }
}

fn determinant<T: Real>(rows: &[Lin<T>; 3]) -> Poly<T> {
    let [e1, e2, e3] = rows;
    let minor = |a: usize, b: usize| &(&e2[a] * &e3[b]) - &(&e2[b] * &e3[a]);
    &(&(&e1[0] * &minor(1, 2)) - &(&e1[1] * &minor(0, 2))) + &(&e1[2] * &minor(0, 1))
}

/// Candidate roots from the hidden-variable resultant, or `None` when the
/// `x², xy, y²` block cannot be inverted after two random rotations.
fn hidden_variable_candidates<T: Real, R: Rng + ?Sized>(
    c: &SMatrix<T, 3, 10>,
    rng: &mut R,
) -> Result<Option<Vec<Vector3<T>>>> {
    let mut chosen = None;
    for attempt in 0..2 {
        let q: Matrix3<T> = random_rotation(rng);
        let rotated = rotate_system(c, &q);
        let Some((rows, row_bounds)) = hidden_relations(&rotated) else {
            continue;
        };
        let det = determinant(&rows);
        // A relation that cancels down to rounding noise, or a matrix that
        // is singular for every z, means the solution set is
        // positive-dimensional.
        let vanishing_row = rows.iter().zip(row_bounds.iter()).any(|(r, b)| {
            (0..3).all(|k| r[k].max_abs() <= T::tol(1e-11) * b[k].max_abs())
        });
        let volume = [-2.7182818, -0.7390851, 0.3183099, 1.6180340, 4.6692016].iter().fold(T::zero(), |acc, &z| {
            let z = T::lit(z);
            let m = Matrix3::from_fn(|i, j| rows[i][j].eval(z));
            let norms = m.row(0).norm() * m.row(1).norm() * m.row(2).norm();
            if norms > T::zero() {
                acc.max(m.determinant().abs() / norms)
            } else {
                acc
            }
        });
        if vanishing_row || volume <= T::tol(1e-13) {
            return Err(Error::DegenerateQuadrics);
        }
        let weak_leading = det.leading().abs() < T::tol(1e-10) * det.max_abs();
        chosen = Some((q, det, rows));
        if !weak_leading || attempt == 1 {
            break;
        }
    }
    let Some((q, det, rows)) = chosen else {
        return Ok(None);
    };

    let mut out = Vec::new();
    for z in det.real_roots() {
        let m = Matrix3::from_fn(|i, j| rows[i][j].eval(z));
        let crosses = [
            m.row(0).cross(&m.row(1)),
            m.row(0).cross(&m.row(2)),
            m.row(1).cross(&m.row(2)),
        ];
        let n = crosses
            .iter()
            .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        if n[2] == T::zero() || !n[2].is_finite() {
            continue;
        }
        let u = Vector3::new(n[0] / n[2], n[1] / n[2], z);
        out.push(q * u);
    }
    Ok(Some(out))
}

/// Polynomial matrix acting on `(x, y, 1)`, plus the same construction
/// carried out on magnitudes.
fn hidden_relations<T: Real>(
    c: &SMatrix<T, 3, 10>,
) -> Option<([Lin<T>; 3], [Lin<T>; 3])> {
    let block = Matrix3::from_fn(|i, j| c[(i, [0, 1, 3][j])]);
    let inv = block.try_inverse()?;
    if !(block.norm() * inv.norm() < T::lit(1e10)) {
        return None;
    }
    let build = |magnitude: bool| {
        let f = |v: T| if magnitude { v.abs() } else { v };
        let px: Vec<Poly<T>> = (0..3)
            .map(|i| Poly::linear(f(c[(i, 6)]), f(c[(i, 2)])))
            .collect();
        let py: Vec<Poly<T>> = (0..3)
            .map(|i| Poly::linear(f(c[(i, 7)]), f(c[(i, 4)])))
            .collect();
        let pr: Vec<Poly<T>> = (0..3)
            .map(|i| Poly::quadratic(f(c[(i, 9)]), f(c[(i, 8)]), f(c[(i, 5)])))
            .collect();
        // [x², xy, y²]ᵀ = −block⁻¹ (px·x + py·y + pr)
        let combine = |k: usize, src: &[Poly<T>]| -> Poly<T> {
            (0..3).fold(Poly::constant(T::zero()), |acc, i| {
                let term = src[i].scale(f(inv[(k, i)]));
                if magnitude {
                    &acc + &term
                } else {
                    &acc - &term
                }
            })
        };
        let lin = |k: usize| -> Lin<T> { [combine(k, &px), combine(k, &py), combine(k, &pr)] };
        Reducer {
            sq_x: lin(0),
            xy: lin(1),
            sq_y: lin(2),
            magnitude,
        }
        .relations()
    };
    Some((build(false), build(true)))
}

/// Dense quadric `vᵀHv + gᵀv + c` in any number of unknowns.
#[derive(Clone, Debug)]
struct Form<T: Real> {
    h: DMatrix<T>,
    g: DVector<T>,
    c: T,
}

impl<T: Real> Form<T> {
    fn dim(&self) -> usize {
        self.g.len()
    }

    fn eval(&self, v: &DVector<T>) -> T {
        (v.transpose() * &self.h * v)[(0, 0)] + self.g.dot(v) + self.c
    }

    /// Monomial coefficients of the quadratic part (upper triangle).
    fn quadratic_coeffs(&self) -> Vec<T> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let v = if i == j { self.h[(i, i)] } else { self.h[(i, j)] + self.h[(j, i)] };
                out.push(v);
            }
        }
        out
    }

    fn max_abs(&self) -> T {
        self.h.amax().max(self.g.amax()).max(self.c.abs())
    }

    fn scaled(&self, s: T) -> Self {
        Self {
            h: &self.h * s,
            g: &self.g * s,
            c: self.c * s,
        }
    }

    fn minus(&self, other: &Self, f: T) -> Self {
        Self {
            h: &self.h - &other.h * f,
            g: &self.g - &other.g * f,
            c: self.c - other.c * f,
        }
    }

    /// Restriction to `v = v0 + N w`.
    fn restrict(&self, v0: &DVector<T>, basis: &DMatrix<T>) -> Self {
        let hs = (&self.h + self.h.transpose()) * T::lit(0.5);
        Self {
            h: basis.transpose() * &hs * basis,
            g: basis.transpose() * (&hs * v0 * T::lit(2.0) + &self.g),
            c: self.eval(v0),
        }
    }
}

fn reduced_candidates<T: Real, R: Rng + ?Sized>(
    c: &SMatrix<T, 3, 10>,
    rng: &mut R,
) -> Result<Vec<Vector3<T>>> {
    let forms = (0..3)
        .map(|i| {
            let row: [T; 10] = std::array::from_fn(|k| c[(i, k)]);
            let (h, g, c0) = row_to_form(&row);
            Form {
                h: DMatrix::from_iterator(3, 3, h.iter().copied()),
                g: DVector::from_iterator(3, g.iter().copied()),
                c: c0,
            }
        })
        .collect();
    Ok(solve_forms(forms, 3, rng)?
        .into_iter()
        .map(|v| Vector3::new(v[0], v[1], v[2]))
        .collect())
}

/// Solves a small quadric system by repeatedly eliminating affine equations.
fn solve_forms<T: Real, R: Rng + ?Sized>(
    forms: Vec<Form<T>>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<DVector<T>>> {
    let tol = T::tol(1e-10);
    let forms: Vec<Form<T>> = forms
        .into_iter()
        .filter_map(|f| {
            let m = f.max_abs();
            (m > T::zero()).then(|| f.scaled(T::one() / m))
        })
        .collect();
    if n == 0 {
        let consistent = forms.iter().all(|f| f.c.abs() <= T::tol(1e-8));
        return Ok(if consistent { vec![DVector::zeros(0)] } else { Vec::new() });
    }
    if forms.is_empty() {
        return Err(Error::DegenerateQuadrics);
    }

    // Gaussian elimination on the quadratic coefficients splits the system
    // into independent quadrics and affine leftovers.
    let mut rows = forms;
    let ncoef = n * (n + 1) / 2;
    let mut rank = 0;
    for col in 0..ncoef {
        let Some((p, best)) = (rank..rows.len())
            .map(|r| (r, rows[r].quadratic_coeffs()[col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        else {
            break;
        };
        if best <= tol {
            continue;
        }
        rows.swap(rank, p);
        let pivot = rows[rank].quadratic_coeffs()[col];
        for r in rank + 1..rows.len() {
            let f = rows[r].quadratic_coeffs()[col] / pivot;
            rows[r] = rows[r].minus(&rows[rank], f);
        }
        rank += 1;
    }
    let affine: Vec<Form<T>> = rows.split_off(rank);
    let quadrics = rows;

    if !affine.is_empty() {
        match affine_solution_set(&affine, n, tol) {
            None => return Ok(Vec::new()),
            Some((v0, basis)) if basis.ncols() < n => {
                let restricted = quadrics.iter().map(|f| f.restrict(&v0, &basis)).collect();
                let sols = solve_forms(restricted, basis.ncols(), rng)?;
                return Ok(sols.into_iter().map(|w| &v0 + &basis * w).collect());
            }
            Some(_) => {} // all affine rows vanished identically
        }
    }

    if quadrics.len() < n {
        return Err(Error::DegenerateQuadrics);
    }
    match n {
        1 => Ok(univariate_roots(&quadrics)),
        2 => bivariate_roots(&quadrics, rng),
        _ => Err(Error::DegenerateQuadrics),
    }
}

/// Particular solution and nullspace basis of the affine rows, or `None` if
/// they are inconsistent.
fn affine_solution_set<T: Real>(
    affine: &[Form<T>],
    n: usize,
    tol: T,
) -> Option<(DVector<T>, DMatrix<T>)> {
    let rows = affine.len().max(n);
    let mut g = DMatrix::<T>::zeros(rows, n);
    let mut b = DVector::<T>::zeros(rows);
    for (i, f) in affine.iter().enumerate() {
        g.set_row(i, &f.g.transpose());
        b[i] = -f.c;
    }
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    let smax = svd.singular_values.max();
    let mut v0 = DVector::<T>::zeros(n);
    let mut null = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let vk = vt.row(k).transpose();
        if smax > T::zero() && s > tol * smax.max(T::one()) {
            v0 += &vk * (u.column(k).dot(&b) / s);
        } else {
            null.push(vk);
        }
    }
    if (&g * &v0 - &b).amax() > T::tol(1e-8) * (T::one() + b.amax()) {
        return None;
    }
    let basis = if null.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&null)
    };
    Some((v0, basis))
}

fn univariate_roots<T: Real>(forms: &[Form<T>]) -> Vec<DVector<T>> {
    let f = forms
        .iter()
        .max_by(|a, b| a.h[(0, 0)].abs().partial_cmp(&b.h[(0, 0)].abs()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    Poly::quadratic(f.c, f.g[0], f.h[(0, 0)])
        .real_roots()
        .into_iter()
        .map(|r| DVector::from_element(1, r))
        .collect()
}

/// Two quadrics in two unknowns via the Sylvester resultant in the second
/// unknown; a random rotation keeps the `u²` coefficients away from zero.
fn bivariate_roots<T: Real, R: Rng + ?Sized>(
    forms: &[Form<T>],
    rng: &mut R,
) -> Result<Vec<DVector<T>>> {
    let angle = T::lit(rng.random_range(0.0..std::f64::consts::TAU));
    let (s, c) = angle.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let rot_d = DMatrix::from_iterator(2, 2, rot.iter().copied());
    let zero = DVector::zeros(2);
    let f: Vec<Form<T>> = forms[..2].iter().map(|f| f.restrict(&zero, &rot_d)).collect();

    // q(u, w) = A u² + B(w) u + C(w)
    let coeffs = |f: &Form<T>| {
        let a = Poly::constant(f.h[(0, 0)]);
        let b = Poly::linear(f.g[0], f.h[(0, 1)] + f.h[(1, 0)]);
        let c = Poly::quadratic(f.c, f.g[1], f.h[(1, 1)]);
        (a, b, c)
    };
    let (a1, b1, c1) = coeffs(&f[0]);
    let (a2, b2, c2) = coeffs(&f[1]);
    let ac = &(&a1 * &c2) - &(&a2 * &c1);
    let ab = &(&a1 * &b2) - &(&a2 * &b1);
    let bc = &(&b1 * &c2) - &(&b2 * &c1);
    let res = &(&ac * &ac) - &(&ab * &bc);
    let scale = [&a1, &b1, &c1, &a2, &b2, &c2]
        .iter()
        .fold(T::zero(), |m, p| m.max(p.max_abs()));
    if res.max_abs() <= T::tol(1e-12) * scale.powi(4) {
        return Err(Error::DegenerateQuadrics);
    }

    let mut out = Vec::new();
    for w in res.real_roots() {
        let den = ab.eval(w);
        let us: Vec<T> = if den.abs() > T::tol(1e-8) * scale * scale {
            vec![-ac.eval(w) / den]
        } else {
            let (a, b, c) = if a1.eval(w).abs() >= a2.eval(w).abs() {
                (&a1, &b1, &c1)
            } else {
                (&a2, &b2, &c2)
            };
            Poly::quadratic(c.eval(w), b.eval(w), a.eval(w)).real_roots()
        };
        for u in us {
            let v = rot * nalgebra::Vector2::new(u, w);
            out.push(DVector::from_column_slice(&[v[0], v[1]]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn triple(rows: [[f64; 10]; 3]) -> QuadricTriple<f64> {
        QuadricTriple::new(SMatrix::<f64, 3, 10>::from_fn(|i, j| rows[i][j])).unwrap()
    }

    fn separable() -> QuadricTriple<f64> {
        triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0],
        ])
    }

    fn random_triple(rng: &mut ChaCha8Rng) -> QuadricTriple<f64> {
        QuadricTriple::new(SMatrix::<f64, 3, 10>::from_fn(|_, _| rng.sample(StandardNormal))).unwrap()
    }

    fn has_root(set: &RootSet<f64>, v: &Vector3<f64>, tol: f64) -> bool {
        set.roots.iter().any(|r| (r - v).norm() < tol)
    }

    /// Newton from every local minimum of the residual on a coarse grid.
    fn brute_force_roots(sys: &QuadricTriple<f64>, half: f64, step: f64) -> Vec<Vector3<f64>> {
        let n = (2.0 * half / step).round() as usize + 1;
        let coord = |i: usize| -half + step * i as f64;
        let mut vals = vec![0.0; n * n * n];
        let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = Vector3::new(coord(i), coord(j), coord(k));
                    vals[idx(i, j, k)] = sys.residuals(&v).norm_squared();
                }
            }
        }
        let mut roots: Vec<Vector3<f64>> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let c = vals[idx(i, j, k)];
                    let mut is_min = true;
                    'nb: for di in -1i32..=1 {
                        for dj in -1i32..=1 {
                            for dk in -1i32..=1 {
                                let (a, b, d) = (i as i32 + di, j as i32 + dj, k as i32 + dk);
                                if (di, dj, dk) == (0, 0, 0)
                                    || a < 0
                                    || b < 0
                                    || d < 0
                                    || a >= n as i32
                                    || b >= n as i32
                                    || d >= n as i32
                                {
                                    continue;
                                }
                                if vals[idx(a as usize, b as usize, d as usize)] < c {
                                    is_min = false;
                                    break 'nb;
                                }
                            }
                        }
                    }
                    if !is_min {
                        continue;
                    }
                    let mut v = Vector3::new(coord(i), coord(j), coord(k));
                    for _ in 0..50 {
                        let Some(step) = sys.jacobian(&v).lu().solve(&sys.residuals(&v)) else {
                            break;
                        };
                        v -= step;
                        if step.norm() < 1e-15 * (1.0 + v.norm()) {
                            break;
                        }
                    }
                    let inside = v.iter().all(|c| c.abs() <= half);
                    if inside
                        && sys.residuals(&v).amax() < 1e-10
                        && !roots.iter().any(|r| (r - v).norm() < 1e-6)
                    {
                        roots.push(v);
                    }
                }
            }
        }
        roots
    }

    #[test]
    fn separable_system_has_eight_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = solve3q3(&separable(), &mut rng).unwrap();
        assert_eq!(set.len(), 8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    assert!(has_root(&set, &Vector3::new(sx, sy, sz), 1e-12));
                }
            }
        }
    }

    #[test]
    fn factorable_system_with_linear_rows() {
        // x² + x − 2 = 0, y − x = 0, z − 1 = 0
        let sys = triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -2.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0],
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let set = solve3q3(&sys, &mut rng).unwrap();
        assert_eq!(set.len(), 2);
        assert!(has_root(&set, &Vector3::new(1.0, 1.0, 1.0), 1e-12));
        assert!(has_root(&set, &Vector3::new(-2.0, -2.0, 1.0), 1e-12));
    }

    #[test]
    fn rank_two_quadratic_part() {
        // x² − 1 = 0, y² − 4 = 0, x² + y² + z − 6 = 0  ⇒  z = 1
        let sys = triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -4.0],
            [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -6.0],
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = solve3q3(&sys, &mut rng).unwrap();
        assert_eq!(set.len(), 4);
        for (x, y) in [(1.0, 2.0), (-1.0, 2.0), (1.0, -2.0), (-1.0, -2.0)] {
            assert!(has_root(&set, &Vector3::new(x, y, 1.0), 1e-10));
        }
    }

    #[test]
    fn inconsistent_affine_rows_give_no_roots() {
        let sys = triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -2.0],
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(solve3q3(&sys, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn infinite_families_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Twisted cubic: y = x², z = x³.
        let cubic = triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        ]);
        assert!(matches!(solve3q3(&cubic, &mut rng), Err(Error::DegenerateQuadrics)));
        // Every row vanishes on the line x = y = 0.
        let line = triple([
            [0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, -2.0, 3.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        ]);
        assert!(matches!(solve3q3(&line, &mut rng), Err(Error::DegenerateQuadrics)));
        // z is unconstrained.
        let free = triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -2.0],
        ]);
        assert!(matches!(solve3q3(&free, &mut rng), Err(Error::DegenerateQuadrics)));
        let zero_row = triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0; 10],
        ]);
        assert!(matches!(solve3q3(&zero_row, &mut rng), Err(Error::DegenerateQuadrics)));
    }

    #[test]
    fn non_finite_coefficients_are_rejected() {
        let mut c = SMatrix::<f64, 3, 10>::zeros();
        c[(1, 4)] = f64::NAN;
        assert!(QuadricTriple::new(c).is_err());
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..40 {
            let sys = random_triple(&mut rng);
            let set = solve3q3(&sys, &mut rng).unwrap();
            let bound = 1e-6 * sys.norm_inf();
            assert!(set.residuals.iter().all(|r| *r < bound));
            for r in brute_force_roots(&sys, 10.0, 0.25) {
                assert!(has_root(&set, &r, 1e-6), "missed {r} in {:?}", set.roots);
            }
        }
    }

    #[test]
    fn polish_keeps_exact_root() {
        let sys = separable();
        let r = Vector3::new(1.0, -1.0, 1.0);
        assert!((polish_root(&sys, &r) - r).norm() < 1e-15);
    }

    #[test]
    fn polish_converges_on_separable_system() {
        let sys = separable();
        let r = Vector3::new(1.0, -1.0, 1.0);
        let p = polish_root(&sys, &(r + Vector3::repeat(1e-4)));
        assert!((p - r).norm() < 1e-12);
    }

    #[test]
    fn polish_reduces_residual_on_random_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 50 {
            let sys = random_triple(&mut rng);
            for r in brute_force_roots(&sys, 3.0, 0.25) {
                let jc = sys.jacobian(&r);
                if jc.norm() * jc.try_inverse().map_or(f64::INFINITY, |m| m.norm()) > 1e4 {
                    continue;
                }
                let start = r + Vector3::repeat(1e-5);
                let before = sys.residuals(&start).norm();
                let after = sys.residuals(&polish_root(&sys, &start)).norm();
                assert!(after <= before * 1e-4, "{before} -> {after}");
                checked += 1;
            }
        }
    }

    #[test]
    fn polish_leaves_singular_points_alone() {
        // All gradients vanish at the origin.
        let sys = triple([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0],
        ]);
        let o = Vector3::zeros();
        assert_eq!(polish_root(&sys, &o), o);
    }

    #[test]
    fn no_duplicates_and_at_most_eight_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let sys = random_triple(&mut rng);
            let set = solve3q3(&sys, &mut rng).unwrap();
            assert!(set.len() <= MAX_ROOTS);
            for i in 0..set.len() {
                for j in i + 1..set.len() {
                    assert!((set.roots[i] - set.roots[j]).norm() >= 1e-6);
                }
            }
        }
    }

    #[test]
    fn single_precision_separable() {
        let sys = QuadricTriple::new(separable().coeffs.map(|v| v as f32)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = solve3q3(&sys, &mut rng).unwrap();
        assert_eq!(set.len(), 8);
    }

    fn matched(a: &RootSet<f64>, b: &[Vector3<f64>], tol: f64) -> bool {
        a.len() == b.len() && b.iter().all(|r| has_root(a, r, tol))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn row_scaling_leaves_roots_unchanged(seed in any::<u64>(), row in 0usize..3, s in 1e-3f64..1e3, neg in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = random_triple(&mut rng);
            let mut scaled = sys.clone();
            let s = if neg { -s } else { s };
            for k in 0..10 {
                scaled.coeffs[(row, k)] *= s;
            }
            let a = solve3q3(&sys, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = solve3q3(&scaled, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(matched(&a, &b.roots, 1e-9));
        }

        #[test]
        fn relabeling_permutes_roots(seed in any::<u64>(), perm in 0usize..6) {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let p = perms[perm];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = random_triple(&mut rng);
            // New variable i is old variable p[i].
            let mut coeffs = SMatrix::<f64, 3, 10>::zeros();
            for r in 0..3 {
                let row: [f64; 10] = std::array::from_fn(|k| sys.coeffs[(r, k)]);
                let (h, g, c) = row_to_form(&row);
                let hp = Matrix3::from_fn(|i, j| h[(p[i], p[j])]);
                let gp = Vector3::from_fn(|i, _| g[p[i]]);
                let out = form_to_row(&hp, &gp, c);
                for k in 0..10 {
                    coeffs[(r, k)] = out[k];
                }
            }
            let relabeled = QuadricTriple::new(coeffs).unwrap();
            let a = solve3q3(&sys, &mut rng).unwrap();
            let b = solve3q3(&relabeled, &mut rng).unwrap();
            let expected: Vec<Vector3<f64>> =
                a.roots.iter().map(|r| Vector3::new(r[p[0]], r[p[1]], r[p[2]])).collect();
            prop_assert!(matched(&b, &expected, 1e-9), "{:?} vs {:?}", b.roots, expected);
        }
    }
}
