//! Dense univariate polynomials and Sturm-sequence real root isolation.

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Real;

/// Polynomial with coefficients in ascending order of degree.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Poly<T: Real> {
    pub(crate) coeffs: Vec<T>,
}

impl<T: Real> Poly<T> {
    pub(crate) fn new(coeffs: Vec<T>) -> Self {
        let mut p = Self { coeffs };
        p.trim_exact();
        p
    }

    pub(crate) fn constant(c: T) -> Self {
        Self::new(vec![c])
    }

    /// `a + b·z`.
    pub(crate) fn linear(a: T, b: T) -> Self {
        Self::new(vec![a, b])
    }

    /// `a + b·z + c·z²`.
    pub(crate) fn quadratic(a: T, b: T, c: T) -> Self {
        Self::new(vec![a, b, c])
    }

    fn trim_exact(&mut self) {
        while self.coeffs.len() > 1 && *self.coeffs.last().unwrap() == T::zero() {
            self.coeffs.pop();
        }
        if self.coeffs.is_empty() {
            self.coeffs.push(T::zero());
        }
    }

    /// Drops leading coefficients below `rel` times the largest magnitude.
    fn trim_relative(&mut self, rel: T) {
        let cutoff = self.max_abs() * rel;
        while self.coeffs.len() > 1 && self.coeffs.last().unwrap().abs() <= cutoff {
            self.coeffs.pop();
        }
    }

    pub(crate) fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub(crate) fn leading(&self) -> T {
        *self.coeffs.last().unwrap()
    }

    pub(crate) fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()))
    }

    pub(crate) fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub(crate) fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::constant(T::zero());
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * T::lit(i as f64))
                .collect(),
        )
    }

    pub(crate) fn scale(&self, s: T) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    fn normalized(&self) -> Self {
        let m = self.max_abs();
        if m == T::zero() {
            self.clone()
        } else {
            self.scale(T::one() / m)
        }
    }

    /// Remainder of the division by `d` (whose leading coefficient is nonzero).
    fn rem(&self, d: &Self) -> Self {
        let mut r = self.coeffs.clone();
        let dn = d.degree();
        let lead = d.leading();
        while r.len() > dn && r.len() > 1 {
            let k = r.len() - 1;
            let f = r[k] / lead;
            for (j, &dc) in d.coeffs.iter().enumerate() {
                let idx = k - dn + j;
                r[idx] -= f * dc;
            }
            r.pop();
            if dn == 0 {
                break;
            }
        }
        if dn == 0 {
            return Self::constant(T::zero());
        }
        Self::new(r)
    }

    /// Distinct real roots, ascending. Near-real complex pairs (imaginary
    /// part below `1e-8` relative) are reported at their real part.
    pub(crate) fn real_roots(&self) -> Vec<T> {
        let mut p = self.clone();
        p.trim_relative(T::tol(1e-15));
        let mut roots = p.real_roots_sturm();
        if p.degree() >= 2 {
            let dp = p.derivative();
            let ddp = dp.derivative();
            for c in dp.real_roots_sturm() {
                let scale = T::one().max(c.abs());
                if roots.iter().any(|r| (*r - c).abs() <= T::tol(1e-6) * scale) {
                    continue;
                }
                let curvature = ddp.eval(c).abs();
                if curvature == T::zero() {
                    continue;
                }
                let imag = (T::lit(2.0) * p.eval(c).abs() / curvature).sqrt();
                if imag <= T::tol(1e-8) * scale {
                    roots.push(c);
                }
            }
            roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        }
        roots
    }

    fn real_roots_sturm(&self) -> Vec<T> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![-self.coeffs[0] / self.coeffs[1]];
        }
        let chain = sturm_chain(self);
        let lead = self.leading();
        let bound = T::one()
            + self.coeffs[..n]
                .iter()
                .fold(T::zero(), |m, c| m.max((*c / lead).abs()));
        let (lo, hi) = (-bound, bound);
        let mut roots = Vec::with_capacity(n);
        let mut stack = vec![(lo, hi, sign_changes(&chain, lo), sign_changes(&chain, hi), 0u32)];
        let dp = self.derivative();
        while let Some((a, b, va, vb, depth)) = stack.pop() {
            let count = va.saturating_sub(vb);
            if count == 0 {
                continue;
            }
            if count == 1 {
                roots.push(refine_isolated(self, &dp, a, b));
                continue;
            }
            let mid = (a + b) * T::lit(0.5);
            let width_floor = T::lit(4.0) * T::default_epsilon() * a.abs().max(b.abs());
            if depth > 160 || b - a <= width_floor || mid <= a || mid >= b {
                // Cluster narrower than the representable resolution.
                roots.push(mid);
                continue;
            }
            let vm = sign_changes(&chain, mid);
            stack.push((mid, b, vm, vb, depth + 1));
            stack.push((a, mid, va, vm, depth + 1));
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        roots
    }
}

fn sturm_chain<T: Real>(p: &Poly<T>) -> Vec<Poly<T>> {
    let mut chain = vec![p.normalized(), p.derivative().normalized()];
    let negligible = T::tol(1e-13);
    loop {
        let n = chain.len();
        if chain[n - 1].degree() == 0 {
            break;
        }
        let mut r = chain[n - 2].rem(&chain[n - 1]);
        // Remainder relative to the dividend, which is normalized to max 1.
        if r.max_abs() <= negligible {
            break;
        }
        r.trim_relative(negligible);
        chain.push(-r.normalized());
    }
    chain
}

fn sign_changes<T: Real>(chain: &[Poly<T>], x: T) -> usize {
    let mut changes = 0;
    let mut last = 0i8;
    for p in chain {
        let v = p.eval(x);
        let s = if v > T::zero() {
            1
        } else if v < T::zero() {
            -1
        } else {
            0
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}

/// Converges to the single distinct root inside `(a, b]`.
fn refine_isolated<T: Real>(p: &Poly<T>, dp: &Poly<T>, a: T, b: T) -> T {
    let fa = p.eval(a);
    let fb = p.eval(b);
    if fb == T::zero() {
        return b;
    }
    if fa * fb < T::zero() {
        return bracketed_newton(p, dp, a, b, fa);
    }
    // Even multiplicity: the root is a sign change of the derivative.
    let ga = dp.eval(a);
    let gb = dp.eval(b);
    if ga * gb < T::zero() {
        let ddp = dp.derivative();
        return bracketed_newton(dp, &ddp, a, b, ga);
    }
    (a + b) * T::lit(0.5)
}

fn bracketed_newton<T: Real>(p: &Poly<T>, dp: &Poly<T>, mut a: T, mut b: T, mut fa: T) -> T {
    let half = T::lit(0.5);
    let eps = T::default_epsilon();
    let mut x = (a + b) * half;
    let mut last_width = b - a;
    for _ in 0..200 {
        let fx = p.eval(x);
        if fx == T::zero() {
            return x;
        }
        if (fx > T::zero()) == (fa > T::zero()) {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let width = b - a;
        if width <= T::lit(2.0) * eps * a.abs().max(b.abs()) {
            return (a + b) * half;
        }
        let slow = width > last_width * half;
        last_width = width;
        let d = dp.eval(x);
        let newton = x - fx / d;
        let next = if slow || !newton.is_finite() || newton <= a || newton >= b {
            (a + b) * half
        } else {
            newton
        };
        if (next - x).abs() <= eps * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

impl<T: Real> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let c = (0..n)
            .map(|i| {
                self.coeffs.get(i).copied().unwrap_or(T::zero())
                    + rhs.coeffs.get(i).copied().unwrap_or(T::zero())
            })
            .collect();
        Poly::new(c)
    }
}

impl<T: Real> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let c = (0..n)
            .map(|i| {
                self.coeffs.get(i).copied().unwrap_or(T::zero())
                    - rhs.coeffs.get(i).copied().unwrap_or(T::zero())
            })
            .collect();
        Poly::new(c)
    }
}

impl<T: Real> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: &Poly<T>) -> Poly<T> {
        let mut c = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }
}

impl<T: Real> Neg for Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        Poly::new(self.coeffs.into_iter().map(|c| -c).collect())
    }
}
