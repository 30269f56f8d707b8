//! Scalar abstraction shared by the geometry and solver layers.
//!
//! Everything up to and including the minimal solvers is generic over [`Real`],
//! which is implemented for `f32` and `f64`. Tolerances are written once as
//! double-precision values and mapped onto the active precision with
//! [`Real::tol`], so a threshold that sits at a given fraction of the
//! available digits in `f64` sits at the same fraction in `f32`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Machine epsilon of the underlying type, as `f64`.
    const UNIT_ROUNDOFF: f64;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    /// Rescales a double-precision tolerance to this precision.
    #[inline]
    fn tol(x: f64) -> Self {
        let exponent = Self::UNIT_ROUNDOFF.ln() / f64::EPSILON.ln();
        Self::lit(x.powf(exponent))
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const UNIT_ROUNDOFF: f64 = f64::EPSILON;
}

impl Real for f32 {
    const UNIT_ROUNDOFF: f64 = f32::EPSILON as f64;
}
