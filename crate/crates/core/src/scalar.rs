//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the whole crate is generic over (`f32` or `f64`).
///
/// Transcendental functions (`exp`, `sqrt`, ...) come from [`RealField`];
/// literal constants go through [`Real::of`].
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant")
    }

    /// Lossy widening used for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the concrete type.
    fn epsilon() -> Self;
}

impl Real for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

/// `π²/4`, the weight of the sampled-input Wirtinger bound.
///
/// Kept under its own name so it cannot be mixed up with the per-node
/// dissipativity rates `pi_i`.
pub fn wirtinger_coeff<T: Real>() -> T {
    let pi = T::pi();
    pi * pi / T::of(4.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wirtinger_coeff_value() {
        let c: f64 = wirtinger_coeff();
        assert!((c - std::f64::consts::PI.powi(2) / 4.0).abs() < 1e-15);
        let c32: f32 = wirtinger_coeff();
        assert!((c32 - 2.467_401).abs() < 1e-6);
    }
}
