//! Scalar abstraction shared by the kernel engine.
//!
//! The engine is written once against [`Real`] and instantiated for `f32` and
//! `f64`. The brute-force ANOVA oracle only needs field arithmetic and is
//! generic over [`num_traits::Num`] instead, so it also runs on exact
//! rationals.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point type the engine can run on.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Lossless for f32/f64 literals used in the engine.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        // RealField -> f64 never fails for the implemented types.
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn is_finite_real(self) -> bool {
        self.as_f64().is_finite()
    }

    /// Total order consistent with `f64::total_cmp`.
    #[inline]
    fn total_cmp_real(&self, other: &Self) -> std::cmp::Ordering {
        self.as_f64().total_cmp(&other.as_f64())
    }

    fn machine_epsilon() -> Self;
}

impl Real for f32 {
    fn machine_epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn machine_epsilon() -> Self {
        f64::EPSILON
    }
}
