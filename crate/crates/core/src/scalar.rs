//! Scalar abstraction shared by the numerical core.
//!
//! Everything that evaluates the model, its losses and derivatives, or runs the
//! block coordinate descent is generic over [`Real`]. Monte-Carlo drivers and the
//! simulators produce `f64` and convert at the boundary.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the estimators (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal. Infallible for the float types we implement.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts back to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float converts to f64")
    }

    /// Converts a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    /// Unit roundoff of the type.
    fn epsilon() -> Self;

    fn is_finite_value(self) -> bool;
}

impl Real for f64 {
    fn epsilon() -> Self {
        f64::EPSILON
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl Real for f32 {
    fn epsilon() -> Self {
        f32::EPSILON
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}
