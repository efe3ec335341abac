//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type the polymer dynamics is generic over (`f32` or `f64`).
///
/// Random sources (potential points, Wiener increments) are generated in `f64`
/// and converted with [`Scalar::lit`], so changing the scalar type changes the
/// arithmetic precision but not the realisation of the environment.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal or random draw into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    /// Converts a coordinate index into this type.
    #[inline]
    fn index(k: usize) -> Self {
        Self::from_usize(k).expect("index is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
