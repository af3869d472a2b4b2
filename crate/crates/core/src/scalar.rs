//! Scalar abstraction: the whole numeric core is generic over f32/f64.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the tensor core is parameterized over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64 (exact for f64 itself).
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 -> Scalar conversion")
    }

    /// Widening conversion to f64.
    fn into_f64(self) -> f64 {
        self.to_f64().expect("Scalar -> f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
