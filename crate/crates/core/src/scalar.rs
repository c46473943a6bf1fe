use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point element type for embedding math: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from a wire-format `f64`.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
