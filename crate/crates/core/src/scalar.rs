//! Scalar abstraction: the math core works over any IEEE float.

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar used by tensors, scores and metrics.
///
/// `f32` matches the on-disk format; `f64` is handy for oracle-grade
/// comparisons in tests.
pub trait Real: Float + FromPrimitive + NumCast + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 -> Real conversion")
    }
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).expect("Real -> f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
