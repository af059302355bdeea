//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use rustfft::FftNum;

/// Floating point scalar: `f32` or `f64`.
///
/// All physics and image routines are written against this trait. The
/// configuration layer and the I/O formats are `f64`, converted at the
/// boundary with [`Real::lit`] and [`Real::as_f64`].
pub trait Real:
    Float + FloatConst + FromPrimitive + FftNum + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal or configuration value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Unnormalised cardinal sine, `sin(x)/x` with the removable singularity filled.
#[inline]
pub fn sinc<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        // Taylor to fourth order; exact to machine precision in this range.
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}
