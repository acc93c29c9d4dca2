//! Scalar abstraction for the numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

///// Floating-point scalar: f32 or f64.
///
/// The geometry and linear-algebra layers are generic over this trait; the
/// tolerances quoted throughout the crate assume `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumCast
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion from an `f64` constant.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant conversion")
    }

    /// Lossy conversion to `f64` for reporting and error payloads.
    fn to_f64_lossy(self) -> f64 {
        num_traits::NumCast::from(self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
