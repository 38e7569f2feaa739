//! Floating-point scalar abstraction shared by the analytical modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the roofline, intensity and ranking math is generic over.
///
/// Implemented for `f32` and `f64`. Counts (FLOPs, bytes) are always carried as
/// exact `u64` and only converted at the point where a ratio is formed.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Converts an exact count. Values above 2^53 (f64) lose precision the usual way.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("u64 is always representable as a float")
    }

    /// Converts an `f64` literal or measured value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is always convertible to a float scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float scalars convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
