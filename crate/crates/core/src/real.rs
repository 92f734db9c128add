//! Scalar abstraction: numeric kernels are generic over the float type,
//! with `f32` and `f64` as the supported instantiations.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar for the numeric kernels.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Conversion from `f64`, for feeding `f64`-typed configuration values
    /// into generic kernels. Rounds when `Self` is narrower.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from(v).expect("finite f64 converts to any Real")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}
