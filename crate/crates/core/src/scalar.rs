//! Scalar abstraction for the numeric kernels.

use std::fmt;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the transform, conformal, and metric kernels are
/// generic over.
///
/// `f64` is what the pipeline and the file formats use; `f32` is supported so
/// the kernels can run directly on single-precision scores without a copy.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + fmt::Debug + fmt::Display + Default + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}
