use std::fmt;

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real scalar the estimators are generic over.
///
/// Implemented for `f32` and `f64`. Literal constants go through [`Scalar::lit`]
/// so numeric code reads the same for both widths.
pub trait Scalar: RealField + Copy + ToPrimitive + fmt::Display + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
