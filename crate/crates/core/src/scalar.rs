use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the numeric modules are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or statistic.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    /// Widen to `f64` for reporting and serialization.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar widens to f64")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

const GELU_C: f64 = 0.044_715;

/// tanh-approximated GELU.
#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (k * (x + T::of(GELU_C) * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    let t = (k * (x + T::of(GELU_C) * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0 * GELU_C) * x * x)
}
