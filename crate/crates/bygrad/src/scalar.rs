//! Scalar abstraction: the numeric kernels are generic over the floating
//! point type, with `f64` aliases exported at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the numeric kernels: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Convert a finite `f64` constant into the working scalar type.
///
/// Panics if the value is not representable; constants used through this
/// helper are small literals and counts, which always are.
pub fn real<T: Real>(value: f64) -> T {
    T::from_f64(value).expect("constant representable in scalar type")
}

/// Convert a count into the working scalar type.
pub fn real_of<T: Real>(count: usize) -> T {
    T::from_usize(count).expect("count representable in scalar type")
}

/// Neumaier-compensated accumulator, used by the enumeration and
/// Monte Carlo moment calculators where plain summation would lose the
/// tolerances the identities are checked at.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated<T: Real> {
    sum: T,
    correction: T,
}

impl<T: Real> Compensated<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), correction: T::zero() }
    }

    pub fn add(&mut self, value: T) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.correction = self.correction + ((self.sum - t) + value);
        } else {
            self.correction = self.correction + ((value - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.correction
    }
}
