//! Dense model/gradient vectors with dimension-checked arithmetic.
//!
//! Reductions accumulate left to right in index order so that repeated runs
//! produce bit-identical results.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelVector<T: Real> {
    values: Vec<T>,
}

impl<T: Real> ModelVector<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![T::zero(); dim] }
    }

    pub fn filled(dim: usize, value: T) -> Self {
        Self { values: vec![value; dim] }
    }

    pub fn from_values(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + *b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| *a - *b).collect(),
        })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { values: self.values.iter().map(|v| *v * factor).collect() }
    }

    pub fn scale_assign(&mut self, factor: T) {
        for v in &mut self.values {
            *v = *v * factor;
        }
    }

    /// Divide every entry by `divisor` (a single correctly rounded division
    /// per entry, used where `self / n` must match other code paths bit for
    /// bit).
    pub fn div_assign(&mut self, divisor: T) {
        for v in &mut self.values {
            *v = *v / divisor;
        }
    }

    pub fn divided(&self, divisor: T) -> Self {
        let mut out = self.clone();
        out.div_assign(divisor);
        out
    }

    /// `self += coefficient * other`.
    pub fn axpy_assign(&mut self, coefficient: T, other: &Self) -> Result<()> {
        self.check_dim(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + coefficient * *b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        let mut acc = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc = acc + *a * *b;
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> T {
        let mut acc = T::zero();
        for v in &self.values {
            acc = acc + *v * *v;
        }
        acc
    }

    pub fn distance_sq(&self, other: &Self) -> Result<T> {
        self.check_dim(other)?;
        let mut acc = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            let d = *a - *b;
            acc = acc + d * d;
        }
        Ok(acc)
    }
}
