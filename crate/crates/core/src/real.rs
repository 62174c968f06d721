//! Scalar abstraction shared by every numerical module.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating point scalar the numerical core is generic over (`f32`, `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn four_pi() -> Self {
        Self::lit(4.0) * Self::PI()
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Sum
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Debug
        + Display
        + LowerExp
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Point in R³.
pub type Point3<T> = [T; 3];

#[inline]
pub fn sub3<T: Real>(a: &Point3<T>, b: &Point3<T>) -> Point3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3<T: Real>(a: &Point3<T>, b: &Point3<T>) -> Point3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3<T: Real>(a: &Point3<T>, s: T) -> Point3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn norm3<T: Real>(a: &Point3<T>) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
pub fn dist3<T: Real>(a: &Point3<T>, b: &Point3<T>) -> T {
    norm3(&sub3(a, b))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(iter: I) -> T {
    let mut acc = CompensatedSum::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1.0e16_f64];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1.0e16);
        assert_eq!(compensated_sum(v.iter().copied()), 1000.0);
    }

    #[test]
    fn geometry_helpers() {
        let a = [1.0_f32, 2.0, 2.0];
        assert_eq!(norm3(&a), 3.0);
        assert_eq!(dist3(&a, &[1.0, 2.0, 0.0]), 2.0);
        assert_eq!(add3(&a, &scale3(&a, -1.0)), [0.0; 3]);
    }
}
