//! Generic floating-point scalar and the small complex helpers built on it.

use nalgebra as na;
use num_complex::Complex;
use num_traits as nt;

/// Floating-point scalar used by every numerical routine in the crate.
pub trait Real:
    Copy
    + Default
    + na::RealField
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon.
    const EPSILON: Self;
    /// Largest finite value.
    const MAX: Self;
}

macro_rules! impl_real {
    ($f:ty) => {
        impl Real for $f {
            const EPSILON: Self = <$f>::EPSILON;
            const MAX: Self = <$f>::MAX;
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Complex numbers over the working scalar.
pub type C<T> = Complex<T>;

/// Converts an `f64` constant into the working scalar.
#[inline]
pub fn r<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in the working scalar")
}

/// Converts a working scalar into `f64`.
#[inline]
pub fn f<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Converts an index or count into the working scalar.
#[inline]
pub fn ru<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in the working scalar")
}

/// `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> C<T> {
    C::new(theta.cos(), theta.sin())
}

/// Complex exponential.
#[inline]
pub fn cexp<T: Real>(z: C<T>) -> C<T> {
    let m = z.re.exp();
    C::new(m * z.im.cos(), m * z.im.sin())
}

/// Complex modulus.
#[inline]
pub fn cabs<T: Real>(z: C<T>) -> T {
    z.re.hypot(z.im)
}

/// Complex argument in `(-π, π]`.
#[inline]
pub fn carg<T: Real>(z: C<T>) -> T {
    z.im.atan2(z.re)
}

/// Neumaier-compensated running sum, so reductions are insensitive to term order
/// up to a few ulps of the result.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T: Real> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    /// Adds one term.
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

    /// Current value.
    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

/// Compensated sum of complex terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedComplexSum<T: Real> {
    re: CompensatedSum<T>,
    im: CompensatedSum<T>,
}

impl<T: Real> CompensatedComplexSum<T> {
    /// Adds one term.
    #[inline]
    pub fn add(&mut self, z: C<T>) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    /// Current value.
    #[inline]
    pub fn value(&self) -> C<T> {
        C::new(self.re.value(), self.im.value())
    }
}

/// Compensated sum of an iterator of scalars.
pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(it: I) -> T {
    let mut s = CompensatedSum::default();
    for x in it {
        s.add(x);
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = compensated_sum([1.0e16, 1.0, -1.0e16, 1.0]);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn complex_helpers_agree_with_num_complex() {
        let z = C::new(0.3_f64, -1.2);
        let e = cexp(z);
        let reference = z.exp();
        assert!((e - reference).norm() < 1e-15);
        assert!((cabs(z) - z.norm()).abs() < 1e-15);
        assert!((carg(z) - z.arg()).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let z: C<f32> = cis(r(0.5));
        assert!((cabs(z) - 1.0).abs() < 1e-6);
    }
}
