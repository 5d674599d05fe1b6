//! Modified Bessel function `K_α` and the profile function `E`.

use crate::error::{Error, Result};
use crate::scalar::{r, Real};

/// Trapezoid rule on `[a, b]` with step halving until two successive levels
/// agree to `rel_tol`; returns the finest value.
fn trapezoid<T: Real, F: Fn(T) -> T>(g: F, a: T, b: T, h0: T, rel_tol: T) -> T {
    let mut n = ((b - a) / h0).ceil().to_usize().unwrap_or(1).max(2);
    let mut h = (b - a) / crate::scalar::ru::<T>(n);
    let mut sum = (g(a) + g(b)) / r(2.0);
    for i in 1..n {
        sum += g(a + h * crate::scalar::ru::<T>(i));
    }
    let mut prev = sum * h;
    for _ in 0..12 {
        let mut mid = T::zero();
        for i in 0..n {
            mid += g(a + h * (crate::scalar::ru::<T>(i) + r(0.5)));
        }
        sum += mid;
        n *= 2;
        h /= r(2.0);
        let cur = sum * h;
        if (cur - prev).abs() <= rel_tol * cur.abs() {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// `K_α(x) = ½∫₀^∞ t^{-(α+1)} e^{-x(t + 1/t)/2} dt`, evaluated after the
/// substitution `t = e^s` as `∫_{-40}^{40} ½ e^{-αs} e^{-x cosh s} ds`.
pub fn bessel_k<T: Real>(alpha: T, x: T) -> Result<T> {
    if !(x > T::zero()) {
        return Err(Error::DomainError(format!("bessel_k needs x > 0, got {}", crate::scalar::f(x))));
    }
    let lim = r::<T>(40.0);
    let g = |s: T| -> T {
        let e = -alpha * s - x * s.cosh();
        if e < r(-745.0) {
            T::zero()
        } else {
            e.exp() / r(2.0)
        }
    };
    Ok(trapezoid(g, -lim, lim, r(0.05), r(1e-13)))
}

/// `Γ(n/2)` for a positive integer `n`, by the half-integer recursion.
pub fn gamma_half<T: Real>(n: usize) -> T {
    assert!(n > 0, "gamma_half needs a positive argument");
    let mut g = if n % 2 == 0 { T::one() } else { T::pi().sqrt() };
    let mut k = if n % 2 == 0 { 2 } else { 1 };
    while k < n {
        g *= crate::scalar::ru::<T>(k) / r(2.0);
        k += 2;
    }
    g
}

/// `E(x) = Γ((rank-1)/2)⁻¹ ∫₀^∞ e^{-t} (t + t²/(2x))^{(rank-3)/2} dt`.
///
/// For rank 3 the integrand is `e^{-t}` and the value is exactly one. For the
/// other ranks the substitution `t = e^s` removes the endpoint singularity.
pub fn profile_e<T: Real>(rank: usize, x: T) -> Result<T> {
    if rank < 2 {
        return Err(Error::DomainError(format!("profile_E needs rank >= 2, got {rank}")));
    }
    if !(x > T::zero()) {
        return Err(Error::DomainError(format!("profile_E needs x > 0, got {}", crate::scalar::f(x))));
    }
    if rank == 3 {
        return Ok(T::one());
    }
    let beta = (r::<T>(rank as f64) - r(3.0)) / r(2.0);
    let two_x = r::<T>(2.0) * x;
    let g = |s: T| -> T {
        let t = s.exp();
        let e = -t + s + beta * (s + (T::one() + t / two_x).ln());
        if e < r(-745.0) {
            T::zero()
        } else {
            e.exp()
        }
    };
    let lo = r::<T>(-80.0) / (beta + T::one());
    let hi = r::<T>(4.5) + (r::<T>(1.0) + beta.abs() * (T::one() + (T::one() / x).ln().max(T::zero()))).ln();
    let val = trapezoid(g, lo, hi, r(0.02), r(1e-13));
    Ok(val / gamma_half::<T>(rank - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_order_closed_form() {
        let v = bessel_k(0.5_f64, 1.0).unwrap();
        let exact = (std::f64::consts::PI / 2.0).sqrt() * (-1f64).exp();
        assert!(((v - exact) / exact).abs() < 1e-12);
        assert!((v - 0.461068504).abs() < 1e-9);
    }

    #[test]
    fn order_symmetry() {
        let a = bessel_k(0.3_f64, 2.0).unwrap();
        let b = bessel_k(-0.3_f64, 2.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gamma_half_values() {
        let pi = std::f64::consts::PI;
        assert!((gamma_half::<f64>(1) - pi.sqrt()).abs() < 1e-15);
        assert!((gamma_half::<f64>(2) - 1.0).abs() < 1e-15);
        assert!((gamma_half::<f64>(3) - pi.sqrt() / 2.0).abs() < 1e-15);
        assert!((gamma_half::<f64>(4) - 1.0).abs() < 1e-15);
        assert!((gamma_half::<f64>(7) - 15.0 * pi.sqrt() / 8.0).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(bessel_k(1.0_f64, 0.0).is_err());
        assert!(profile_e(2, -1.0_f64).is_err());
        assert!(profile_e(1, 1.0_f64).is_err());
    }
}
