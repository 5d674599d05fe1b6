//! Second-order expansion of the leading eigenvalue `κ(v)` of `L_{v,1}` at
//! zero frequency, the implicit pressure function `P`, the curvature `𝔠` and
//! the rate function `I`.
//!
//! Frequencies are in ψ-adapted coordinates, so `𝗏 = e₀` and `ker ψ` is
//! spanned by the remaining coordinates.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holonomy::CharacterLabel;
use crate::model::Model;
use crate::scalar::{cabs, f, r, C, Real};
use crate::special::profile_e;
use crate::thermo::pressure_of;
use crate::transfer::{eigenvalue_near, lattice_diagnostic, sweep_grid, OperatorFamily};

/// Default finite-difference steps.
pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Largest tolerated disagreement between extrapolation levels.
pub const NOISE_FLOOR: f64 = 1e-4;

/// Derivatives of `κ` at zero, the induced inner products and `𝔠`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpectralExpansion<T: Real> {
    /// Rank.
    pub rank: usize,
    /// `Dκ(0)`.
    pub dkappa: Vec<C<T>>,
    /// `D²κ(0)`, symmetrized real part.
    pub d2kappa: Vec<Vec<T>>,
    /// `⟨·,·⟩_* = -½ D²κ(0)`.
    pub star_inner: Vec<Vec<T>>,
    /// `D²P(0)` on `ker ψ` from the implicit pressure function.
    pub p_hessian: Vec<Vec<T>>,
    /// `𝔠 = det D²P(0)`.
    pub curvature_c: T,
    /// `det(-D²κ(0)|_{ker ψ}) / ν(τ)^{rank-1}`.
    pub curvature_c_kappa: T,
    /// `ν(τ)`.
    pub nu_tau: T,
    /// Invariant checks.
    pub checks: ExpansionChecks<T>,
}

/// Residuals of the expansion invariants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ExpansionChecks<T: Real> {
    /// `max |Re Dκ(0)|`.
    pub re_dkappa: T,
    /// Relative error of `Im Dκ(0)` against `ν(τ) e₀`.
    pub dkappa_rel_err: T,
    /// Largest imaginary part of the second differences.
    pub d2_imag: T,
    /// Largest eigenvalue of `D²κ(0)`.
    pub d2_max_eigenvalue: T,
    /// Relative gap between the two curvature routes.
    pub curvature_rel_gap: T,
    /// `max |DP(0)|`.
    pub dp_zero: T,
    /// Largest Richardson level disagreement.
    pub richardson_spread: T,
}

/// Polynomial extrapolation in `h²` to `h = 0` (Neville), with the
/// disagreement between the last two levels.
pub fn richardson<T: Real>(hs: &[T], ys: &[C<T>]) -> (C<T>, T) {
    let n = hs.len();
    let x: Vec<T> = hs.iter().map(|&h| h * h).collect();
    let mut p = ys.to_vec();
    let mut below = p[n - 1];
    for m in 1..n {
        if m == n - 1 {
            below = p[1];
        }
        for i in 0..n - m {
            p[i] = (p[i + 1] * x[i] - p[i] * x[i + m]) / (x[i] - x[i + m]);
        }
    }
    let spread = if n > 1 { cabs(p[0] - below) } else { T::zero() };
    (p[0], spread)
}

fn unit<T: Real>(rank: usize, i: usize, h: T) -> Vec<C<T>> {
    (0..rank).map(|d| C::new(if d == i { h } else { T::zero() }, T::zero())).collect()
}

fn add<T: Real>(a: &[C<T>], b: &[C<T>]) -> Vec<C<T>> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

/// `κ(v)` on the branch through `κ(0) = 1`.
pub fn kappa_at<T: Real>(fam: &OperatorFamily<T>, triv: &CharacterLabel, v: &[C<T>]) -> C<T> {
    eigenvalue_near(fam, v, triv, C::new(T::one(), T::zero()))
}

/// Finite-difference expansion with Richardson extrapolation over `steps`.
pub fn expand_kappa<T: Real>(model: &Model<T>, steps: &[T]) -> Result<SpectralExpansion<T>> {
    let rank = model.rank();
    let triv = CharacterLabel::trivial(model.holonomy.group);
    let lat = lattice_diagnostic(model, &sweep_grid(rank, r(6.0), r(1.0)), &[]);
    if lat.lattice {
        return Err(Error::LatticeModel(lat.flagged[0].iter().map(|&x| f(x)).collect()));
    }
    let fam = OperatorFamily::new(model, T::zero());
    let zero = vec![C::new(T::zero(), T::zero()); rank];
    let k0 = kappa_at(&fam, &triv, &zero);

    // Points per step: ±h e_i, and ±h e_i ± h e_j for i < j.
    let mut pts: Vec<Vec<C<T>>> = Vec::new();
    for &h in steps {
        for i in 0..rank {
            pts.push(unit(rank, i, h));
            pts.push(unit(rank, i, -h));
            for j in i + 1..rank {
                for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                    pts.push(add(&unit(rank, i, si), &unit(rank, j, sj)));
                }
            }
        }
    }
    let vals: Vec<C<T>> = pts.par_iter().map(|v| kappa_at(&fam, &triv, v)).collect();
    let per_step = vals.len() / steps.len();
    let mut d1 = vec![vec![C::new(T::zero(), T::zero()); steps.len()]; rank];
    let mut d2 = vec![vec![vec![C::new(T::zero(), T::zero()); steps.len()]; rank]; rank];
    for (s, &h) in steps.iter().enumerate() {
        let mut it = vals[s * per_step..(s + 1) * per_step].iter();
        for i in 0..rank {
            let p = *it.next().unwrap();
            let m = *it.next().unwrap();
            d1[i][s] = (p - m) / (r::<T>(2.0) * h);
            d2[i][i][s] = (p - k0 * r::<T>(2.0) + m) / (h * h);
            for j in i + 1..rank {
                let pp = *it.next().unwrap();
                let pm = *it.next().unwrap();
                let mp = *it.next().unwrap();
                let mm = *it.next().unwrap();
                let v = (pp - pm - mp + mm) / (r::<T>(4.0) * h * h);
                d2[i][j][s] = v;
                d2[j][i][s] = v;
            }
        }
    }
    let mut spread = T::zero();
    let mut dkappa = Vec::with_capacity(rank);
    for row in &d1 {
        let (v, e) = richardson(steps, row);
        spread = spread.max(e / cabs(v).max(T::one()));
        dkappa.push(v);
    }
    let mut d2kappa = vec![vec![T::zero(); rank]; rank];
    let mut d2_imag = T::zero();
    for i in 0..rank {
        for j in 0..rank {
            let (v, e) = richardson(steps, &d2[i][j]);
            spread = spread.max(e / cabs(v).max(T::one()));
            d2kappa[i][j] = v.re;
            d2_imag = d2_imag.max(v.im.abs());
        }
    }
    if spread > r(NOISE_FLOOR) {
        return Err(Error::NoiseFloor(f(spread)));
    }
    let star_inner: Vec<Vec<T>> = d2kappa.iter().map(|row| row.iter().map(|&x| -x / r(2.0)).collect()).collect();
    let nu_tau = model.nu_tau;

    let re_dkappa = dkappa.iter().fold(T::zero(), |a, z| a.max(z.re.abs()));
    let dkappa_rel_err = dkappa
        .iter()
        .enumerate()
        .fold(T::zero(), |a, (i, z)| a.max((z.im - if i == 0 { nu_tau } else { T::zero() }).abs()))
        / nu_tau;
    let dm = DMatrix::from_fn(rank, rank, |i, j| d2kappa[i][j]);
    let d2_max_eigenvalue = dm.symmetric_eigenvalues().iter().fold(-T::MAX, |a, &b| a.max(b));

    let (p_hessian, dp_zero) = pressure_hessian(model, steps)?;
    let curvature_c = if rank == 1 {
        T::one()
    } else {
        DMatrix::from_fn(rank - 1, rank - 1, |i, j| p_hessian[i][j]).determinant()
    };
    let curvature_c_kappa = if rank == 1 {
        T::one()
    } else {
        let sub = DMatrix::from_fn(rank - 1, rank - 1, |i, j| -d2kappa[i + 1][j + 1]);
        sub.determinant() / nu_tau.powi(rank as i32 - 1)
    };
    let curvature_rel_gap = (curvature_c - curvature_c_kappa).abs() / curvature_c.abs();
    Ok(SpectralExpansion {
        rank,
        dkappa,
        d2kappa,
        star_inner,
        p_hessian,
        curvature_c,
        curvature_c_kappa,
        nu_tau,
        checks: ExpansionChecks {
            re_dkappa,
            dkappa_rel_err,
            d2_imag,
            d2_max_eigenvalue,
            curvature_rel_gap,
            dp_zero,
            richardson_spread: spread,
        },
    })
}

/// The unique `t` with `Pr(-t τ + ⟨v, K̂⟩) = 0`, for `v` in `ker ψ` given in
/// the kernel basis.
pub fn implicit_pressure_p<T: Real>(model: &Model<T>, v: &[T]) -> Result<T> {
    if v.len() + 1 != model.rank() {
        return Err(Error::DimensionMismatch { expected: model.rank() - 1, found: v.len() });
    }
    let kc = model.cocycle.k_coords_table();
    let shift: Vec<T> = kc
        .iter()
        .map(|k| v.iter().zip(&k[1..]).fold(T::zero(), |a, (&x, &y)| a + x * y))
        .collect();
    let pr = |t: T| -> Result<T> {
        let pot: Vec<T> = model.cocycle.tau.iter().zip(&shift).map(|(&ta, &s)| -t * ta + s).collect();
        pressure_of(&model.space, &pot)
    };
    let mut lo = r::<T>(0.5);
    let mut hi = r::<T>(2.0);
    let mut tries = 0;
    while pr(lo)? <= T::zero() {
        lo /= r(2.0);
        tries += 1;
        if tries > 60 {
            return Err(Error::RootBracketFailure("pressure stays non-positive".into()));
        }
    }
    while pr(hi)? >= T::zero() {
        hi *= r(2.0);
        tries += 1;
        if tries > 60 {
            return Err(Error::RootBracketFailure("pressure stays non-negative".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / r(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if pr(mid)? > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / r(2.0))
}

/// `D²P(0)` and `max |DP(0)|` by Richardson-extrapolated differences.
pub fn pressure_hessian<T: Real>(model: &Model<T>, steps: &[T]) -> Result<(Vec<Vec<T>>, T)> {
    let n = model.rank() - 1;
    if n == 0 {
        return Ok((vec![], T::zero()));
    }
    let p0 = implicit_pressure_p(model, &vec![T::zero(); n])?;
    let e = |i: usize, h: T| -> Vec<T> { (0..n).map(|d| if d == i { h } else { T::zero() }).collect() };
    let sum = |a: Vec<T>, b: Vec<T>| -> Vec<T> { a.iter().zip(&b).map(|(x, y)| *x + *y).collect() };
    let mut hess = vec![vec![T::zero(); n]; n];
    let mut dp = T::zero();
    for i in 0..n {
        for j in i..n {
            let mut second = Vec::new();
            let mut first = Vec::new();
            for &h in steps {
                let v = if i == j {
                    let p = implicit_pressure_p(model, &e(i, h))?;
                    let m = implicit_pressure_p(model, &e(i, -h))?;
                    first.push(C::new((p - m) / (r::<T>(2.0) * h), T::zero()));
                    (p - p0 * r::<T>(2.0) + m) / (h * h)
                } else {
                    let pp = implicit_pressure_p(model, &sum(e(i, h), e(j, h)))?;
                    let pm = implicit_pressure_p(model, &sum(e(i, h), e(j, -h)))?;
                    let mp = implicit_pressure_p(model, &sum(e(i, -h), e(j, h)))?;
                    let mm = implicit_pressure_p(model, &sum(e(i, -h), e(j, -h)))?;
                    (pp - pm - mp + mm) / (r::<T>(4.0) * h * h)
                };
                second.push(C::new(v, T::zero()));
            }
            let (v, _) = richardson(steps, &second);
            hess[i][j] = v.re;
            hess[j][i] = v.re;
            if i == j {
                dp = dp.max(richardson(steps, &first).0.re.abs());
            }
        }
    }
    Ok((hess, dp))
}

impl<T: Real> SpectralExpansion<T> {
    /// Position-space inner product `(ν(τ)/2) (-D²κ(0))⁻¹`, for which the
    /// Schur complement along `𝗏` restricted to `ker ψ` is `½ (D²P(0))⁻¹`.
    pub fn dual_inner(&self) -> Result<DMatrix<T>> {
        let n = self.rank;
        let m = DMatrix::from_fn(n, n, |i, j| -self.d2kappa[i][j]);
        let inv = m.try_inverse().ok_or(Error::NoConvergence("singular Hessian".into()))?;
        Ok(inv * (self.nu_tau / r(2.0)))
    }

    /// `⟨a, b⟩` for a symmetric matrix.
    fn form(m: &DMatrix<T>, a: &[T], b: &[T]) -> T {
        let mut s = T::zero();
        for i in 0..a.len() {
            for j in 0..b.len() {
                s += a[i] * m[(i, j)] * b[j];
            }
        }
        s
    }
}

/// `I(𝗎) = ⟨𝗎,𝗎⟩ - ⟨𝗎,𝗏⟩²/⟨𝗏,𝗏⟩` for the position-space form
/// [`SpectralExpansion::dual_inner`]; equals `½ 𝗎ᵀ (D²P(0))⁻¹ 𝗎`. `u` is in
/// ψ-adapted coordinates.
pub fn rate_function_i<T: Real>(exp: &SpectralExpansion<T>, u: &[T]) -> Result<T> {
    check_kernel(exp, u)?;
    let b = exp.dual_inner()?;
    Ok(schur_form(&b, u))
}

/// The same Schur form evaluated with `⟨·,·⟩_* = -½ D²κ(0)` itself.
pub fn rate_function_star<T: Real>(exp: &SpectralExpansion<T>, u: &[T]) -> Result<T> {
    check_kernel(exp, u)?;
    let n = exp.rank;
    let b = DMatrix::from_fn(n, n, |i, j| exp.star_inner[i][j]);
    Ok(schur_form(&b, u))
}

fn check_kernel<T: Real>(exp: &SpectralExpansion<T>, u: &[T]) -> Result<()> {
    if u.len() != exp.rank {
        return Err(Error::DimensionMismatch { expected: exp.rank, found: u.len() });
    }
    if u[0].abs() > r(1e-10) {
        return Err(Error::NotInKernel(f(u[0])));
    }
    Ok(())
}

fn schur_form<T: Real>(b: &DMatrix<T>, u: &[T]) -> T {
    let n = u.len();
    let e0: Vec<T> = (0..n).map(|i| if i == 0 { T::one() } else { T::zero() }).collect();
    let uu = SpectralExpansion::form(b, u, u);
    let uv = SpectralExpansion::form(b, u, &e0);
    let vv = b[(0, 0)];
    (uu - uv * uv / vv).max(T::zero())
}

/// `f_t(v)`: the exponential-ratio profile with the `E` factor, built on the
/// position-space form. `u` and `v` are in ψ-adapted coordinates; `r_t` is
/// `r(t)`.
pub fn profile_ft<T: Real>(exp: &SpectralExpansion<T>, u: &[T], r_t: T, t: T, v: &[T]) -> Result<T> {
    let n = exp.rank;
    if u.len() != n || v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u.len().min(v.len()) });
    }
    let b = exp.dual_inner()?;
    let base: Vec<T> = (0..n)
        .map(|i| if i == 0 { t } else { T::zero() } + r_t * u[i])
        .collect();
    let full: Vec<T> = base.iter().zip(v).map(|(a, b)| *a + *b).collect();
    let nf = SpectralExpansion::form(&b, &full, &full).sqrt();
    let nb = SpectralExpansion::form(&b, &base, &base).sqrt();
    if !(nf > T::zero()) || !(nb > T::zero()) {
        return Err(Error::DomainError("t𝗏 + r(t)𝗎 + v vanishes".into()));
    }
    let nv = b[(0, 0)].sqrt();
    let e0: Vec<T> = (0..n).map(|i| if i == 0 { T::one() } else { T::zero() }).collect();
    let inner = SpectralExpansion::form(&b, &full, &e0);
    let x = r::<T>(2.0) * nf * nv;
    let ex = if n >= 2 { profile_e(n, x)? } else { T::one() };
    let expo = r::<T>(2.0) * (inner - nf * nv);
    let ratio = (nb / nf).powf(r::<T>((n as f64 - 1.0) / 2.0));
    Ok(expo.exp() * ex * ratio)
}

/// `|κ(2δd) - q(2δd)| / |κ(δd) - q(δd)|` for the quadratic model `q`; close
/// to 8 when the remainder is cubic.
pub fn cubic_ratio<T: Real>(model: &Model<T>, exp: &SpectralExpansion<T>, dir: &[T], delta: T) -> T {
    let fam = OperatorFamily::new(model, T::zero());
    let triv = CharacterLabel::trivial(model.holonomy.group);
    let rem = |s: T| -> T {
        let v: Vec<C<T>> = dir.iter().map(|&d| C::new(s * d, T::zero())).collect();
        let k = kappa_at(&fam, &triv, &v);
        let mut q = C::new(T::one(), T::zero());
        for i in 0..exp.rank {
            q += exp.dkappa[i] * v[i];
            for j in 0..exp.rank {
                q += v[i] * v[j] * exp.d2kappa[i][j] / r::<T>(2.0);
            }
        }
        cabs(k - q)
    };
    rem(r::<T>(2.0) * delta) / rem(delta)
}
