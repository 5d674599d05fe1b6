//! Pressure, RPF eigendata, Gibbs cylinder weights and suspension masses.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cocycle::CocycleData;
use crate::error::{Error, Result};
use crate::holonomy::CharacterLabel;
use crate::linalg::perron;
use crate::scalar::{r, C, Real};
use crate::sft::WindowSpace;

/// Spectral gap threshold certifying a simple maximal eigenvalue.
pub const GAP_THRESHOLD: f64 = 1e-6;

/// Unnormalized weighted operator on depth-`k` functions:
/// `M[i, j] = e^{pot_j}` when window `j` is a shift-preimage window of `i`.
pub fn weighted_matrix<T: Real>(space: &WindowSpace, pot: &[T]) -> DMatrix<T> {
    let n = space.dim();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in &space.preds[i] {
            m[(i, j)] = pot[j].exp();
        }
    }
    m
}

/// `Pr(f)` for a depth-`k` potential, as the log of the Perron root of the
/// weighted operator.
pub fn pressure_of<T: Real>(space: &WindowSpace, pot: &[T]) -> Result<T> {
    if pot.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: pot.len() });
    }
    Ok(perron(&weighted_matrix(space, pot))?.rho.ln())
}

/// RPF data of `L_{-(1+a)τ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RpfData<T: Real> {
    /// Pressure parameter `a`.
    pub a: T,
    /// Maximal eigenvalue `κ_a = e^{Pr(-(1+a)τ)}`.
    pub kappa_a: T,
    /// Positive eigenfunction, normalized by `ν(h) = 1`.
    pub h: Vec<T>,
    /// Eigenmeasure as cylinder probabilities of the windows.
    pub nu: Vec<T>,
    /// `log κ_a`.
    pub pressure: T,
    /// Equilibrium cylinder masses `ν(w) h(w)` of the windows.
    pub gibbs: Vec<T>,
    /// Modulus of the second eigenvalue.
    pub second: T,
}

/// Solves the RPF problem for `L_{-(1+a)τ}` on the model's window space.
pub fn rpf_solve<T: Real>(space: &WindowSpace, cocycle: &CocycleData<T>, a: T) -> Result<RpfData<T>> {
    if cocycle.depth > space.depth {
        return Err(Error::DepthMismatch { requested: space.depth, cocycle: cocycle.depth });
    }
    let pot: Vec<T> = cocycle.tau.iter().map(|&t| -(T::one() + a) * t).collect();
    let p = perron(&weighted_matrix(space, &pot))?;
    let gap = (p.rho - p.second) / p.rho;
    if gap < r(GAP_THRESHOLD) {
        return Err(Error::GapTooSmall { gap: crate::scalar::f(gap), threshold: GAP_THRESHOLD });
    }
    let nu: Vec<T> = p.left.iter().copied().collect();
    let nh = nu.iter().zip(p.right.iter()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    let h: Vec<T> = p.right.iter().map(|&x| x / nh).collect();
    let gibbs: Vec<T> = nu.iter().zip(&h).map(|(&x, &y)| x * y).collect();
    Ok(RpfData { a, kappa_a: p.rho, h, nu, pressure: p.rho.ln(), gibbs, second: p.second })
}

/// Residuals of the eigen-equations `L h = κ h` and `ν L = κ ν`, relative to
/// the vectors' sup norms.
pub fn rpf_residuals<T: Real>(space: &WindowSpace, cocycle: &CocycleData<T>, rpf: &RpfData<T>) -> (T, T) {
    let pot: Vec<T> = cocycle.tau.iter().map(|&t| -(T::one() + rpf.a) * t).collect();
    let m = weighted_matrix(space, &pot);
    let h = DVector::from_vec(rpf.h.clone());
    let nu = DVector::from_vec(rpf.nu.clone());
    let rh = (&m * &h - &h * rpf.kappa_a).amax() / h.amax();
    let rn = (m.transpose() * &nu - &nu * rpf.kappa_a).amax() / nu.amax();
    (rh, rn)
}

/// `ν(τ)`, the mean roof under the equilibrium state.
pub fn nu_tau<T: Real>(rpf: &RpfData<T>, cocycle: &CocycleData<T>) -> T {
    rpf.gibbs.iter().zip(&cocycle.tau).fold(T::zero(), |s, (&g, &t)| s + g * t)
}

/// Integral of a depth-`k` function against the equilibrium state.
pub fn integrate<T: Real>(rpf: &RpfData<T>, f: &[T]) -> T {
    rpf.gibbs.iter().zip(f).fold(T::zero(), |s, (&g, &x)| s + g * x)
}

/// `M⁺(Ψ) = ν(f) (∫ω) (∫⟨μ(m) w₁, w₂⟩ dm) / ν(τ)` for a product test function
/// `Ψ = f(x) ω(s𝗏 + u) ⟨μ(m) w₁, w₂⟩` with one-dimensional `μ`.
///
/// The group integral is `w₁ conj(w₂)` for the trivial character and zero
/// otherwise, so the result is complex in general and real for real `w`.
pub fn suspension_mass<T: Real>(
    rpf: &RpfData<T>,
    nu_tau: T,
    f: &[T],
    omega_integral: T,
    mu: &CharacterLabel,
    w: (C<T>, C<T>),
) -> C<T> {
    if !mu.is_trivial() {
        return C::new(T::zero(), T::zero());
    }
    w.0 * w.1.conj() * (integrate(rpf, f) * omega_integral / nu_tau)
}

/// Gibbs table as CSV rows `word,mass`.
pub fn gibbs_csv<T: Real>(space: &WindowSpace, rpf: &RpfData<T>) -> String {
    let mut s = String::from("word,mass\n");
    for (w, g) in space.windows.iter().zip(&rpf.gibbs) {
        s.push_str(&format!("{},{:e}\n", w, crate::scalar::f(*g)));
    }
    s
}
