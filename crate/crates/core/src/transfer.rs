//! Normalized holonomy-twisted transfer operators on depth-`k` locally
//! constant functions, their iterates, resolvents and spectral splits.
//!
//! For windows `i` (of `x`) and `j` (of a preimage `x'`), the normalized entry is
//! `e^{-(1+a)τ_j} h_j / h_i · e^{i⟨v, K_j⟩} · μ(ϑ_j)⁻¹`, where `h` is the RPF
//! eigenfunction of `L_{-τ}` and `K_j` is given in ψ-adapted coordinates. At
//! `(a, v, μ) = (0, 0, 1)` the all-ones vector is fixed and the Gibbs weights
//! are fixed by the adjoint.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holonomy::{evaluate_unchecked, CharacterLabel, GroupElement};
use crate::linalg::{eigenvalues, eigenvector};
use crate::model::Model;
use crate::scalar::{cabs, carg, cexp, f, r, C, Real};
use crate::thermo::GAP_THRESHOLD;

/// Parameters `(a, v, μ)` of a transfer operator; `v` is in ψ-adapted
/// coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OperatorParams<T: Real> {
    /// Pressure parameter.
    pub a: T,
    /// Frequency.
    pub v: Vec<T>,
    /// Character.
    pub mu: CharacterLabel,
}

impl<T: Real> OperatorParams<T> {
    /// `(0, v, μ)`.
    pub fn frequency(v: Vec<T>, mu: CharacterLabel) -> Self {
        OperatorParams { a: T::zero(), v, mu }
    }
}

/// Assembled operator matrix; rows index the window of `x`, columns the
/// window of the preimage.
#[derive(Clone, Debug)]
pub struct TransferMatrix<T: Real> {
    /// Number of windows.
    pub dim: usize,
    /// Matrix entries.
    pub entries: DMatrix<C<T>>,
    /// Parameters.
    pub params: OperatorParams<T>,
    /// Whether the `h₀`-conjugation is applied.
    pub normalized: bool,
}

/// Normalized operator data at a fixed `a`, from which twisted matrices for
/// any complex frequency and character are produced by column scaling.
#[derive(Clone, Debug)]
pub struct OperatorFamily<T: Real> {
    /// Number of windows.
    pub dim: usize,
    /// Nonzero entries `(i, j, e^{τ^{(a)}_j})`.
    pub base: Vec<(usize, usize, T)>,
    /// `K` per window in ψ-adapted coordinates.
    pub kc: Vec<Vec<T>>,
    /// `ϑ` per window.
    pub theta: Vec<GroupElement<T>>,
}

impl<T: Real> OperatorFamily<T> {
    /// Builds the family of `L_{a, ·, ·}` for a model.
    pub fn new(model: &Model<T>, a: T) -> Self {
        let h = &model.rpf.h;
        let tau = &model.cocycle.tau;
        let mut base = Vec::new();
        for i in 0..model.dim() {
            for &j in &model.space.preds[i] {
                let w = (-(T::one() + a) * tau[j]).exp() * h[j] / h[i];
                base.push((i, j, w));
            }
        }
        OperatorFamily {
            dim: model.dim(),
            base,
            kc: model.cocycle.k_coords_table(),
            theta: model.holonomy.theta.clone(),
        }
    }

    /// Column factors `e^{i⟨v, K_j⟩} μ(ϑ_j)⁻¹` for a complex frequency.
    pub fn column_weights(&self, v: &[C<T>], mu: &CharacterLabel) -> Vec<C<T>> {
        let iu = C::new(T::zero(), T::one());
        self.kc
            .iter()
            .zip(&self.theta)
            .map(|(k, th)| {
                let mut ph = C::new(T::zero(), T::zero());
                for (vd, kd) in v.iter().zip(k) {
                    ph += *vd * *kd;
                }
                cexp(iu * ph) * evaluate_unchecked(mu, th).conj()
            })
            .collect()
    }

    /// Dense matrix at a complex frequency.
    pub fn matrix(&self, v: &[C<T>], mu: &CharacterLabel) -> DMatrix<C<T>> {
        let w = self.column_weights(v, mu);
        let mut m = DMatrix::from_element(self.dim, self.dim, C::new(T::zero(), T::zero()));
        for &(i, j, b) in &self.base {
            m[(i, j)] = w[j] * b;
        }
        m
    }

    /// Dense matrix at a real frequency.
    pub fn matrix_real(&self, v: &[T], mu: &CharacterLabel) -> DMatrix<C<T>> {
        let vc: Vec<C<T>> = v.iter().map(|&x| C::new(x, T::zero())).collect();
        self.matrix(&vc, mu)
    }
}

fn check_params<T: Real>(model: &Model<T>, params: &OperatorParams<T>) -> Result<()> {
    if params.v.len() != model.rank() {
        return Err(Error::DimensionMismatch { expected: model.rank(), found: params.v.len() });
    }
    if params.mu.group() != model.holonomy.group {
        return Err(Error::DimensionMismatch {
            expected: model.holonomy.group.p + model.holonomy.group.q,
            found: params.mu.signs.len() + params.mu.freqs.len(),
        });
    }
    Ok(())
}

/// Assembles the normalized operator at the requested depth (the model is
/// lifted when the depth exceeds the cocycle depth).
pub fn assemble<T: Real>(model: &Model<T>, params: &OperatorParams<T>, depth: usize) -> Result<TransferMatrix<T>> {
    check_params(model, params)?;
    let lifted;
    let m = if depth == model.cocycle.depth {
        model
    } else {
        lifted = model.at_depth(depth)?;
        &lifted
    };
    let fam = OperatorFamily::new(m, params.a);
    Ok(TransferMatrix {
        dim: m.dim(),
        entries: fam.matrix_real(&params.v, &params.mu),
        params: params.clone(),
        normalized: true,
    })
}

/// `Lⁿ H` by repeated multiplication.
pub fn apply_iterate<T: Real>(op: &TransferMatrix<T>, h: &DVector<C<T>>, n: usize) -> Result<DVector<C<T>>> {
    if h.len() != op.dim {
        return Err(Error::DimensionMismatch { expected: op.dim, found: h.len() });
    }
    let mut x = h.clone();
    for _ in 0..n {
        x = &op.entries * x;
    }
    Ok(x)
}

/// Smallest distance from `1` to the spectrum.
pub fn distance_to_one<T: Real>(m: &DMatrix<C<T>>) -> T {
    eigenvalues(m)
        .iter()
        .map(|z| cabs(*z - C::new(T::one(), T::zero())))
        .fold(T::MAX, |a, b| a.min(b))
}

/// Resolvent `(I - L)⁻¹` by LU, with its residual `‖(I - L) X - I‖`.
pub fn neumann_resolvent<T: Real>(op: &TransferMatrix<T>) -> Result<(DMatrix<C<T>>, T)> {
    let d = distance_to_one(&op.entries);
    if d < r(1e-8) {
        return Err(Error::SingularResolvent(f(d)));
    }
    let n = op.dim;
    let a = DMatrix::<C<T>>::identity(n, n) - &op.entries;
    let x = a.clone().lu().try_inverse().ok_or(Error::SingularResolvent(0.0))?;
    let res = (&a * &x - DMatrix::<C<T>>::identity(n, n)).norm();
    Ok((x, res))
}

/// Partial sums `Σ_{k<n} L^k` of the Neumann series.
pub fn neumann_partial_sum<T: Real>(op: &TransferMatrix<T>, n: usize) -> DMatrix<C<T>> {
    let d = op.dim;
    let mut acc = DMatrix::<C<T>>::zeros(d, d);
    let mut p = DMatrix::<C<T>>::identity(d, d);
    for _ in 0..n {
        acc += &p;
        p = &op.entries * p;
    }
    acc
}

/// Maximal eigenvalue, its rank-one spectral projector, and the remainder
/// resolvent `Q = (I - N)⁻¹ (I - P)` with `N = L - κP`.
#[derive(Clone, Debug)]
pub struct SpectralSplit<T: Real> {
    /// Maximal-modulus eigenvalue.
    pub kappa: C<T>,
    /// Spectral projector onto its eigenline.
    pub p: DMatrix<C<T>>,
    /// `(I - N)⁻¹ (I - P)`, equal to `(I - N)⁻¹ - P` since `N P = 0`.
    pub q: DMatrix<C<T>>,
    /// `|κ| - |λ₂|`.
    pub gap: T,
    /// `‖(I - L)⁻¹ - P/(1-κ) - Q‖` when `κ ≠ 1`.
    pub identity_residual: Option<T>,
}

/// Computes the [`SpectralSplit`] of an operator (Euclidean norms throughout).
pub fn spectral_split<T: Real>(op: &TransferMatrix<T>) -> Result<SpectralSplit<T>> {
    let ev = eigenvalues(&op.entries);
    let kappa = ev[0];
    let second = ev.get(1).map(|z| cabs(*z)).unwrap_or(T::zero());
    let gap = cabs(kappa) - second;
    if gap < r(GAP_THRESHOLD) {
        return Err(Error::GapTooSmall { gap: f(gap), threshold: GAP_THRESHOLD });
    }
    let right = eigenvector(&op.entries, kappa)?;
    let left = eigenvector(&op.entries.transpose(), kappa)?;
    let denom = left.dot(&right);
    let p = &right * left.transpose() / denom;
    let n = op.dim;
    let id = DMatrix::<C<T>>::identity(n, n);
    let rem = &op.entries - &p * kappa;
    let q = (&id - rem).lu().try_inverse().ok_or(Error::SingularResolvent(0.0))? - &p;
    let one = C::new(T::one(), T::zero());
    let identity_residual = if cabs(one - kappa) > r(1e-8) {
        let (x, _) = neumann_resolvent(op)?;
        Some((x - &p / (one - kappa) - &q).norm())
    } else {
        None
    };
    Ok(SpectralSplit { kappa, p, q, gap, identity_residual })
}

/// Leading eigenvalue and second modulus at a complex frequency.
pub fn leading_eigenvalue<T: Real>(fam: &OperatorFamily<T>, v: &[C<T>], mu: &CharacterLabel) -> (C<T>, T) {
    let ev = eigenvalues(&fam.matrix(v, mu));
    (ev[0], ev.get(1).map(|z| cabs(*z)).unwrap_or(T::zero()))
}

/// Eigenvalue of `L_{v,μ}` closest to a reference value, which keeps the
/// branch continuous along a path of frequencies.
pub fn eigenvalue_near<T: Real>(fam: &OperatorFamily<T>, v: &[C<T>], mu: &CharacterLabel, reference: C<T>) -> C<T> {
    let ev = eigenvalues(&fam.matrix(v, mu));
    let mut best = ev[0];
    for z in ev {
        if cabs(z - reference) < cabs(best - reference) {
            best = z;
        }
    }
    best
}

/// Outcome of the lattice sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LatticeReport<T: Real> {
    /// Largest `|κ(v, 1)|` over the grid points `v ≠ 0`.
    pub max_modulus_trivial: T,
    /// Grid points with `|κ(v, 1)|` within `1e-8` of one.
    pub flagged: Vec<Vec<T>>,
    /// Whether every flagged point also satisfies the periodic-orbit phase
    /// condition on all fixed points of period at most six.
    pub orbit_confirmed: bool,
    /// Characters with `|κ(0, μ)|` within `1e-8` of one: trivial on the
    /// realized holonomy, hence never mixing.
    pub nonmixing_characters: Vec<CharacterLabel>,
    /// Lattice verdict.
    pub lattice: bool,
}

/// Default rank-dimensional sweep grid: spacing `step` up to `extent` in every
/// ψ-coordinate, origin excluded.
pub fn sweep_grid<T: Real>(rank: usize, extent: T, step: T) -> Vec<Vec<T>> {
    let n = (extent / step).round().to_usize().unwrap_or(0) as i64;
    let side: Vec<T> = (-n..=n).map(|k| step * r::<T>(k as f64)).collect();
    let mut pts: Vec<Vec<T>> = vec![vec![]];
    for _ in 0..rank {
        pts = pts
            .into_iter()
            .flat_map(|p| side.iter().map(move |&x| {
                let mut q = p.clone();
                q.push(x);
                q
            }))
            .collect();
    }
    pts.retain(|p| p.iter().any(|&x| x != T::zero()));
    pts
}


/// Sweeps `|κ(v, 1)|` over a grid and `|κ(0, μ)|` over the characters.
pub fn lattice_diagnostic<T: Real>(
    model: &Model<T>,
    grid: &[Vec<T>],
    characters: &[CharacterLabel],
) -> LatticeReport<T> {
    let fam = OperatorFamily::new(model, T::zero());
    let triv = CharacterLabel::trivial(model.holonomy.group);
    let tol = r::<T>(1e-8);
    let moduli: Vec<T> = grid
        .par_iter()
        .map(|v| {
            let vc: Vec<C<T>> = v.iter().map(|&x| C::new(x, T::zero())).collect();
            cabs(leading_eigenvalue(&fam, &vc, &triv).0)
        })
        .collect();
    let max_modulus_trivial = moduli.iter().fold(T::zero(), |a, &b| a.max(b));
    let flagged: Vec<Vec<T>> = grid
        .iter()
        .zip(&moduli)
        .filter(|(_, &m)| (T::one() - m).abs() < tol)
        .map(|(v, _)| v.clone())
        .collect();
    let orbit_confirmed = !flagged.is_empty()
        && flagged.iter().all(|v| orbit_phase_condition(model, &fam, v, &triv, 6, r(1e-7)));
    let zero = vec![C::new(T::zero(), T::zero()); model.rank()];
    let nonmixing_characters = characters
        .iter()
        .filter(|mu| !mu.is_trivial())
        .filter(|mu| (T::one() - cabs(leading_eigenvalue(&fam, &zero, mu).0)).abs() < tol)
        .cloned()
        .collect();
    LatticeReport { max_modulus_trivial, lattice: !flagged.is_empty(), flagged, orbit_confirmed, nonmixing_characters }
}

/// Checks `⟨v, K_n(x)⟩ - arg μ(ϑⁿ(x)) - nθ ∈ 2πZ` on all fixed points of period
/// `n ≤ n_max`, where `e^{iθ}` is the phase of the leading eigenvalue.
pub fn orbit_phase_condition<T: Real>(
    model: &Model<T>,
    fam: &OperatorFamily<T>,
    v: &[T],
    mu: &CharacterLabel,
    n_max: usize,
    tol: T,
) -> bool {
    let vc: Vec<C<T>> = v.iter().map(|&x| C::new(x, T::zero())).collect();
    let theta = carg(leading_eigenvalue(fam, &vc, mu).0);
    let two_pi = T::two_pi();
    for n in 1..=n_max {
        for w in model.spec.fixed_points(n) {
            let idx = model.space.cyclic_windows(&w.0).expect("fixed point windows are admissible");
            let mut ph = T::zero();
            for &i in &idx {
                for (vd, kd) in v.iter().zip(&fam.kc[i]) {
                    ph += *vd * *kd;
                }
            }
            let hol = model.holonomy.product_of(&idx);
            ph -= carg(evaluate_unchecked(mu, &hol));
            ph -= r::<T>(n as f64) * theta;
            let k = (ph / two_pi).round();
            if (ph - k * two_pi).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Binary dump: little-endian `u64` dimension and nonzero count, then
/// `(u64 row, u64 col, f64 re, f64 im)` triplets.
pub fn dump_matrix<T: Real>(op: &TransferMatrix<T>) -> Vec<u8> {
    let mut trip = Vec::new();
    for j in 0..op.dim {
        for i in 0..op.dim {
            let z = op.entries[(i, j)];
            if z.re != T::zero() || z.im != T::zero() {
                trip.push((i, j, z));
            }
        }
    }
    let mut out = Vec::with_capacity(16 + 32 * trip.len());
    out.extend_from_slice(&(op.dim as u64).to_le_bytes());
    out.extend_from_slice(&(trip.len() as u64).to_le_bytes());
    for (i, j, z) in trip {
        out.extend_from_slice(&(i as u64).to_le_bytes());
        out.extend_from_slice(&(j as u64).to_le_bytes());
        out.extend_from_slice(&f(z.re).to_le_bytes());
        out.extend_from_slice(&f(z.im).to_le_bytes());
    }
    out
}
