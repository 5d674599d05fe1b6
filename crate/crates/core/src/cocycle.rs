//! Depth-`k` locally constant roof, return-vector and holonomy cocycles,
//! their Birkhoff sums, and pressure calibration of the return vector.
//!
//! Vectors of `𝔞` are handled in ψ-adapted orthonormal coordinates: the
//! first coordinate is `ψ(a)`, the remaining ones are the `ker ψ` component of
//! `a - ψ(a) 𝗏` in a fixed orthonormal basis of `ker ψ`. In these coordinates
//! `⟨·,·⟩_ψ` is the standard inner product and `𝗏 = e₀`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holonomy::{GroupElement, GroupSpec};
use crate::linalg::perron;
use crate::scalar::{r, Real};
use crate::sft::{SubshiftSpec, WindowSpace};
use crate::thermo::{pressure_of, weighted_matrix};

/// Calibrated cocycle tables, aligned with the lexicographic windows of
/// [`WindowSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CocycleData<T: Real> {
    /// Dimension of `𝔞`.
    pub rank: usize,
    /// Depth `k`; values are constant on `(k+1)`-cylinders.
    pub depth: usize,
    /// Raw return vectors `K(w)` in the original coordinates.
    pub k_values: Vec<Vec<T>>,
    /// Covector `ψ` in the original coordinates.
    pub psi: Vec<T>,
    /// Pressure scale `s*` with `Pr(-s* ψ(K)) = 0`.
    pub scale: T,
    /// Direction `𝗏` in the original coordinates, `ψ(𝗏) = 1`.
    pub v_dir: Vec<T>,
    /// Roof `τ = ψ(s* K)`.
    pub tau: Vec<T>,
    /// `K̂ = s* K - τ 𝗏` in the original coordinates.
    pub khat: Vec<Vec<T>>,
    /// Orthonormal basis of `ker ψ` (standard inner product), `rank - 1` vectors.
    pub kernel_basis: Vec<Vec<T>>,
}

/// Holonomy cocycle values, aligned with the windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HolonomyData<T: Real> {
    /// Group shape.
    pub group: GroupSpec,
    /// `ϑ(w)` per window.
    pub theta: Vec<GroupElement<T>>,
}

impl<T: Real> HolonomyData<T> {
    /// Trivial holonomy over `dim` windows.
    pub fn trivial(dim: usize) -> Self {
        let group = GroupSpec::default();
        HolonomyData { group, theta: vec![GroupElement::identity(group); dim] }
    }

    /// Ordered product `ϑ^n` over the shifted windows of a word.
    pub fn holonomy_product(&self, space: &WindowSpace, word: &[u8]) -> Result<GroupElement<T>> {
        let idx = space.windows_of(word)?;
        Ok(self.product_of(&idx))
    }

    /// Product over explicit window indices.
    pub fn product_of(&self, idx: &[usize]) -> GroupElement<T> {
        idx.iter()
            .fold(GroupElement::identity(self.group), |acc, &i| acc.compose(&self.theta[i]))
    }

    /// Repeats each entry onto the windows of a deeper space.
    pub fn lift(&self, from: &WindowSpace, to: &WindowSpace) -> Self {
        HolonomyData {
            group: self.group,
            theta: to.windows.iter().map(|w| self.theta[prefix_index(from, &w.0)].clone()).collect(),
        }
    }
}

fn prefix_index(from: &WindowSpace, w: &[u8]) -> usize {
    from.index_of(&w[..from.depth + 1]).expect("prefix of an admissible window is admissible")
}

/// Birkhoff sums `(τ_n, K_n, K̂_n)` along a word; `K_n` is the calibrated
/// vector in original coordinates, `K̂_n` is given in `ker ψ` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BirkhoffSum<T: Real> {
    /// `τ_n`.
    pub tau: T,
    /// `K_n = Σ s* K`.
    pub k: Vec<T>,
    /// `K̂_n` in the orthonormal `ker ψ` basis.
    pub khat: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Orthonormal basis of `ker ψ` from Gram–Schmidt on the projected unit vectors.
pub fn kernel_basis<T: Real>(psi: &[T]) -> Vec<Vec<T>> {
    let rank = psi.len();
    let pp = dot(psi, psi);
    let mut basis: Vec<Vec<T>> = Vec::new();
    for i in 0..rank {
        let mut u: Vec<T> = (0..rank)
            .map(|j| if i == j { T::one() } else { T::zero() } - psi[i] * psi[j] / pp)
            .collect();
        for b in &basis {
            let c = dot(&u, b);
            for (x, y) in u.iter_mut().zip(b) {
                *x -= c * *y;
            }
        }
        let n = dot(&u, &u).sqrt();
        if n > r(1e-8) {
            basis.push(u.into_iter().map(|x| x / n).collect());
        }
        if basis.len() + 1 == rank {
            break;
        }
    }
    basis
}

impl<T: Real> CocycleData<T> {
    /// ψ-adapted coordinates of a vector of `𝔞`.
    pub fn coords(&self, a: &[T]) -> Vec<T> {
        let p = dot(&self.psi, a);
        let rest: Vec<T> = a.iter().zip(&self.v_dir).map(|(&x, &v)| x - p * v).collect();
        std::iter::once(p).chain(self.kernel_basis.iter().map(|e| dot(e, &rest))).collect()
    }

    /// Inverse of [`CocycleData::coords`].
    pub fn from_coords(&self, c: &[T]) -> Vec<T> {
        let mut a: Vec<T> = self.v_dir.iter().map(|&v| c[0] * v).collect();
        for (e, &ci) in self.kernel_basis.iter().zip(&c[1..]) {
            for (x, &y) in a.iter_mut().zip(e) {
                *x += ci * y;
            }
        }
        a
    }

    /// `s* K(w_i)` in ψ-adapted coordinates, i.e. `(τ, K̂)` with `K̂` in the
    /// kernel basis.
    pub fn k_coords(&self, i: usize) -> Vec<T> {
        std::iter::once(self.tau[i])
            .chain(self.kernel_basis.iter().map(|e| dot(e, &self.khat[i])))
            .collect()
    }

    /// All windows' [`CocycleData::k_coords`].
    pub fn k_coords_table(&self) -> Vec<Vec<T>> {
        (0..self.tau.len()).map(|i| self.k_coords(i)).collect()
    }

    /// Gram matrix of `⟨·,·⟩_ψ` in the original coordinates, row-major.
    pub fn psi_gram(&self) -> Vec<Vec<T>> {
        let rank = self.rank;
        let col = |j: usize| -> Vec<T> {
            let e: Vec<T> = (0..rank).map(|i| if i == j { T::one() } else { T::zero() }).collect();
            self.coords(&e)
        };
        let cols: Vec<Vec<T>> = (0..rank).map(col).collect();
        (0..rank).map(|i| (0..rank).map(|j| dot(&cols[i], &cols[j])).collect()).collect()
    }

    /// Birkhoff sums over the `n = len - depth` shifted windows of a word.
    pub fn birkhoff_sum(&self, space: &WindowSpace, word: &[u8]) -> Result<BirkhoffSum<T>> {
        let idx = space.windows_of(word)?;
        Ok(self.birkhoff_of(&idx))
    }

    /// Birkhoff sums over explicit window indices.
    pub fn birkhoff_of(&self, idx: &[usize]) -> BirkhoffSum<T> {
        let mut tau = T::zero();
        let mut k = vec![T::zero(); self.rank];
        let mut khat = vec![T::zero(); self.rank];
        for &i in idx {
            tau += self.tau[i];
            for d in 0..self.rank {
                k[d] += self.scale * self.k_values[i][d];
                khat[d] += self.khat[i][d];
            }
        }
        let khat = self.kernel_basis.iter().map(|e| dot(e, &khat)).collect();
        BirkhoffSum { tau, k, khat }
    }

    /// Repeats every table onto the windows of a deeper space.
    pub fn lift(&self, from: &WindowSpace, to: &WindowSpace) -> Self {
        let pick = |v: &Vec<Vec<T>>| -> Vec<Vec<T>> {
            to.windows.iter().map(|w| v[prefix_index(from, &w.0)].clone()).collect()
        };
        CocycleData {
            rank: self.rank,
            depth: to.depth,
            k_values: pick(&self.k_values),
            psi: self.psi.clone(),
            scale: self.scale,
            v_dir: self.v_dir.clone(),
            tau: to.windows.iter().map(|w| self.tau[prefix_index(from, &w.0)]).collect(),
            khat: pick(&self.khat),
            kernel_basis: self.kernel_basis.clone(),
        }
    }
}

/// Finds `s*` with `Pr(-s* ψ(K)) = 0` by bracketed bisection, then sets
/// `τ = s* ψ(K)`, `𝗏 = ∫ s* K dν / ν(τ)` for the `(-τ)`-equilibrium state `ν`,
/// and `K̂ = s* K - τ 𝗏`.
pub fn calibrate<T: Real>(
    spec: &SubshiftSpec,
    depth: usize,
    raw_k: Vec<Vec<T>>,
    psi: Vec<T>,
) -> Result<CocycleData<T>> {
    spec.validate()?;
    let space = WindowSpace::new(spec, depth);
    if raw_k.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: raw_k.len() });
    }
    let rank = psi.len();
    if rank == 0 {
        return Err(Error::InvalidModel("empty covector".into()));
    }
    for (i, k) in raw_k.iter().enumerate() {
        if k.len() != rank {
            return Err(Error::DimensionMismatch { expected: rank, found: k.len() });
        }
        if !(dot(&psi, k) > T::zero()) {
            return Err(Error::NonPositiveRoof(space.windows[i].to_string()));
        }
    }
    let roof: Vec<T> = raw_k.iter().map(|k| dot(&psi, k)).collect();
    let pr = |s: T| -> Result<T> {
        let pot: Vec<T> = roof.iter().map(|&x| -s * x).collect();
        pressure_of(&space, &pot)
    };

    if !(pr(T::zero())? > T::zero()) {
        return Err(Error::RootBracketFailure("pressure at s = 0 is not positive".into()));
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    let mut doublings = 0;
    while pr(hi)? > T::zero() {
        lo = hi;
        hi *= r(2.0);
        doublings += 1;
        if doublings > 200 {
            return Err(Error::RootBracketFailure("pressure never changes sign".into()));
        }
    }
    let tol = r::<T>(1e-14);
    for _ in 0..200 {
        if hi - lo <= tol * hi.max(T::one()) {
            break;
        }
        let mid = (lo + hi) / r(2.0);
        if pr(mid)? > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = (lo + hi) / r(2.0);
    let tau: Vec<T> = roof.iter().map(|&x| scale * x).collect();

    let neg: Vec<T> = tau.iter().map(|&x| -x).collect();
    let p = perron(&weighted_matrix(&space, &neg))?;
    let gibbs: Vec<T> = {
        let g: Vec<T> = p.left.iter().zip(p.right.iter()).map(|(&a, &b)| a * b).collect();
        let s = g.iter().fold(T::zero(), |a, &b| a + b);
        g.into_iter().map(|x| x / s).collect()
    };
    let nu_tau = gibbs.iter().zip(&tau).fold(T::zero(), |a, (&g, &t)| a + g * t);
    let mut v_dir = vec![T::zero(); rank];
    for (g, k) in gibbs.iter().zip(&raw_k) {
        for d in 0..rank {
            v_dir[d] += *g * scale * k[d];
        }
    }
    for x in &mut v_dir {
        *x /= nu_tau;
    }
    let pv = dot(&psi, &v_dir);
    for x in &mut v_dir {
        *x /= pv;
    }
    let khat: Vec<Vec<T>> = raw_k
        .iter()
        .zip(&tau)
        .map(|(k, &t)| (0..rank).map(|d| scale * k[d] - t * v_dir[d]).collect())
        .collect();
    Ok(CocycleData {
        rank,
        depth,
        k_values: raw_k,
        kernel_basis: kernel_basis(&psi),
        psi,
        scale,
        v_dir,
        tau,
        khat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_roof_on_full_shift() {
        let spec = SubshiftSpec::full(2);
        let c = calibrate(&spec, 0, vec![vec![3.0_f64]; 2], vec![1.0]).unwrap();
        assert!((c.scale - 2f64.ln() / 3.0).abs() < 1e-12);
        assert!((c.tau[0] - 2f64.ln()).abs() < 1e-11);
        assert!(c.kernel_basis.is_empty());
    }

    #[test]
    fn constant_roof_on_golden_mean() {
        let spec = SubshiftSpec::golden_mean();
        let c = calibrate(&spec, 0, vec![vec![2.0_f64]; 2], vec![1.0]).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((c.scale - phi.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_roof() {
        let spec = SubshiftSpec::full(2);
        let e = calibrate(&spec, 0, vec![vec![1.0_f64, 0.0], vec![-1.0, 0.0]], vec![1.0, 0.0]);
        assert!(matches!(e, Err(Error::NonPositiveRoof(_))));
    }

    #[test]
    fn kernel_basis_is_orthonormal_and_annihilated() {
        let psi = vec![0.5_f64, 0.5];
        let b = kernel_basis(&psi);
        assert_eq!(b.len(), 1);
        assert!((b[0][0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((b[0][1] + 0.5f64.sqrt()).abs() < 1e-15);
        let psi3 = vec![1.0_f64, 2.0, -0.5];
        let b3 = kernel_basis(&psi3);
        assert_eq!(b3.len(), 2);
        for u in &b3 {
            assert!(dot(u, &psi3).abs() < 1e-14);
            assert!((dot(u, u) - 1.0).abs() < 1e-14);
        }
        assert!(dot(&b3[0], &b3[1]).abs() < 1e-14);
    }
}
