//! Ping-pong semigroups in a product of two copies of `SL(2, R)`.
//!
//! Each generator is a pair of unimodular matrices acting on the boundary
//! `RP¹ × RP¹` by Möbius maps. The boundary cocycle of a factor is
//! `σ(g, ξ) = log((cξ + d)²)` with sign `sign(cξ + d)`; the bottom row of `g h`
//! applied to `(ξ, 1)` is `(c_h ξ + d_h)(c_g hξ + d_g)`, so the vector part is
//! additive and the sign part multiplicative under composition. At the
//! attracting fixed point of `g`, `cξ + d` is the top eigenvalue, so periodic
//! sums reproduce the Jordan projection `2 log ρ` and its sign.

use serde::{Deserialize, Serialize};

use crate::cocycle::{calibrate, CocycleData, HolonomyData};
use crate::error::{Error, Result};
use crate::holonomy::{GroupElement, GroupSpec};
use crate::scalar::{r, Real};
use crate::sft::{SubshiftSpec, Word, WindowSpace};

/// Row-major `2×2` matrix.
pub type Mat2<T> = [[T; 2]; 2];

/// Generators with their attracting boundary intervals.
///
/// The repelling arc of every generator in a factor is the complement of the
/// convex hull of that factor's attracting intervals; ping-pong requires each
/// generator to map the hull strictly inside its own attracting interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SchottkySpec<T: Real> {
    /// One matrix pair per generator.
    pub generators: Vec<[Mat2<T>; 2]>,
    /// Attracting interval `[lo, hi]` per generator and factor.
    pub attracting: Vec<[[T; 2]; 2]>,
}

/// Möbius action `(aξ + b)/(cξ + d)`.
#[inline]
pub fn mobius<T: Real>(g: &Mat2<T>, xi: T) -> T {
    (g[0][0] * xi + g[0][1]) / (g[1][0] * xi + g[1][1])
}

fn word_str(w: &[u8]) -> String {
    Word(w.to_vec()).to_string()
}

impl<T: Real> SchottkySpec<T> {
    /// Number of generators.
    pub fn letters(&self) -> usize {
        self.generators.len()
    }

    /// Convex hull of the attracting intervals of a factor.
    pub fn hull(&self, factor: usize) -> [T; 2] {
        let lo = self.attracting.iter().map(|iv| iv[factor][0]).fold(T::MAX, |a, b| a.min(b));
        let hi = self.attracting.iter().map(|iv| iv[factor][1]).fold(-T::MAX, |a, b| a.max(b));
        [lo, hi]
    }

    /// Checks unimodularity, loxodromy, disjointness of attracting intervals and
    /// the ping-pong containment on both factors.
    pub fn validate(&self) -> Result<()> {
        if self.generators.len() < 2 || self.attracting.len() != self.generators.len() {
            return Err(Error::InvalidModel("need at least two generators with intervals".into()));
        }
        for (gi, pair) in self.generators.iter().enumerate() {
            for (f, g) in pair.iter().enumerate() {
                let ad = g[0][0] * g[1][1];
                let bc = g[0][1] * g[1][0];
                let tol = r::<T>(1e-9) * (ad.abs() + bc.abs() + T::one());
                if (ad - bc - T::one()).abs() > tol {
                    return Err(Error::InvalidModel(format!("generator {} factor {} has det != 1", gi + 1, f + 1)));
                }
                if (g[0][0] + g[1][1]).abs() <= r(2.0) {
                    return Err(Error::NotLoxodromic(format!("generator {} factor {}", gi + 1, f + 1)));
                }
            }
        }
        for f in 0..2 {
            let n = self.letters();
            for i in 0..n {
                let a = self.attracting[i][f];
                if !(a[0] < a[1]) {
                    return Err(Error::PingPong(format!("empty interval for generator {}", i + 1)));
                }
                for j in (i + 1)..n {
                    let b = self.attracting[j][f];
                    if !(a[1] < b[0] || b[1] < a[0]) {
                        return Err(Error::PingPong(format!("intervals of generators {} and {} overlap", i + 1, j + 1)));
                    }
                }
            }
            let [lo, hi] = self.hull(f);
            for i in 0..n {
                let g = &self.generators[i][f];
                if g[1][0] != T::zero() {
                    let pole = -g[1][1] / g[1][0];
                    if pole >= lo && pole <= hi {
                        return Err(Error::PingPong(format!("pole of generator {} inside the domain", i + 1)));
                    }
                }
                let (x, y) = (mobius(g, lo), mobius(g, hi));
                let d = self.attracting[i][f];
                if !(x > d[0] && x < d[1] && y > d[0] && y < d[1]) {
                    return Err(Error::PingPong(format!(
                        "generator {} does not map the domain into its attracting interval in factor {}",
                        i + 1,
                        f + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-factor `2 log ρ` of the word's matrix product together with the sign
    /// of the top eigenvalue.
    pub fn jordan_data(&self, word: &[u8]) -> Result<([T; 2], [i8; 2])> {
        if word.is_empty() {
            return Err(Error::InvalidModel("empty word".into()));
        }
        let mut lam = [T::zero(); 2];
        let mut sgn = [1i8; 2];
        for f in 0..2 {
            let mut m: Mat2<T> = [[T::one(), T::zero()], [T::zero(), T::one()]];
            let mut log_scale = T::zero();
            for &a in word {
                let g = &self.generators[a as usize][f];
                let p = [
                    [m[0][0] * g[0][0] + m[0][1] * g[1][0], m[0][0] * g[0][1] + m[0][1] * g[1][1]],
                    [m[1][0] * g[0][0] + m[1][1] * g[1][0], m[1][0] * g[0][1] + m[1][1] * g[1][1]],
                ];
                let s = p.iter().flatten().fold(T::zero(), |acc, x| acc.max(x.abs()));
                m = [[p[0][0] / s, p[0][1] / s], [p[1][0] / s, p[1][1] / s]];
                log_scale += s.ln();
            }
            let tr = m[0][0] + m[1][1];
            let det = (-r::<T>(2.0) * log_scale).exp();
            let disc = tr * tr - r::<T>(4.0) * det;
            if !(disc > T::zero()) {
                return Err(Error::NotLoxodromic(word_str(word)));
            }
            let top = (tr.abs() + disc.sqrt()) / r(2.0);
            lam[f] = r::<T>(2.0) * (log_scale + top.ln());
            sgn[f] = if tr < T::zero() { -1 } else { 1 };
        }
        Ok((lam, sgn))
    }

    /// Per-factor `2 log ρ` of the word's matrix product.
    pub fn jordan_projection(&self, word: &[u8]) -> Result<[T; 2]> {
        Ok(self.jordan_data(word)?.0)
    }

    /// Boundary cocycle of one letter at a boundary point pair.
    pub fn busemann_cocycle(&self, letter: u8, xi: [T; 2]) -> Result<([T; 2], [i8; 2])> {
        let pair = self
            .generators
            .get(letter as usize)
            .ok_or_else(|| Error::InvalidModel(format!("letter {} out of range", letter + 1)))?;
        let mut v = [T::zero(); 2];
        let mut s = [1i8; 2];
        for f in 0..2 {
            let [lo, hi] = self.hull(f);
            if !(xi[f] >= lo && xi[f] <= hi) {
                return Err(Error::OutsideDomain(format!("factor {} coordinate outside hull", f + 1)));
            }
            let (v_f, s_f) = factor_cocycle(&pair[f], xi[f]);
            v[f] = v_f;
            s[f] = s_f;
        }
        Ok((v, s))
    }

    /// Attracting fixed point of `g_{w₁} ⋯ g_{w_k} g_{w₀}`, the boundary point of
    /// the shifted periodic extension `σ(w^∞)`.
    pub fn canonical_point(&self, window: &[u8]) -> [T; 2] {
        let n = window.len();
        let cycle: Vec<u8> = (1..=n).map(|j| window[j % n]).collect();
        let mut out = [T::zero(); 2];
        for (f, o) in out.iter_mut().enumerate() {
            let [lo, hi] = self.hull(f);
            let mut xi = (lo + hi) / r(2.0);
            for _ in 0..2000 {
                let prev = xi;
                for &a in cycle.iter().rev() {
                    xi = mobius(&self.generators[a as usize][f], xi);
                }
                if (xi - prev).abs() <= T::EPSILON * (T::one() + xi.abs()) {
                    break;
                }
            }
            *o = xi;
        }
        out
    }

    /// Raw return vector and sign pair of a window: the cocycle of its first
    /// letter at the canonical point of the window.
    pub fn window_cocycle(&self, window: &[u8]) -> Result<([T; 2], [i8; 2])> {
        let xi = self.canonical_point(window);
        self.busemann_cocycle(window[0], xi)
    }

    /// Builds calibrated depth-`k` cocycle and holonomy tables over the full
    /// shift on the generators.
    pub fn build_cocycle_model(
        &self,
        depth: usize,
        psi: Vec<T>,
    ) -> Result<(SubshiftSpec, CocycleData<T>, HolonomyData<T>)> {
        self.validate()?;
        let spec = SubshiftSpec::full(self.letters());
        let space = WindowSpace::new(&spec, depth);
        let mut raw = Vec::with_capacity(space.dim());
        let mut theta = Vec::with_capacity(space.dim());
        for w in &space.windows {
            let (v, s) = self.window_cocycle(&w.0)?;
            raw.push(v.to_vec());
            theta.push(GroupElement::new(s.to_vec(), vec![]));
        }
        let cocycle = calibrate(&spec, depth, raw, psi)?;
        Ok((spec, cocycle, HolonomyData { group: GroupSpec { p: 2, q: 0 }, theta }))
    }
}

/// `(log((cξ + d)²), sign(cξ + d))` for one factor.
pub fn factor_cocycle<T: Real>(g: &Mat2<T>, xi: T) -> (T, i8) {
    let den = g[1][0] * xi + g[1][1];
    ((den * den).ln(), if den < T::zero() { -1 } else { 1 })
}

/// Matrix product `g h`.
pub fn mat_mul<T: Real>(g: &Mat2<T>, h: &Mat2<T>) -> Mat2<T> {
    [
        [g[0][0] * h[0][0] + g[0][1] * h[1][0], g[0][0] * h[0][1] + g[0][1] * h[1][1]],
        [g[1][0] * h[0][0] + g[1][1] * h[1][0], g[1][0] * h[0][1] + g[1][1] * h[1][1]],
    ]
}

/// Hyperbolic element `P diag(λ, 1/λ) P⁻¹` with `P = [[fa, fr], [1, 1]]`:
/// attracting fixed point `fa`, repelling fixed point `fr`, top eigenvalue `λ`.
pub fn hyperbolic<T: Real>(lambda: T, fa: T, fr: T) -> Mat2<T> {
    let d = fa - fr;
    let il = T::one() / lambda;
    [
        [(fa * lambda - fr * il) / d, fa * fr * (il - lambda) / d],
        [(lambda - il) / d, (fa * il - fr * lambda) / d],
    ]
}
