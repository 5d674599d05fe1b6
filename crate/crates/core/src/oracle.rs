//! Brute-force reference computations that avoid the transfer-matrix path:
//! periodic-orbit sums, explicit preimage sums, and cylinder enumeration of
//! correlation series with Markov weights from a separately computed Perron
//! pair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::richardson;
use crate::holonomy::{evaluate_unchecked, CharacterLabel};
use crate::mixing::{MixingQuery, PairKernel};
use crate::model::Model;
use crate::scalar::{cabs, cexp, r, C, CompensatedComplexSum, Real};
use crate::sft::WindowSpace;
use crate::transfer::OperatorParams;

/// Default enumeration budget.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// `Z_n` for one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OrbitSum<T: Real> {
    /// Period.
    pub n: usize,
    /// Sum over `Fix σⁿ`.
    pub value: C<T>,
}

fn check_budget(spec_n: usize, n: usize, budget: u64) -> Result<()> {
    let est = (spec_n as f64).powi(n as i32);
    if est > budget as f64 {
        return Err(Error::CombinatorialBlowup(est as u64));
    }
    Ok(())
}

/// Per-window data for the orbit walk: weight, phase, sign bits and angles.
struct OrbitWalk<'a, T: Real> {
    succs: &'a [Vec<usize>],
    pot: &'a [T],
    phase: Vec<T>,
    sign_bits: Vec<u64>,
    angles: Vec<Vec<T>>,
    mu_bits: u64,
    freqs: Vec<T>,
    n: usize,
}

impl<T: Real> OrbitWalk<'_, T> {
    /// Closed walks of length `n` extending `path`, one term per periodic point.
    fn extend(&self, path: &mut Vec<usize>, e: T, ph: T, bits: u64, ang: &[T], out: &mut CompensatedComplexSum<T>) {
        let cur = *path.last().expect("walks start from a window");
        let e = e + self.pot[cur];
        let ph = ph + self.phase[cur];
        let bits = bits ^ self.sign_bits[cur];
        let ang: Vec<T> = ang.iter().zip(&self.angles[cur]).map(|(a, b)| *a + *b).collect();
        if path.len() == self.n {
            if self.succs[cur].contains(&path[0]) {
                let sign = if (bits & self.mu_bits).count_ones() % 2 == 1 { -T::one() } else { T::one() };
                let chi: T = ang.iter().zip(&self.freqs).fold(T::zero(), |a, (&t, &f)| a + t * f);
                // Inverse character value: sign · e^{-i⟨n, θ⟩}.
                out.add(cexp(C::new(e, ph - chi)) * sign);
            }
            return;
        }
        for &next in &self.succs[cur] {
            path.push(next);
            self.extend(path, e, ph, bits, &ang, out);
            path.pop();
        }
    }
}

/// `Σ_{Fix σⁿ} e^{f_n + i⟨v, K_n⟩} μ(ϑⁿ)⁻¹` with `f` a depth-`k` potential.
///
/// Period-`n` points correspond one-to-one with closed walks of length `n` in
/// the window graph; each walk is visited individually.
pub fn orbit_sum<T: Real>(model: &Model<T>, pot: &[T], v: &[T], mu: &CharacterLabel, n: usize) -> Result<OrbitSum<T>> {
    check_budget(model.spec.n, n, DEFAULT_BUDGET)?;
    if n == 0 {
        return Err(Error::Config("period must be positive".into()));
    }
    let kc = model.cocycle.k_coords_table();
    let space = &model.space;
    let theta = &model.holonomy.theta;
    let walk = OrbitWalk {
        succs: &space.succs,
        pot,
        phase: kc.iter().map(|k| v.iter().zip(k).fold(T::zero(), |a, (&x, &y)| a + x * y)).collect(),
        sign_bits: theta
            .iter()
            .map(|g| g.signs.iter().enumerate().fold(0u64, |b, (i, &s)| if s < 0 { b | (1 << i) } else { b }))
            .collect(),
        angles: theta.iter().map(|g| g.angles.clone()).collect(),
        mu_bits: mu.signs.iter().enumerate().fold(0u64, |b, (i, &e)| if e == 1 { b | (1 << i) } else { b }),
        freqs: mu.freqs.iter().map(|&f| r::<T>(f as f64)).collect(),
        n,
    };
    // Split into prefixes for parallel work; the order of the partial sums is fixed.
    let mut prefixes: Vec<Vec<usize>> = (0..space.dim()).map(|i| vec![i]).collect();
    while prefixes.len() < 256 && prefixes[0].len() < n.min(8) {
        prefixes = prefixes
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().expect("non-empty prefix");
                space.succs[last].iter().map(move |&nx| {
                    let mut q = p.clone();
                    q.push(nx);
                    q
                })
            })
            .collect();
    }
    let q = model.holonomy.group.q;
    let parts: Vec<C<T>> = prefixes
        .par_iter()
        .map(|p| {
            let mut e = T::zero();
            let mut ph = T::zero();
            let mut bits = 0u64;
            let mut ang = vec![T::zero(); q];
            for &i in &p[..p.len() - 1] {
                e += walk.pot[i];
                ph += walk.phase[i];
                bits ^= walk.sign_bits[i];
                for (a, b) in ang.iter_mut().zip(&walk.angles[i]) {
                    *a += *b;
                }
            }
            let mut out = CompensatedComplexSum::default();
            walk.extend(&mut p.clone(), e, ph, bits, &ang, &mut out);
            out.value()
        })
        .collect();
    let mut s = CompensatedComplexSum::default();
    for z in parts {
        s.add(z);
    }
    Ok(OrbitSum { n, value: s.value() })
}

/// `Pr(f)` from `(1/n) log Z_n`, extrapolated in `1/n` over
/// `n_max - 2 ..= n_max`.
pub fn pressure_by_orbits<T: Real>(model: &Model<T>, pot: &[T], n_max: usize) -> Result<T> {
    if n_max < 3 {
        return Err(Error::Config("n_max must be at least 3".into()));
    }
    if pot.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: pot.len() });
    }
    let zero = vec![T::zero(); model.rank()];
    let triv = CharacterLabel::trivial(model.holonomy.group);
    let mut hs = Vec::new();
    let mut ys = Vec::new();
    for n in (n_max - 2..=n_max).rev() {
        let z = orbit_sum(model, pot, &zero, &triv, n)?.value.re;
        if !(z > T::zero()) {
            return Err(Error::NoConvergence("no periodic points".into()));
        }
        // Neville in h² with h = n^{-1/2} extrapolates linearly in 1/n.
        hs.push((T::one() / r::<T>(n as f64)).sqrt());
        ys.push(C::new(z.ln() / r::<T>(n as f64), T::zero()));
    }
    Ok(richardson(&hs, &ys).0.re)
}

/// Leading twisted eigenvalue from the ratio `Z_{n+1} / Z_n` of orbit sums of
/// the normalized potential `-τ`, at `n = n_max - 1`.
pub fn kappa_by_orbits<T: Real>(model: &Model<T>, v: &[T], mu: &CharacterLabel, n_max: usize) -> Result<C<T>> {
    if n_max < 3 {
        return Err(Error::Config("n_max must be at least 3".into()));
    }
    let pot: Vec<T> = model.cocycle.tau.iter().map(|&t| -t).collect();
    let z: Vec<C<T>> = (n_max - 2..=n_max)
        .map(|n| orbit_sum(model, &pot, v, mu, n).map(|o| o.value))
        .collect::<Result<_>>()?;
    let k1 = z[1] / z[0];
    let k2 = z[2] / z[1];
    if cabs(k2 - k1) > r::<T>(1e-3) * cabs(k2).max(r(1e-12)) {
        return Err(Error::NoConvergence("orbit-sum ratios have not stabilized".into()));
    }
    Ok(k2)
}

/// `(Lⁿ H)(w)` by summing over the length-`n` words `b` with `b w` admissible,
/// using `e^{-(1+a)τ_n} h₀(bx)/h₀(x) e^{i⟨v, K_n⟩} μ(ϑⁿ)⁻¹`.
pub fn iterate_by_preimages<T: Real>(model: &Model<T>, params: &OperatorParams<T>, h: &[C<T>], n: usize) -> Result<Vec<C<T>>> {
    if h.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: h.len() });
    }
    check_budget(model.spec.n, n, DEFAULT_BUDGET)?;
    let kc = model.cocycle.k_coords_table();
    let space = &model.space;
    let prefixes = all_words(model.spec.n, n);
    let iu = C::new(T::zero(), T::one());
    let out: Vec<C<T>> = space
        .windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut s = CompensatedComplexSum::default();
            for b in &prefixes {
                let mut word = b.clone();
                word.extend_from_slice(&w.0);
                if !model.spec.is_admissible(&word) {
                    continue;
                }
                let idx = space.windows_of(&word).expect("admissible");
                let pre = &idx[..n];
                let mut e = T::zero();
                let mut ph = T::zero();
                for &j in pre {
                    e += -(T::one() + params.a) * model.cocycle.tau[j];
                    for (vd, kd) in params.v.iter().zip(&kc[j]) {
                        ph += *vd * *kd;
                    }
                }
                let first = if n == 0 { i } else { pre[0] };
                let hol = model.holonomy.product_of(pre);
                let wt = cexp(C::new(e, T::zero()) + iu * ph) * evaluate_unchecked(&params.mu, &hol).conj()
                    * (model.rpf.h[first] / model.rpf.h[i]);
                s.add(wt * h[first]);
            }
            s.value()
        })
        .collect();
    Ok(out)
}

fn all_words(n_sym: usize, len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|w| {
                (0..n_sym as u8).map(move |a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Markov data of the equilibrium state of `-τ` on windows of a refinement
/// depth, from power iteration on `A(W, W') = e^{-τ(W)} 1[W → W']`.
#[derive(Clone, Debug)]
pub struct CylinderWeights<T: Real> {
    /// Window space of the refinement depth.
    pub space: WindowSpace,
    /// `τ` per refined window.
    pub tau: Vec<T>,
    /// Model window of each refined window.
    pub coarse: Vec<usize>,
    /// Perron root.
    pub rho: T,
    /// Left Perron vector.
    pub left: Vec<T>,
    /// Right Perron vector, with `left · right = 1`.
    pub right: Vec<T>,
}

impl<T: Real> CylinderWeights<T> {
    /// Builds the weights at `depth ≥` model depth.
    pub fn new(model: &Model<T>, depth: usize) -> Result<Self> {
        if depth < model.cocycle.depth {
            return Err(Error::DepthMismatch { requested: depth, cocycle: model.cocycle.depth });
        }
        let space = WindowSpace::new(&model.spec, depth);
        let kd = model.cocycle.depth + 1;
        let coarse: Vec<usize> = space
            .windows
            .iter()
            .map(|w| model.space.index_of(&w.0[..kd]).expect("prefix admissible"))
            .collect();
        let tau: Vec<T> = coarse.iter().map(|&c| model.cocycle.tau[c]).collect();
        let n = space.dim();
        let wt: Vec<T> = tau.iter().map(|&t| (-t).exp()).collect();
        let apply = |x: &[T]| -> Vec<T> {
            (0..n).map(|w| wt[w] * space.succs[w].iter().fold(T::zero(), |s, &j| s + x[j])).collect()
        };
        let apply_t = |x: &[T]| -> Vec<T> {
            (0..n).map(|j| space.preds[j].iter().fold(T::zero(), |s, &w| s + x[w] * wt[w])).collect()
        };
        let (rho, right) = power(apply, n)?;
        let (_, left) = power(apply_t, n)?;
        let lr = left.iter().zip(&right).fold(T::zero(), |s, (a, b)| s + *a * *b);
        let left = left.into_iter().map(|x| x / lr).collect();
        Ok(CylinderWeights { space, tau, coarse, rho, left, right })
    }
}

/// Perron pair of a positive operator by power iteration on `(I + A)/2`,
/// which is aperiodic for irreducible `A`.
fn power<T: Real, F: Fn(&[T]) -> Vec<T>>(apply: F, n: usize) -> Result<(T, Vec<T>)> {
    let mut x = vec![T::one() / r::<T>(n as f64); n];
    for _ in 0..2_000_000 {
        let ax = apply(&x);
        let y: Vec<T> = x.iter().zip(&ax).map(|(a, b)| (*a + *b) / r(2.0)).collect();
        let s = y.iter().fold(T::zero(), |a, &b| a + b);
        let y: Vec<T> = y.into_iter().map(|v| v / s).collect();
        let diff = x.iter().zip(&y).fold(T::zero(), |a, (p, q)| a.max((*p - *q).abs()));
        x = y;
        if diff <= r::<T>(8.0) * T::EPSILON {
            let ax = apply(&x);
            let rho = ax.iter().fold(T::zero(), |a, &b| a + b);
            return Ok((rho, x));
        }
    }
    Err(Error::NoConvergence("power iteration".into()))
}

/// Cylinder-enumeration value of `J_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CylinderValue<T: Real> {
    /// `J_t`.
    pub value: C<T>,
    /// Enumerated cylinders.
    pub cylinders: u64,
}

/// `J_t` by enumerating the cylinders `[W₀ … W_n]` at refinement depth
/// `depth` with Markov weights `l(W₀) e^{-τ_n} r(W_n) / ρⁿ`, using the same
/// time window as the series route.
pub fn correlation_by_cylinders<T: Real>(
    model: &Model<T>,
    q: &MixingQuery<T>,
    t: T,
    depth: usize,
    budget: u64,
) -> Result<CylinderValue<T>> {
    let kern = PairKernel::new(model, q);
    let zero = C::new(T::zero(), T::zero());
    if kern.prefactor == zero {
        return Ok(CylinderValue { value: zero, cylinders: 0 });
    }
    let cw = CylinderWeights::new(model, depth)?;
    let kc = model.cocycle.k_coords_table();
    let y = q.target_point(t);
    let limit = y[0] - kern.shift[0] + kern.time_window();
    let phase: Vec<C<T>> = model.holonomy.theta.iter().map(|th| evaluate_unchecked(&q.psi1.mu, th).conj()).collect();

    struct Frame<T: Real> {
        w: usize,
        weight: C<T>,
        k: Vec<T>,
    }
    let run = |start: usize| -> Result<(CompensatedComplexSum<T>, u64)> {
        let c0 = cw.coarse[start];
        let mut acc = CompensatedComplexSum::default();
        let mut count = 0u64;
        let w0 = C::new(cw.left[start] * q.psi2.f[c0], T::zero());
        let mut stack = vec![Frame { w: start, weight: w0, k: vec![T::zero(); model.rank()] }];
        while let Some(fr) = stack.pop() {
            count += 1;
            if count > budget {
                return Err(Error::CombinatorialBlowup(count));
            }
            let c = cw.coarse[fr.w];
            let z: Vec<T> = y.iter().zip(&fr.k).map(|(a, b)| *a - *b).collect();
            acc.add(fr.weight * (cw.right[fr.w] * q.psi1.f[c] * kern.c_at(&z)));
            let nk: Vec<T> = fr.k.iter().zip(&kc[c]).map(|(a, b)| *a + *b).collect();
            if nk[0] > limit {
                continue;
            }
            let step = fr.weight * phase[c] * ((-cw.tau[fr.w]).exp() / cw.rho);
            for &j in &cw.space.succs[fr.w] {
                stack.push(Frame { w: j, weight: step, k: nk.clone() });
            }
        }
        Ok((acc, count))
    };
    let parts: Vec<Result<(CompensatedComplexSum<T>, u64)>> = (0..cw.space.dim()).into_par_iter().map(run).collect();
    let mut total = CompensatedComplexSum::default();
    let mut cylinders = 0u64;
    for p in parts {
        let (s, c) = p?;
        total.add(s.value());
        cylinders += c;
        if cylinders > budget {
            return Err(Error::CombinatorialBlowup(cylinders));
        }
    }
    Ok(CylinderValue { value: total.value() * kern.prefactor, cylinders })
}
