//! Suspension-flow correlations `J_t(Ψ₁, Ψ₂)` by the exact symbolic series
//! and by Fourier inversion of the resolvent, and the local-mixing limit.
//!
//! Test functions are `Ψ(x, ξ, m) = f(x) ω(ξ) μ(m) w₁ w̄₂` with `ξ` in
//! ψ-adapted coordinates and a Gaussian `ω`, so the `ξ`-correlation
//! `C(z) = ∫ ω₁(ξ + z) ω₂(ξ) dξ` and its transform are closed-form. With
//! `y = (t, r(t) 𝗎)`,
//!
//! `J_t = (c₁c₂/ν(τ)) δ_{μ₁μ₂=1} Σ_k E[f₂(x) f₁(σᵏx) μ₁(ϑᵏ(x))⁻¹ C(y - K_k(x))]`
//!
//! under the equilibrium state, and the Fourier route evaluates
//! `(2π)^{-rank} ∫ Ĉ(-v) e^{-i⟨v, y⟩} G(v) dv` with
//! `G(v) = Σ_w gibbs(w) f₁(w) ((I - L_{v,μ₁})⁻¹ f₂)(w)` along the contour
//! `Im v₀ = η > 0`, which avoids the pole of the resolvent at zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{profile_ft, rate_function_i, SpectralExpansion};
use crate::holonomy::{evaluate_unchecked, CharacterLabel};
use crate::model::Model;
use crate::scalar::{cabs, cexp, f, r, C, CompensatedComplexSum, Real};
use crate::thermo::suspension_mass;
use crate::transfer::OperatorFamily;

/// Gaussian tails are cut at this many standard deviations (`e^{-37}`).
pub const GAUSS_CUT: f64 = 8.6;

/// `ω(ξ) = amplitude · Π_d exp(-(ξ_d - center_d)² / (2 width_d²))` in
/// ψ-adapted coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GaussianBump<T: Real> {
    /// Peak value.
    pub amplitude: T,
    /// Center.
    pub center: Vec<T>,
    /// Standard deviation per coordinate.
    pub width: Vec<T>,
}

impl<T: Real> GaussianBump<T> {
    /// Unit-amplitude bump centred at zero.
    pub fn isotropic(rank: usize, width: T) -> Self {
        GaussianBump { amplitude: T::one(), center: vec![T::zero(); rank], width: vec![width; rank] }
    }

    /// `∫ ω`.
    pub fn integral(&self) -> T {
        self.width.iter().fold(self.amplitude, |a, &s| a * (T::two_pi()).sqrt() * s)
    }

    /// `ω(ξ)`.
    pub fn eval(&self, xi: &[T]) -> T {
        let mut e = T::zero();
        for ((x, c), s) in xi.iter().zip(&self.center).zip(&self.width) {
            e += (*x - *c) * (*x - *c) / (r::<T>(2.0) * *s * *s);
        }
        self.amplitude * (-e).exp()
    }

    /// `ω̂(v) = ∫ e^{-i⟨ξ, v⟩} ω(ξ) dξ`.
    pub fn hat(&self, v: &[C<T>]) -> C<T> {
        let iu = C::new(T::zero(), T::one());
        let mut e = C::new(T::zero(), T::zero());
        for ((x, c), s) in v.iter().zip(&self.center).zip(&self.width) {
            e += -iu * *x * *c - *x * *x * (*s * *s / r(2.0));
        }
        cexp(e) * self.integral()
    }
}

/// One factor `Ψ = f ⊗ ω ⊗ ⟨μ(·) w₁, w₂⟩` of a correlation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestFunction<T: Real> {
    /// Depth-`k` function, one value per window of the model.
    pub f: Vec<T>,
    /// Profile on `𝔞`.
    pub omega: GaussianBump<T>,
    /// Character.
    pub mu: CharacterLabel,
    /// Vectors `(w₁, w₂)` of the one-dimensional representation.
    pub w: (C<T>, C<T>),
}

impl<T: Real> TestFunction<T> {
    /// `f ≡ 1`, trivial character, unit vectors.
    pub fn constant(model: &Model<T>, omega: GaussianBump<T>) -> Self {
        let one = C::new(T::one(), T::zero());
        TestFunction {
            f: vec![T::one(); model.dim()],
            omega,
            mu: CharacterLabel::trivial(model.holonomy.group),
            w: (one, one),
        }
    }

    /// `w₁ w̄₂`.
    pub fn coefficient(&self) -> C<T> {
        self.w.0 * self.w.1.conj()
    }

    /// Suspension mass `M⁺(Ψ)`.
    pub fn mass(&self, model: &Model<T>) -> C<T> {
        suspension_mass(&model.rpf, model.nu_tau, &self.f, self.omega.integral(), &self.mu, self.w)
    }
}

/// Drift profile `r(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RProfile {
    /// `r ≡ 0`.
    Zero,
    /// `r(t) = √(ℓ t)`.
    Sqrt {
        /// `ℓ`.
        ell: f64,
    },
    /// `r(t) = t^{1/3}`, so `ℓ = 0`.
    CubeRoot,
    /// `r(t) = t^{2/3}`, so `ℓ = ∞`.
    TwoThirds,
}

impl RProfile {
    /// `r(t)`.
    pub fn eval<T: Real>(&self, t: T) -> T {
        match self {
            RProfile::Zero => T::zero(),
            RProfile::Sqrt { ell } => (r::<T>(*ell) * t).sqrt(),
            RProfile::CubeRoot => t.cbrt(),
            RProfile::TwoThirds => t.powf(r(2.0 / 3.0)),
        }
    }

    /// `ℓ = lim r(t)²/t`.
    pub fn ell(&self) -> f64 {
        match self {
            RProfile::Zero | RProfile::CubeRoot => 0.0,
            RProfile::Sqrt { ell } => *ell,
            RProfile::TwoThirds => f64::INFINITY,
        }
    }
}

/// A correlation query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MixingQuery<T: Real> {
    /// Observed function.
    pub psi1: TestFunction<T>,
    /// Reference function.
    pub psi2: TestFunction<T>,
    /// Drift `𝗎 ∈ ker ψ` in the kernel basis (`rank - 1` entries).
    pub u_drift: Vec<T>,
    /// Drift profile.
    pub profile: RProfile,
    /// Times.
    pub t_grid: Vec<T>,
}

impl<T: Real> MixingQuery<T> {
    /// `y = (t, r(t) 𝗎)` in ψ-adapted coordinates.
    pub fn target_point(&self, t: T) -> Vec<T> {
        let rt = self.profile.eval(t);
        std::iter::once(t).chain(self.u_drift.iter().map(|&u| rt * u)).collect()
    }

    /// `𝗎` in ψ-adapted coordinates.
    pub fn u_coords(&self) -> Vec<T> {
        std::iter::once(T::zero()).chain(self.u_drift.iter().copied()).collect()
    }

    /// Geometric grid of `n` points from `lo` to `hi`.
    pub fn geometric_grid(lo: T, hi: T, n: usize) -> Vec<T> {
        if n == 1 {
            return vec![lo];
        }
        let q = (hi / lo).ln() / r::<T>((n - 1) as f64);
        (0..n).map(|i| lo * (q * r::<T>(i as f64)).exp()).collect()
    }

    fn validate(&self, model: &Model<T>) -> Result<()> {
        let rank = model.rank();
        let dim = model.dim();
        for psi in [&self.psi1, &self.psi2] {
            if psi.f.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: psi.f.len() });
            }
            if psi.omega.center.len() != rank || psi.omega.width.len() != rank {
                return Err(Error::DimensionMismatch { expected: rank, found: psi.omega.center.len() });
            }
            if psi.omega.width.iter().any(|&s| !(s > T::zero())) {
                return Err(Error::Config("bump widths must be positive".into()));
            }
            if psi.mu.group() != model.holonomy.group {
                return Err(Error::Config("character does not match the holonomy group".into()));
            }
        }
        if self.u_drift.len() + 1 != rank {
            return Err(Error::DimensionMismatch { expected: rank - 1, found: self.u_drift.len() });
        }
        Ok(())
    }
}

/// The `ξ`-correlation `C(z) = ∫ ω₁(ξ + z) ω₂(ξ) dξ` of two Gaussian bumps and
/// the constant prefactor of `J_t`.
#[derive(Clone, Debug)]
pub struct PairKernel<T: Real> {
    /// `c₁ c₂ / ν(τ)`, or zero when `μ₁ μ₂ ≠ 1`.
    pub prefactor: C<T>,
    /// `center₁ - center₂`.
    pub shift: Vec<T>,
    /// `width₁² + width₂²`.
    pub var: Vec<T>,
    /// Peak value of `C`.
    pub peak: T,
    /// `∫ω₁ ∫ω₂`.
    pub mass: T,
}

impl<T: Real> PairKernel<T> {
    /// Kernel of a query.
    pub fn new(model: &Model<T>, q: &MixingQuery<T>) -> Self {
        let (o1, o2) = (&q.psi1.omega, &q.psi2.omega);
        let var: Vec<T> = o1.width.iter().zip(&o2.width).map(|(a, b)| *a * *a + *b * *b).collect();
        let mut peak = o1.amplitude * o2.amplitude;
        for ((a, b), v) in o1.width.iter().zip(&o2.width).zip(&var) {
            peak *= (T::two_pi() * *a * *a * *b * *b / *v).sqrt();
        }
        let pairs = q.psi1.mu.product(&q.psi2.mu).is_trivial();
        let prefactor = if pairs {
            q.psi1.coefficient() * q.psi2.coefficient() / model.nu_tau
        } else {
            C::new(T::zero(), T::zero())
        };
        PairKernel {
            prefactor,
            shift: o1.center.iter().zip(&o2.center).map(|(a, b)| *a - *b).collect(),
            var,
            peak,
            mass: o1.integral() * o2.integral(),
        }
    }

    /// `C(z)`.
    pub fn c_at(&self, z: &[T]) -> T {
        let mut e = T::zero();
        for ((x, s), v) in z.iter().zip(&self.shift).zip(&self.var) {
            e += (*x - *s) * (*x - *s) / (r::<T>(2.0) * *v);
        }
        self.peak * (-e).exp()
    }

    /// Axis factor of `Ĉ(-v) = mass · Π_d exp(i v_d shift_d - ½ var_d v_d²)`.
    pub fn c_hat_neg_axis(&self, d: usize, v: C<T>) -> C<T> {
        let iu = C::new(T::zero(), T::one());
        cexp(iu * v * self.shift[d] - v * v * (self.var[d] / r(2.0)))
    }

    /// Pruning window in the time coordinate.
    pub fn time_window(&self) -> T {
        r::<T>(GAUSS_CUT) * self.var[0].sqrt()
    }
}

/// Forward Markov transitions of the equilibrium state on windows:
/// `P(j → i) = gibbs_i L[i, j] / gibbs_j`.
#[derive(Clone, Debug)]
pub struct ForwardChain<T: Real> {
    /// Successors with transition probabilities.
    pub succ: Vec<Vec<(usize, T)>>,
}

impl<T: Real> ForwardChain<T> {
    /// Chain of a model.
    pub fn new(model: &Model<T>) -> Self {
        let fam = OperatorFamily::new(model, T::zero());
        let g = &model.rpf.gibbs;
        let mut succ = vec![Vec::new(); model.dim()];
        for &(i, j, w) in &fam.base {
            succ[j].push((i, g[i] * w / g[j]));
        }
        for s in &mut succ {
            s.sort_by_key(|p| p.0);
        }
        ForwardChain { succ }
    }
}

/// Series evaluation with its pruning diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SeriesValue<T: Real> {
    /// `J_t` (complex in general; real for real `w`).
    pub value: C<T>,
    /// Bound on the pruned contributions.
    pub tail_bound: T,
    /// Visited cylinders.
    pub nodes: u64,
    /// Deepest level reached.
    pub max_level: usize,
}

#[derive(Clone)]
struct Node<T: Real> {
    w: usize,
    weight: C<T>,
    k: Vec<T>,
    level: usize,
}

struct Walk<'a, T: Real> {
    chain: &'a ForwardChain<T>,
    kc: &'a [Vec<T>],
    phase: &'a [C<T>],
    f1: &'a [T],
    kern: &'a PairKernel<T>,
    y: &'a [T],
    limit: T,
    k_max: usize,
    tail_unit: T,
}

struct Partial<T: Real> {
    sum: CompensatedComplexSum<T>,
    tail: T,
    nodes: u64,
    max_level: usize,
    overflow: bool,
}

impl<T: Real> Walk<'_, T> {
    fn visit(&self, n: &Node<T>, acc: &mut Partial<T>, out: &mut Vec<Node<T>>) {
        acc.nodes += 1;
        acc.max_level = acc.max_level.max(n.level);
        let z: Vec<T> = self.y.iter().zip(&n.k).map(|(a, b)| *a - *b).collect();
        acc.sum.add(n.weight * (self.f1[n.w] * self.kern.c_at(&z)));
        let next_k: Vec<T> = n.k.iter().zip(&self.kc[n.w]).map(|(a, b)| *a + *b).collect();
        if next_k[0] > self.limit {
            acc.tail += cabs(n.weight) * self.tail_unit;
            return;
        }
        if n.level == self.k_max {
            acc.overflow = true;
            return;
        }
        let wphase = n.weight * self.phase[n.w];
        for &(i, p) in self.chain.succ[n.w].iter().rev() {
            out.push(Node { w: i, weight: wphase * p, k: next_k.clone(), level: n.level + 1 });
        }
    }

    fn run(&self, root: Node<T>) -> Partial<T> {
        let mut acc = Partial { sum: Default::default(), tail: T::zero(), nodes: 0, max_level: 0, overflow: false };
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            self.visit(&n, &mut acc, &mut stack);
        }
        acc
    }
}

/// Exact series for `J_t` over cylinders of the equilibrium state, pruned
/// once the accumulated roof passes the time window of `C`.
pub fn correlation_jt_series<T: Real>(model: &Model<T>, q: &MixingQuery<T>, t: T, k_max: usize) -> Result<SeriesValue<T>> {
    q.validate(model)?;
    let kern = PairKernel::new(model, q);
    let zero = C::new(T::zero(), T::zero());
    if kern.prefactor == zero {
        return Ok(SeriesValue { value: zero, tail_bound: T::zero(), nodes: 0, max_level: 0 });
    }
    let chain = ForwardChain::new(model);
    let kc = model.cocycle.k_coords_table();
    let phase: Vec<C<T>> = model.holonomy.theta.iter().map(|th| evaluate_unchecked(&q.psi1.mu, th).conj()).collect();
    let y = q.target_point(t);
    let win = kern.time_window();
    let tau_min = model.cocycle.tau.iter().fold(T::MAX, |a, &b| a.min(b));
    let s0 = kern.var[0].sqrt();
    let f1max = q.psi1.f.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let tail_unit = f1max * kern.peak * (-win * win / (r::<T>(2.0) * s0 * s0)).exp() * (T::one() + s0 * s0 / (win * tau_min));
    let walk = Walk {
        chain: &chain,
        kc: &kc,
        phase: &phase,
        f1: &q.psi1.f,
        kern: &kern,
        y: &y,
        limit: y[0] - kern.shift[0] + win,
        k_max,
        tail_unit,
    };

    // Breadth-first expansion to a frontier wide enough to share out.
    let mut head = Partial { sum: Default::default(), tail: T::zero(), nodes: 0, max_level: 0, overflow: false };
    let mut frontier: Vec<Node<T>> = (0..model.dim())
        .filter(|&w| model.rpf.gibbs[w] * q.psi2.f[w] != T::zero())
        .map(|w| Node { w, weight: C::new(model.rpf.gibbs[w] * q.psi2.f[w], T::zero()), k: vec![T::zero(); model.rank()], level: 0 })
        .collect();
    while !frontier.is_empty() && frontier.len() < 512 {
        let mut next = Vec::new();
        for n in &frontier {
            let mut kids = Vec::new();
            walk.visit(n, &mut head, &mut kids);
            kids.reverse();
            next.extend(kids);
        }
        frontier = next;
    }
    let parts: Vec<Partial<T>> = frontier.into_par_iter().map(|n| walk.run(n)).collect();
    let mut sum = head.sum;
    let mut tail = head.tail;
    let mut nodes = head.nodes;
    let mut max_level = head.max_level;
    let mut overflow = head.overflow;
    for p in parts {
        sum.add(p.sum.value());
        tail += p.tail;
        nodes += p.nodes;
        max_level = max_level.max(p.max_level);
        overflow |= p.overflow;
    }
    if overflow {
        return Err(Error::SeriesNotTerminated(k_max));
    }
    let pre = kern.prefactor;
    Ok(SeriesValue { value: sum.value() * pre, tail_bound: tail * cabs(pre), nodes, max_level })
}

/// Trapezoid grid for the Fourier route: axis 0 runs along `Im v₀ = η`, the
/// other axes along the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FourierGrid<T: Real> {
    /// Contour height.
    pub eta: T,
    /// Step per axis.
    pub step: Vec<T>,
    /// Half-extent per axis.
    pub extent: Vec<T>,
}

impl<T: Real> FourierGrid<T> {
    /// Grid resolving every `t ≤ t_max` of a query; `refine` divides all
    /// steps.
    pub fn for_query(model: &Model<T>, q: &MixingQuery<T>, t_max: T, refine: T) -> Self {
        let kern = PairKernel::new(model, q);
        let rank = model.rank();
        let cut = r::<T>(GAUSS_CUT);
        let eta = (r::<T>(3.0) / t_max).min(r(0.1));
        let mut step = vec![(eta / r(7.0)).min(r::<T>(0.5) / t_max)];
        let mut extent = vec![cut / kern.var[0].sqrt()];
        let kc = model.cocycle.k_coords_table();
        let a = model.nu_tau;
        let r_max = q.profile.eval(t_max);
        for d in 1..rank {
            let second: T = model.rpf.gibbs.iter().zip(&kc).fold(T::zero(), |s, (&g, k)| s + g * k[d] * k[d]);
            let spread = (t_max * second / a).sqrt();
            let reach = r_max * q.u_drift[d - 1].abs() + kern.shift[d].abs() + cut * (kern.var[d].sqrt() + spread);
            let alias = T::two_pi() / (r::<T>(4.0) * reach);
            let strip = r::<T>(0.15) * (a * eta / (second / r(2.0))).sqrt();
            step.push(alias.min(strip));
            extent.push(cut / kern.var[d].sqrt());
        }
        for h in &mut step {
            *h /= refine;
        }
        FourierGrid { eta, step, extent }
    }

    /// Nodes per axis.
    pub fn counts(&self) -> Vec<usize> {
        self.step
            .iter()
            .zip(&self.extent)
            .map(|(h, e)| 2 * (*e / *h).ceil().to_usize().unwrap_or(0) + 1)
            .collect()
    }

    /// Total number of nodes.
    pub fn size(&self) -> usize {
        self.counts().iter().product()
    }

    fn axis(&self, d: usize) -> Vec<C<T>> {
        let n = self.counts()[d];
        let half = (n / 2) as f64;
        (0..n)
            .map(|m| {
                let x = self.step[d] * r::<T>(m as f64 - half);
                C::new(x, if d == 0 { self.eta } else { T::zero() })
            })
            .collect()
    }
}


/// Fourier-route values with the fine/half-resolution disagreement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FourierValue<T: Real> {
    /// `J_t` on the full grid.
    pub value: C<T>,
    /// `|J_fine - J_coarse|`, the coarse grid using every other node.
    pub error_estimate: T,
}

/// Gaussian elimination with partial pivoting on a small dense system stored
/// row-major; returns `None` when singular.
fn solve_dense<T: Real>(a: &mut [C<T>], b: &mut [C<T>], n: usize) -> Option<()> {
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if cabs(a[row * n + col]) > cabs(a[piv * n + col]) {
                piv = row;
            }
        }
        if cabs(a[piv * n + col]) == T::zero() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let m = a[row * n + col] / d;
            if m == C::new(T::zero(), T::zero()) {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= m * v;
            }
            let bc = b[col];
            b[row] -= m * bc;
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Some(())
}

/// `G(v) = Σ_w gibbs(w) f₁(w) ((I - L_{v,μ})⁻¹ f₂)(w)`.
pub fn resolvent_pairing<T: Real>(
    fam: &OperatorFamily<T>,
    gibbs: &[T],
    f1: &[T],
    f2: &[T],
    mu: &CharacterLabel,
    v: &[C<T>],
) -> Result<C<T>> {
    let n = fam.dim;
    let w = fam.column_weights(v, mu);
    let mut a = vec![C::new(T::zero(), T::zero()); n * n];
    for i in 0..n {
        a[i * n + i] = C::new(T::one(), T::zero());
    }
    for &(i, j, b) in &fam.base {
        a[i * n + j] -= w[j] * b;
    }
    let mut x: Vec<C<T>> = f2.iter().map(|&y| C::new(y, T::zero())).collect();
    solve_dense(&mut a, &mut x, n).ok_or(Error::SingularResolvent(0.0))?;
    let mut s = C::new(T::zero(), T::zero());
    for i in 0..n {
        s += x[i] * (gibbs[i] * f1[i]);
    }
    Ok(s)
}

/// Fourier-route `J_t` at several points `y` sharing one grid.
pub fn correlation_fourier_points<T: Real>(
    model: &Model<T>,
    q: &MixingQuery<T>,
    grid: &FourierGrid<T>,
    ys: &[Vec<T>],
) -> Result<Vec<FourierValue<T>>> {
    q.validate(model)?;
    let kern = PairKernel::new(model, q);
    let zero = C::new(T::zero(), T::zero());
    if kern.prefactor == zero {
        return Ok(ys.iter().map(|_| FourierValue { value: zero, error_estimate: T::zero() }).collect());
    }
    let rank = model.rank();
    let fam = OperatorFamily::new(model, T::zero());
    let axes: Vec<Vec<C<T>>> = (0..rank).map(|d| grid.axis(d)).collect();
    let counts: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let iu = C::new(T::zero(), T::one());
    // Per-axis factors h_d Ĉ_d(-v_d) e^{-i v_d y_d}, per query point.
    let factors: Vec<Vec<Vec<C<T>>>> = ys
        .iter()
        .map(|y| {
            (0..rank)
                .map(|d| {
                    axes[d]
                        .iter()
                        .map(|&v| kern.c_hat_neg_axis(d, v) * cexp(-iu * v * y[d]) * grid.step[d])
                        .collect()
                })
                .collect()
        })
        .collect();
    let inner: usize = counts[1..].iter().product();
    let parity = |m: usize, half: usize| (m + half) % 2 == 0;
    let rows: Vec<Result<Vec<(C<T>, C<T>)>>> = (0..counts[0])
        .into_par_iter()
        .map(|m0| {
            let mut acc = vec![(zero, zero); ys.len()];
            let mut idx = vec![0usize; rank];
            idx[0] = m0;
            let mut v = vec![zero; rank];
            for flat in 0..inner {
                let mut rem = flat;
                for d in (1..rank).rev() {
                    idx[d] = rem % counts[d];
                    rem /= counts[d];
                }
                for d in 0..rank {
                    v[d] = axes[d][idx[d]];
                }
                let g = resolvent_pairing(&fam, &model.rpf.gibbs, &q.psi1.f, &q.psi2.f, &q.psi1.mu, &v)?;
                let coarse = (0..rank).all(|d| parity(idx[d], counts[d] / 2));
                for (k, fac) in factors.iter().enumerate() {
                    let mut term = g;
                    for d in 0..rank {
                        term *= fac[d][idx[d]];
                    }
                    acc[k].0 += term;
                    if coarse {
                        acc[k].1 += term;
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let norm = kern.prefactor * kern.mass * (T::two_pi()).powi(-(rank as i32));
    let mut fine: Vec<CompensatedComplexSum<T>> = vec![Default::default(); ys.len()];
    let mut coarse: Vec<CompensatedComplexSum<T>> = vec![Default::default(); ys.len()];
    for row in rows {
        for (k, (a, b)) in row?.into_iter().enumerate() {
            fine[k].add(a);
            coarse[k].add(b);
        }
    }
    let two = r::<T>(2.0).powi(rank as i32);
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| {
            let v = a.value() * norm;
            let c = b.value() * norm * two;
            FourierValue { value: v, error_estimate: cabs(v - c) }
        })
        .collect())
}

/// Fourier-route `J_t` on an automatic grid; fails when the half-resolution
/// grid disagrees by more than `tol` relative.
pub fn correlation_jt_fourier<T: Real>(model: &Model<T>, q: &MixingQuery<T>, t: T, tol: T) -> Result<FourierValue<T>> {
    let grid = FourierGrid::for_query(model, q, t, T::one());
    let v = correlation_fourier_points(model, q, &grid, &[q.target_point(t)])?.remove(0);
    if v.error_estimate > tol * cabs(v.value) {
        return Err(Error::QuadratureUnconverged { diff: f(v.error_estimate), tol: f(tol * cabs(v.value)) });
    }
    Ok(v)
}

/// One row of the limit report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LimitRow<T: Real> {
    /// Time.
    pub t: T,
    /// `J_t`.
    pub jt: T,
    /// `t^{(rank-1)/2} J_t`.
    pub scaled: T,
    /// Limit value.
    pub target: T,
    /// `scaled / target - 1`, or `scaled` itself when the target is zero.
    pub deviation: T,
    /// Quadrature error estimate of `J_t`.
    pub error_estimate: T,
}

/// Local-mixing limit check along the query's time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LimitReport<T: Real> {
    /// Rows per time.
    pub rows: Vec<LimitRow<T>>,
    /// `(2π)^{-(rank-1)/2} 𝔠^{-1/2} e^{-ℓ I(𝗎)} M⁺(Ψ₁) M⁺(Ψ₂)` (real part).
    pub target: T,
    /// `I(𝗎)`.
    pub rate: T,
    /// `ℓ`.
    pub ell: f64,
    /// Scaled value at the largest time.
    pub plateau: T,
    /// Deviation of the plateau.
    pub plateau_deviation: T,
    /// Whether `|deviation|` beyond the quadrature error decreases along the grid.
    pub monotone: bool,
    /// `f_t(0)` at the largest time, which tends to `e^{-ℓ I(𝗎)}`.
    pub profile_at_end: T,
}

/// Evaluates `t^{(rank-1)/2} J_t` on the query's grid by the Fourier route and
/// compares it with the limit assembled from `M⁺`, `𝔠` and `I`.
pub fn verify_limit<T: Real>(model: &Model<T>, exp: &SpectralExpansion<T>, q: &MixingQuery<T>, refine: T) -> Result<LimitReport<T>> {
    let rank = model.rank();
    let t_max = q.t_grid.iter().fold(T::zero(), |a, &b| a.max(b));
    let grid = FourierGrid::for_query(model, q, t_max, refine);
    let ys: Vec<Vec<T>> = q.t_grid.iter().map(|&t| q.target_point(t)).collect();
    let vals = correlation_fourier_points(model, q, &grid, &ys)?;
    let u = q.u_coords();
    let rate = rate_function_i(exp, &u)?;
    let ell = q.profile.ell();
    let decay = if ell.is_infinite() {
        if rate > T::zero() {
            T::zero()
        } else {
            T::one()
        }
    } else {
        (-r::<T>(ell) * rate).exp()
    };
    let masses = q.psi1.mass(model) * q.psi2.mass(model);
    let power = r::<T>((rank as f64 - 1.0) / 2.0);
    let target = (masses * (T::two_pi().powf(-power) / exp.curvature_c.sqrt() * decay)).re;
    let rows: Vec<LimitRow<T>> = q
        .t_grid
        .iter()
        .zip(&vals)
        .map(|(&t, v)| {
            let scaled = t.powf(power) * v.value.re;
            let deviation = if target != T::zero() { scaled / target - T::one() } else { scaled };
            LimitRow { t, jt: v.value.re, scaled, target, deviation, error_estimate: v.error_estimate }
        })
        .collect();
    let last = rows.last().ok_or(Error::Config("empty time grid".into()))?;
    // Deviations within the quadrature error of the scaled value count as zero.
    let excess = |row: &LimitRow<T>| {
        let noise = if target != T::zero() { row.error_estimate * row.t.powf(power) / target.abs() } else { row.error_estimate };
        (row.deviation.abs() - noise).max(T::zero())
    };
    let monotone = rows.windows(2).all(|w| excess(&w[1]) <= excess(&w[0]));
    let profile_at_end = if rank >= 2 {
        profile_ft(exp, &u, q.profile.eval(last.t), last.t, &vec![T::zero(); rank]).unwrap_or(T::zero())
    } else {
        T::one()
    };
    Ok(LimitReport {
        target,
        rate,
        ell,
        plateau: last.scaled,
        plateau_deviation: last.deviation,
        monotone,
        profile_at_end,
        rows: rows.clone(),
    })
}

/// CSV rows `t,jt,scaled,target,deviation,error`.
pub fn limit_csv<T: Real>(rep: &LimitReport<T>) -> String {
    let mut s = String::from("t,jt,scaled,target,deviation,error\n");
    for row in &rep.rows {
        s.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e}\n",
            f(row.t),
            f(row.jt),
            f(row.scaled),
            f(row.target),
            f(row.deviation),
            f(row.error_estimate)
        ));
    }
    s
}
