//! Abelian holonomy groups `(Z/2)^p × T^q`, their elements, and their unitary
//! characters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, r, C, Real};

/// Shape of the holonomy group `(Z/2)^p × T^q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GroupSpec {
    /// Number of `Z/2` factors.
    pub p: usize,
    /// Torus dimension.
    pub q: usize,
}

/// Group element: a sign tuple and an angle tuple in `[0, 2π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GroupElement<T: Real> {
    /// Entries in `{+1, -1}`.
    pub signs: Vec<i8>,
    /// Angles reduced to `[0, 2π)`.
    pub angles: Vec<T>,
}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let two_pi = T::two_pi();
    let w = theta - two_pi * (theta / two_pi).floor();
    if w >= two_pi {
        w - two_pi
    } else {
        w
    }
}

impl<T: Real> GroupElement<T> {
    /// Identity of the given group.
    pub fn identity(group: GroupSpec) -> Self {
        GroupElement { signs: vec![1; group.p], angles: vec![T::zero(); group.q] }
    }

    /// Builds an element, reducing angles.
    pub fn new(signs: Vec<i8>, angles: Vec<T>) -> Self {
        GroupElement { signs, angles: angles.into_iter().map(wrap_angle).collect() }
    }

    /// Group shape of this element.
    pub fn group(&self) -> GroupSpec {
        GroupSpec { p: self.signs.len(), q: self.angles.len() }
    }

    /// Componentwise product.
    pub fn compose(&self, other: &Self) -> Self {
        GroupElement {
            signs: self.signs.iter().zip(&other.signs).map(|(a, b)| a * b).collect(),
            angles: self.angles.iter().zip(&other.angles).map(|(&a, &b)| wrap_angle(a + b)).collect(),
        }
    }

    /// Inverse element.
    pub fn inverse(&self) -> Self {
        GroupElement {
            signs: self.signs.clone(),
            angles: self.angles.iter().map(|&a| wrap_angle(-a)).collect(),
        }
    }
}

/// Label of a character: exponents on the sign factors and integer torus
/// frequencies.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct CharacterLabel {
    /// Exponents in `{0, 1}`.
    pub signs: Vec<u8>,
    /// Torus frequencies.
    pub freqs: Vec<i32>,
}

impl CharacterLabel {
    /// Trivial character of the given group.
    pub fn trivial(group: GroupSpec) -> Self {
        CharacterLabel { signs: vec![0; group.p], freqs: vec![0; group.q] }
    }

    /// Whether this is the trivial character.
    pub fn is_trivial(&self) -> bool {
        self.signs.iter().all(|&e| e == 0) && self.freqs.iter().all(|&n| n == 0)
    }

    /// Complex-conjugate character.
    pub fn conjugate(&self) -> Self {
        CharacterLabel { signs: self.signs.clone(), freqs: self.freqs.iter().map(|n| -n).collect() }
    }

    /// Pointwise product of characters.
    pub fn product(&self, other: &Self) -> Self {
        CharacterLabel {
            signs: self.signs.iter().zip(&other.signs).map(|(a, b)| (a + b) % 2).collect(),
            freqs: self.freqs.iter().zip(&other.freqs).map(|(a, b)| a + b).collect(),
        }
    }

    /// Group this label belongs to.
    pub fn group(&self) -> GroupSpec {
        GroupSpec { p: self.signs.len(), q: self.freqs.len() }
    }
}

/// `μ(m) = Π sign_j^{ε_j} · e^{i Σ n_l θ_l}`.
pub fn evaluate<T: Real>(mu: &CharacterLabel, m: &GroupElement<T>) -> Result<C<T>> {
    if mu.signs.len() != m.signs.len() {
        return Err(Error::DimensionMismatch { expected: mu.signs.len(), found: m.signs.len() });
    }
    if mu.freqs.len() != m.angles.len() {
        return Err(Error::DimensionMismatch { expected: mu.freqs.len(), found: m.angles.len() });
    }
    Ok(evaluate_unchecked(mu, m))
}

/// [`evaluate`] without the shape check.
#[inline]
pub fn evaluate_unchecked<T: Real>(mu: &CharacterLabel, m: &GroupElement<T>) -> C<T> {
    let mut sign = 1i8;
    for (e, s) in mu.signs.iter().zip(&m.signs) {
        if *e == 1 {
            sign *= *s;
        }
    }
    let mut phase = T::zero();
    for (n, th) in mu.freqs.iter().zip(&m.angles) {
        phase += r::<T>(*n as f64) * *th;
    }
    let z = cis(phase);
    if sign < 0 {
        -z
    } else {
        z
    }
}

/// All characters with torus frequencies in `[-max_freq, max_freq]`, sign
/// exponents varying fastest.
pub fn enumerate_characters(group: GroupSpec, max_freq: u32) -> Vec<CharacterLabel> {
    let width = 2 * max_freq as usize + 1;
    let total_freq = width.pow(group.q as u32);
    let mut out = Vec::with_capacity(total_freq << group.p);
    for fi in 0..total_freq {
        let mut freqs = Vec::with_capacity(group.q);
        let mut rem = fi;
        for _ in 0..group.q {
            freqs.push((rem % width) as i32 - max_freq as i32);
            rem /= width;
        }
        for si in 0..(1usize << group.p) {
            let signs = (0..group.p).map(|j| ((si >> j) & 1) as u8).collect();
            out.push(CharacterLabel { signs, freqs: freqs.clone() });
        }
    }
    out
}

/// `∫ μ(m) conj(μ'(m)) dm` for the normalized Haar measure, with the sign part
/// summed exactly and the torus part by an equispaced rule with `nodes` points
/// per circle (exact for frequency differences below `nodes`).
pub fn haar_inner<T: Real>(mu: &CharacterLabel, nu: &CharacterLabel, nodes: usize) -> Result<C<T>> {
    let g = mu.group();
    if g != nu.group() {
        return Err(Error::DimensionMismatch { expected: g.p + g.q, found: nu.signs.len() + nu.freqs.len() });
    }
    let mut acc = C::new(T::zero(), T::zero());
    let torus_points = nodes.pow(g.q as u32);
    let step = T::two_pi() / r::<T>(nodes as f64);
    for si in 0..(1usize << g.p) {
        let signs: Vec<i8> = (0..g.p).map(|j| if (si >> j) & 1 == 1 { -1 } else { 1 }).collect();
        for ti in 0..torus_points {
            let mut rem = ti;
            let mut angles = Vec::with_capacity(g.q);
            for _ in 0..g.q {
                angles.push(step * r::<T>((rem % nodes) as f64));
                rem /= nodes;
            }
            let m = GroupElement { signs: signs.clone(), angles };
            acc += evaluate_unchecked(mu, &m) * evaluate_unchecked(nu, &m).conj();
        }
    }
    let count = r::<T>(((1usize << g.p) * torus_points) as f64);
    Ok(acc / count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn character_examples() {
        let g = GroupSpec { p: 1, q: 1 };
        let m = GroupElement::new(vec![-1], vec![0.7_f64]);
        assert_eq!(evaluate(&CharacterLabel::trivial(g), &m).unwrap(), C::new(1.0, 0.0));
        let sign = CharacterLabel { signs: vec![1], freqs: vec![0] };
        assert!((evaluate(&sign, &m).unwrap() - C::new(-1.0, 0.0)).norm() < 1e-15);
        let rot = CharacterLabel { signs: vec![0], freqs: vec![2] };
        assert!((evaluate(&rot, &m).unwrap() - C::new(0.0, 1.4).exp()).norm() < 1e-15);
        let inv = evaluate(&rot, &m.inverse()).unwrap();
        assert!((inv - evaluate(&rot, &m).unwrap().conj()).norm() < 1e-14);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let m = GroupElement::new(vec![1, -1], vec![0.0_f64]);
        let mu = CharacterLabel { signs: vec![1], freqs: vec![0] };
        assert!(matches!(evaluate(&mu, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_characters(GroupSpec { p: 0, q: 0 }, 0).len(), 1);
        assert_eq!(enumerate_characters(GroupSpec { p: 2, q: 0 }, 5).len(), 4);
        assert_eq!(enumerate_characters(GroupSpec { p: 1, q: 1 }, 3).len(), 14);
        assert!(enumerate_characters(GroupSpec { p: 1, q: 1 }, 0)[0].is_trivial());
    }

    #[test]
    fn angle_composition_wraps() {
        let a = GroupElement::new(vec![], vec![1.0_f64]);
        let b = GroupElement::new(vec![], vec![5.5_f64]);
        let c = a.compose(&b);
        assert!((c.angles[0] - (6.5 - 2.0 * std::f64::consts::PI)).abs() < 1e-14);
        assert!((c.angles[0] - 0.2168146928204138).abs() < 1e-12);
    }
}
