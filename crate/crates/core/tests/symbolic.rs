//! Subshifts, window spaces, characters and calibrated cocycles.

use localmix::cocycle::calibrate;
use localmix::holonomy::{enumerate_characters, evaluate, haar_inner, CharacterLabel, GroupElement, GroupSpec};
use localmix::model::{Model, BUILTINS};
use localmix::sft::{SubshiftSpec, WindowSpace};
use localmix::Error;
use proptest::prelude::*;

fn mat_pow_sum(t: &[Vec<u8>], p: usize) -> (u64, u64) {
    let n = t.len();
    let mut m: Vec<Vec<u64>> = (0..n).map(|i| (0..n).map(|j| u64::from(i == j)).collect()).collect();
    for _ in 0..p {
        let mut q = vec![vec![0u64; n]; n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    q[i][j] += m[i][k] * t[k][j] as u64;
                }
            }
        }
        m = q;
    }
    let sum = m.iter().flatten().sum();
    let trace = (0..n).map(|i| m[i][i]).sum();
    (sum, trace)
}

fn specs() -> Vec<SubshiftSpec> {
    vec![
        SubshiftSpec::full(2),
        SubshiftSpec::full(3),
        SubshiftSpec::golden_mean(),
        SubshiftSpec::new(vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]], 0.5).unwrap(),
    ]
}

#[test]
fn word_counts_match_matrix_powers() {
    for spec in specs() {
        for len in 1..=10 {
            let (sum, _) = mat_pow_sum(&spec.t, len - 1);
            assert_eq!(spec.enumerate_words(len).len() as u64, sum, "length {len}");
        }
    }
}

#[test]
fn fixed_point_counts_match_traces() {
    for spec in specs() {
        for n in 1..=12 {
            let (_, trace) = mat_pow_sum(&spec.t, n);
            assert_eq!(spec.fixed_points(n).len() as u64, trace, "period {n}");
        }
    }
}

#[test]
fn enumeration_is_strictly_lexicographic() {
    for spec in specs() {
        let words = spec.enumerate_words(7);
        assert!(words.windows(2).all(|p| p[0].0 < p[1].0));
    }
}

#[test]
fn rejects_bad_matrices() {
    assert_eq!(SubshiftSpec::new(vec![vec![0, 1], vec![1, 0]], 0.5).unwrap_err(), Error::NotMixing);
    assert!(matches!(SubshiftSpec::new(vec![vec![1, 0], vec![1, 0]], 0.5), Err(Error::DeadState(_))));
    assert!(matches!(SubshiftSpec::new(vec![vec![1, 2], vec![1, 1]], 0.5), Err(Error::InvalidModel(_))));
    assert!(matches!(SubshiftSpec::new(vec![vec![1, 1], vec![1, 1]], 1.5), Err(Error::InvalidModel(_))));
}

#[test]
fn golden_mean_mixing_exponent() {
    assert_eq!(SubshiftSpec::golden_mean().mixing_exponent().unwrap(), 2);
    assert_eq!(SubshiftSpec::full(2).mixing_exponent().unwrap(), 1);
}

#[test]
fn window_predecessors_are_shift_preimages() {
    let spec = SubshiftSpec::golden_mean();
    for depth in 0..4 {
        let space = WindowSpace::new(&spec, depth);
        for (i, w) in space.windows.iter().enumerate() {
            for &j in &space.preds[i] {
                let p = &space.windows[j].0;
                assert_eq!(&p[1..], &w.0[..depth]);
                assert!(space.succs[j].contains(&i));
            }
        }
    }
}

#[test]
fn character_orthogonality() {
    let g = GroupSpec { p: 2, q: 1 };
    let chars = enumerate_characters(g, 2);
    assert_eq!(chars.len(), 4 * 5);
    for a in &chars {
        for b in &chars {
            let z = haar_inner::<f64>(a, b, 16).unwrap();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }
}

#[test]
fn calibration_normalizes_pressure_and_averages() {
    for name in BUILTINS {
        let m = Model::<f64>::builtin(name).unwrap();
        assert!(m.rpf.pressure.abs() < 1e-10, "{name}");
        for d in 0..m.rank() {
            let avg: f64 = m.rpf.gibbs.iter().zip(&m.cocycle.khat).map(|(g, k)| g * k[d]).sum();
            assert!(avg.abs() < 1e-8, "{name}");
        }
    }
}

#[test]
fn calibration_rejects_non_positive_roof() {
    let spec = SubshiftSpec::full(2);
    let r = calibrate(&spec, 0, vec![vec![1.0, -2.0], vec![1.0, 1.0]], vec![0.5, 0.5]);
    assert!(matches!(r, Err(Error::NonPositiveRoof(_))));
}

#[test]
fn lifting_preserves_the_model() {
    let m = Model::<f64>::builtin("golden-r2").unwrap();
    let deep = m.at_depth(3).unwrap();
    assert!((deep.nu_tau - m.nu_tau).abs() < 1e-12);
    assert!((deep.rpf.pressure - m.rpf.pressure).abs() < 1e-12);
    assert!(matches!(deep.at_depth(1), Err(Error::DepthMismatch { .. })));
}

proptest! {
    #[test]
    fn characters_are_homomorphisms(
        s1 in prop::collection::vec(prop::bool::ANY, 2),
        s2 in prop::collection::vec(prop::bool::ANY, 2),
        a1 in prop::collection::vec(0.0..6.28f64, 1),
        a2 in prop::collection::vec(0.0..6.28f64, 1),
        e in prop::collection::vec(0u8..2, 2),
        n in -3i32..=3,
    ) {
        let sg = |b: &Vec<bool>| b.iter().map(|&x| if x { -1 } else { 1 }).collect::<Vec<i8>>();
        let g = GroupElement::new(sg(&s1), a1.clone());
        let h = GroupElement::new(sg(&s2), a2.clone());
        let mu = CharacterLabel { signs: e, freqs: vec![n] };
        let lhs = evaluate(&mu, &g.compose(&h)).unwrap();
        let rhs = evaluate(&mu, &g).unwrap() * evaluate(&mu, &h).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
        let inv = evaluate(&mu, &g.inverse()).unwrap();
        prop_assert!((inv - evaluate(&mu, &g).unwrap().conj()).norm() < 1e-12);
    }

    #[test]
    fn birkhoff_sums_are_additive(word in prop::collection::vec(0u8..2, 3..12), cut in 1usize..8) {
        let m = Model::<f64>::builtin("R2A").unwrap();
        let k = m.cocycle.depth;
        let cut = cut.min(word.len() - k - 1);
        let whole = m.cocycle.birkhoff_sum(&m.space, &word).unwrap();
        let a = m.cocycle.birkhoff_sum(&m.space, &word[..cut + k]).unwrap();
        let b = m.cocycle.birkhoff_sum(&m.space, &word[cut..]).unwrap();
        prop_assert!((whole.tau - a.tau - b.tau).abs() < 1e-12);
        for d in 0..2 {
            prop_assert!((whole.k[d] - a.k[d] - b.k[d]).abs() < 1e-12);
        }
    }
}
