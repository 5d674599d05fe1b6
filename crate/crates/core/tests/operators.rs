//! RPF data, twisted transfer operators and their brute-force counterparts.
//!
//! Frozen constants for `R2A` come from an independent 40-digit evaluation of
//! the fixture (own fixed points, calibration by bisection and power
//! iteration).

use localmix::holonomy::CharacterLabel;
use localmix::model::{Model, BUILTINS};
use localmix::oracle::{iterate_by_preimages, kappa_by_orbits, orbit_sum, pressure_by_orbits};
use localmix::scalar::C;
use localmix::thermo::pressure_of;
use localmix::transfer::{
    apply_iterate, assemble, dump_matrix, leading_eigenvalue, neumann_partial_sum, neumann_resolvent, spectral_split,
    OperatorFamily, OperatorParams,
};
use localmix::Error;
use nalgebra::DVector;
use proptest::prelude::*;

const R2A_SCALE: f64 = 0.038366597517868683;
const R2A_NU_TAU: f64 = 0.28935394807850927;
const R2A_GIBBS: [f64; 4] = [0.83819534130174354, 0.077417426766427121, 0.077417426766427121, 0.0069698051654022228];
const R2A_TAU: [f64; 4] = [0.088342355513546777, 0.075207625617603541, 2.4813782025738885, 2.4938288386614644];

fn cvec(v: &[f64]) -> Vec<C<f64>> {
    v.iter().map(|&x| C::new(x, 0.0)).collect()
}

#[test]
fn r2a_matches_independent_evaluation() {
    let m = Model::<f64>::builtin("R2A").unwrap();
    assert!((m.cocycle.scale - R2A_SCALE).abs() < 1e-13);
    assert!((m.nu_tau - R2A_NU_TAU).abs() < 1e-13);
    for i in 0..4 {
        assert!((m.rpf.gibbs[i] - R2A_GIBBS[i]).abs() < 1e-12);
        assert!((m.cocycle.tau[i] - R2A_TAU[i]).abs() < 1e-12);
    }
}

#[test]
fn pressure_of_simple_shifts() {
    let m = Model::<f64>::builtin("full2-const").unwrap();
    let z = vec![0.0; m.dim()];
    assert!((pressure_of(&m.space, &z).unwrap() - 2f64.ln()).abs() < 1e-14);
    let g = Model::<f64>::builtin("golden-r1").unwrap();
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    assert!((pressure_of(&g.space, &vec![0.0; g.dim()]).unwrap() - phi.ln()).abs() < 1e-13);
}

#[test]
fn orbit_pressure_examples() {
    let m = Model::<f64>::builtin("full2-const").unwrap();
    for n in 1..8 {
        let z = orbit_sum(&m, &vec![0.0; m.dim()], &[0.0], &CharacterLabel::trivial(m.holonomy.group), n).unwrap();
        assert!((z.value.re.ln() / n as f64 - 2f64.ln()).abs() < 1e-14);
    }
    let g = Model::<f64>::builtin("golden-r1").unwrap();
    let p = pressure_by_orbits(&g, &vec![0.0; g.dim()], 20).unwrap();
    assert!((p - ((1.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-6);
    let r = Model::<f64>::builtin("R2A").unwrap();
    let pot: Vec<f64> = r.cocycle.tau.iter().map(|t| -t).collect();
    assert!(pressure_by_orbits(&r, &pot, 18).unwrap().abs() < 1e-5);
    assert!(matches!(pressure_by_orbits(&r, &pot, 2), Err(Error::Config(_))));
}

#[test]
fn orbit_kappa_matches_eigensolver() {
    let m = Model::<f64>::builtin("R2A").unwrap();
    let triv = CharacterLabel::trivial(m.holonomy.group);
    let fam = OperatorFamily::new(&m, 0.0);
    let k0 = kappa_by_orbits(&m, &[0.0, 0.0], &triv, 14).unwrap();
    assert!((k0 - C::new(1.0, 0.0)).norm() < 1e-10);
    let v = [0.2, 0.1];
    let a = kappa_by_orbits(&m, &v, &triv, 14).unwrap();
    let b = leading_eigenvalue(&fam, &cvec(&v), &triv).0;
    assert!((a - b).norm() < 1e-4);
}

#[test]
fn lattice_orbit_sums_keep_unit_modulus() {
    let m = Model::<f64>::builtin("full2-const").unwrap();
    let v = [2.0 * std::f64::consts::PI / 2f64.ln()];
    let k = kappa_by_orbits(&m, &v, &CharacterLabel::trivial(m.holonomy.group), 10).unwrap();
    assert!((k.norm() - 1.0).abs() < 1e-10);
}

#[test]
fn constant_roof_hits_one_at_the_lattice_frequency() {
    let m = Model::<f64>::builtin("full2-const").unwrap();
    let fam = OperatorFamily::new(&m, 0.0);
    let v = 2.0 * std::f64::consts::PI / 2f64.ln();
    let k = leading_eigenvalue(&fam, &cvec(&[v]), &CharacterLabel::trivial(m.holonomy.group)).0;
    assert!((k - C::new(1.0, 0.0)).norm() < 1e-10);
}

#[test]
fn normalized_operator_fixes_constants() {
    for name in BUILTINS {
        let m = Model::<f64>::builtin(name).unwrap();
        let p = OperatorParams::frequency(vec![0.0; m.rank()], CharacterLabel::trivial(m.holonomy.group));
        let op = assemble(&m, &p, m.cocycle.depth).unwrap();
        let one = DVector::from_element(m.dim(), C::new(1.0, 0.0));
        let out = apply_iterate(&op, &one, 5).unwrap();
        assert!(out.iter().all(|z| (z - C::new(1.0, 0.0)).norm() < 1e-12), "{name}");
    }
}

#[test]
fn resolvent_and_neumann_series_agree() {
    let m = Model::<f64>::builtin("R2A").unwrap();
    let p = OperatorParams::frequency(vec![0.7, -0.4], CharacterLabel::trivial(m.holonomy.group));
    let op = assemble(&m, &p, 1).unwrap();
    let (x, res) = neumann_resolvent(&op).unwrap();
    assert!(res < 1e-10);
    let partial = neumann_partial_sum(&op, 4000);
    assert!((x - partial).norm() < 1e-8);
    let s = spectral_split(&op).unwrap();
    assert!(s.identity_residual.unwrap() < 1e-8);
}

#[test]
fn resolvent_is_singular_at_zero_frequency() {
    let m = Model::<f64>::builtin("R2A").unwrap();
    let p = OperatorParams::frequency(vec![0.0, 0.0], CharacterLabel::trivial(m.holonomy.group));
    let op = assemble(&m, &p, 1).unwrap();
    assert!(matches!(neumann_resolvent(&op), Err(Error::SingularResolvent(_))));
}

#[test]
fn lifted_operator_has_the_same_leading_eigenvalue() {
    let m = Model::<f64>::builtin("R2A").unwrap();
    let p = OperatorParams::frequency(vec![0.3, 0.5], CharacterLabel::trivial(m.holonomy.group));
    let a = spectral_split(&assemble(&m, &p, 1).unwrap()).unwrap().kappa;
    let b = spectral_split(&assemble(&m, &p, 3).unwrap()).unwrap().kappa;
    assert!((a - b).norm() < 1e-12);
}

#[test]
fn matrix_dump_layout() {
    let m = Model::<f64>::builtin("golden-r1").unwrap();
    let p = OperatorParams::frequency(vec![0.0], CharacterLabel::trivial(m.holonomy.group));
    let op = assemble(&m, &p, 1).unwrap();
    let bytes = dump_matrix(&op);
    let dim = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let nnz = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    assert_eq!(dim, 3);
    assert_eq!(bytes.len() as u64, 16 + 32 * nnz);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conjugation_symmetry(v0 in -3.0..3.0f64, v1 in -3.0..3.0f64, s in 0u8..2) {
        let m = Model::<f64>::builtin("R2A-Z2").unwrap();
        let fam = OperatorFamily::new(&m, 0.0);
        let mu = CharacterLabel { signs: vec![s, 0], freqs: vec![] };
        let a = leading_eigenvalue(&fam, &cvec(&[v0, v1]), &mu).0;
        let b = leading_eigenvalue(&fam, &cvec(&[-v0, -v1]), &mu.conjugate()).0;
        prop_assert!((a - b.conj()).norm() < 1e-10);
    }

    #[test]
    fn spectral_radius_at_most_one(v0 in -6.0..6.0f64, v1 in -6.0..6.0f64, s0 in 0u8..2, s1 in 0u8..2) {
        let m = Model::<f64>::builtin("R2A-Z2").unwrap();
        let fam = OperatorFamily::new(&m, 0.0);
        let mu = CharacterLabel { signs: vec![s0, s1], freqs: vec![] };
        let k = leading_eigenvalue(&fam, &cvec(&[v0, v1]), &mu).0;
        prop_assert!(k.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn iterates_match_preimage_sums(v0 in -2.0..2.0f64, v1 in -2.0..2.0f64, n in 0usize..7, seed in 0u64..1000) {
        let m = Model::<f64>::builtin("R2A").unwrap();
        let p = OperatorParams::frequency(vec![v0, v1], CharacterLabel::trivial(m.holonomy.group));
        let h: Vec<C<f64>> = (0..m.dim()).map(|i| C::new(((seed + i as u64) as f64).sin(), ((seed * 3 + i as u64) as f64).cos())).collect();
        let a = iterate_by_preimages(&m, &p, &h, n).unwrap();
        let op = assemble(&m, &p, 1).unwrap();
        let b = apply_iterate(&op, &DVector::from_vec(h), n).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }
}
