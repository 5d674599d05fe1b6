//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines are always printed; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use localmix::expansion::{cubic_ratio, expand_kappa, DEFAULT_STEPS};
use localmix::holonomy::{enumerate_characters, CharacterLabel};
use localmix::mixing::{correlation_jt_fourier, correlation_jt_series, verify_limit, RProfile};
use localmix::model::{Model, BUILTINS};
use localmix::oracle::{correlation_by_cylinders, pressure_by_orbits, DEFAULT_BUDGET};
use localmix::pipeline::{self, constant_query, fixed_point_residuals, sample_frequencies, QueryCase, RunConfig};
use localmix::scalar::C;
use localmix::special::{bessel_k, profile_e};
use localmix::thermo::{pressure_of, rpf_residuals};
use localmix::transfer::{
    assemble, lattice_diagnostic, leading_eigenvalue, neumann_resolvent, spectral_split, sweep_grid, OperatorFamily,
    OperatorParams,
};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crit_rpf() -> localmix::Result<Outcome> {
    let mut worst = (0.0f64, 0.0f64);
    for name in BUILTINS {
        let m = Model::<f64>::builtin(name)?;
        let (r1, r2, nh) = fixed_point_residuals(&m);
        let (rh, rn) = rpf_residuals(&m.space, &m.cocycle, &m.rpf);
        worst.0 = worst.0.max(r1).max(r2).max(rh).max(rn);
        worst.1 = worst.1.max(nh);
    }
    Ok(verdict(
        worst.0 < 1e-10 && worst.1 < 1e-12,
        format!("fixed-point residual {:.2e} (< 1e-10), |nu(h) - 1| {:.2e} (< 1e-12)", worst.0, worst.1),
    ))
}

fn crit_pressure_oracle() -> localmix::Result<Outcome> {
    let mut gap = 0.0f64;
    let mut n_models = 0;
    for name in BUILTINS {
        let m = Model::<f64>::builtin(name)?;
        if m.dim() > 200 {
            continue;
        }
        n_models += 1;
        let n_max = ((DEFAULT_BUDGET as f64).ln() / (m.spec.n as f64).ln()).floor().min(20.0) as usize;
        for s in [0.0, 1.0, 1.1] {
            let pot: Vec<f64> = m.cocycle.tau.iter().map(|t| -s * t).collect();
            gap = gap.max((pressure_of(&m.space, &pot)? - pressure_by_orbits(&m, &pot, n_max)?).abs());
        }
    }
    Ok(verdict(gap < 1e-5, format!("max gap {gap:.2e} over {n_models} models (< 1e-5)")))
}

fn crit_jordan() -> localmix::Result<Outcome> {
    let base = Model::<f64>::builtin("R2A")?;
    let schottky = base.schottky.clone().expect("R2A is built from a Schottky semigroup");
    let mut gap = 0.0f64;
    let mut sign_mismatch = 0;
    let mut words = 0;
    for n in 1..=6usize {
        let depth = n - 1;
        let m = Model::<f64>::builtin_at("R2A", Some(depth))?;
        for code in 0..(1u32 << n) {
            let word: Vec<u8> = (0..n).map(|i| ((code >> i) & 1) as u8).collect();
            let ext: Vec<u8> = (0..n + depth).map(|i| word[i % n]).collect();
            let idx = m.space.windows_of(&ext)?;
            let (lam, sgn) = schottky.jordan_data(&word)?;
            for f in 0..2 {
                let sum: f64 = idx.iter().map(|&i| m.cocycle.k_values[i][f]).sum();
                gap = gap.max((sum - lam[f]).abs());
                let prod: i8 = idx.iter().map(|&i| m.holonomy.theta[i].signs[f]).product();
                if prod != sgn[f] {
                    sign_mismatch += 1;
                }
            }
            words += 1;
        }
    }
    Ok(verdict(
        gap < 1e-8 && sign_mismatch == 0,
        format!("{words} cyclic words, max |sum K - lambda| {gap:.2e} (< 1e-8), sign mismatches {sign_mismatch}"),
    ))
}

fn crit_averaging() -> localmix::Result<Outcome> {
    let mut khat = 0.0f64;
    let mut kgap = 0.0f64;
    for name in BUILTINS {
        let m = Model::<f64>::builtin(name)?;
        let rank = m.rank();
        let mut a = vec![0.0; rank];
        let mut b = vec![0.0; rank];
        for (i, &w) in m.rpf.gibbs.iter().enumerate() {
            for d in 0..rank {
                a[d] += w * m.cocycle.khat[i][d];
                b[d] += w * m.cocycle.scale * m.cocycle.k_values[i][d];
            }
        }
        khat = khat.max(a.iter().map(|x| x * x).sum::<f64>().sqrt());
        let g: f64 = b.iter().zip(&m.cocycle.v_dir).map(|(k, v)| (k - m.nu_tau * v).powi(2)).sum();
        kgap = kgap.max(g.sqrt());
    }
    Ok(verdict(
        khat < 1e-8 && kgap < 1e-8,
        format!("|int Khat| {khat:.2e}, |int K - nu(tau) v| {kgap:.2e} (< 1e-8)"),
    ))
}

fn crit_expansion(m: &Model<f64>, exp: &localmix::Expansion) -> Outcome {
    let c = &exp.checks;
    let ratio = cubic_ratio(m, exp, &[0.0, 1.0], 0.02);
    verdict(
        c.re_dkappa < 1e-7 && c.dkappa_rel_err < 1e-5 && c.d2_imag < 1e-7 && c.d2_max_eigenvalue < -1e-6 && (6.0..=10.0).contains(&ratio),
        format!(
            "|Re Dk| {:.2e}, Im Dk rel {:.2e}, asym {:.2e}, max eig {:.3e}, cubic ratio {:.3}",
            c.re_dkappa, c.dkappa_rel_err, c.d2_imag, c.d2_max_eigenvalue, ratio
        ),
    )
}

fn crit_curvature(exp: &localmix::Expansion) -> Outcome {
    let gap = (exp.curvature_c - exp.curvature_c_kappa).abs() / exp.curvature_c.abs();
    verdict(
        gap < 1e-3,
        format!("c = {:.10} vs {:.10}, rel gap {gap:.2e} (< 1e-3)", exp.curvature_c, exp.curvature_c_kappa),
    )
}

fn crit_spectral_bound() -> localmix::Result<Outcome> {
    let mut max_mod = 0.0f64;
    let mut excluded = 0;
    let mut models = 0;
    for name in BUILTINS {
        let m = Model::<f64>::builtin(name)?;
        let grid = sweep_grid(m.rank(), 3.0, 1.0);
        let chars = enumerate_characters(m.holonomy.group, 1);
        let diag = lattice_diagnostic(&m, &grid, &chars);
        if diag.lattice {
            continue;
        }
        models += 1;
        let triv = CharacterLabel::trivial(m.holonomy.group);
        let fam = OperatorFamily::new(&m, 0.0);
        let modulus = |v: &[f64], mu: &CharacterLabel| {
            let vc: Vec<C<f64>> = v.iter().map(|&x| C::new(x, 0.0)).collect();
            leading_eigenvalue(&fam, &vc, mu).0.norm()
        };
        for v in &grid {
            max_mod = max_mod.max(modulus(v, &triv));
        }
        let mut full = grid.clone();
        full.push(vec![0.0; m.rank()]);
        for mu in chars.iter().filter(|mu| !mu.is_trivial()) {
            if diag.nonmixing_characters.contains(mu) {
                excluded += 1;
                continue;
            }
            for v in &full {
                max_mod = max_mod.max(modulus(v, mu));
            }
        }
    }
    let lat = Model::<f64>::builtin("full2-const")?;
    let v = 2.0 * std::f64::consts::PI / 2f64.ln();
    let k = leading_eigenvalue(&OperatorFamily::new(&lat, 0.0), &[C::new(v, 0.0)], &CharacterLabel::trivial(lat.holonomy.group)).0;
    let lat_gap = (k.norm() - 1.0).abs();
    Ok(verdict(
        max_mod < 1.0 - 1e-6 && lat_gap < 1e-10,
        format!(
            "max |kappa| {max_mod:.8} over {models} non-lattice models (< 1 - 1e-6; {excluded} characters trivial on the holonomy skipped), constant roof ||kappa| - 1| {lat_gap:.2e} (< 1e-10)"
        ),
    ))
}

fn crit_resolvent(m: &Model<f64>) -> localmix::Result<Outcome> {
    let mut res = 0.0f64;
    let mut split = 0.0f64;
    for v in sample_frequencies(m.rank(), 10) {
        let op = assemble(m, &OperatorParams::frequency(v, CharacterLabel::trivial(m.holonomy.group)), m.cocycle.depth)?;
        res = res.max(neumann_resolvent(&op)?.1);
        split = split.max(spectral_split(&op)?.identity_residual.unwrap_or(f64::INFINITY));
    }
    Ok(verdict(
        res < 1e-10 && split < 1e-8,
        format!("resolvent residual {res:.2e} (< 1e-10), splitting residual {split:.2e} (< 1e-8)"),
    ))
}

fn crit_bessel() -> localmix::Result<Outcome> {
    let mut worst = 0.0f64;
    for rank in 2..=5usize {
        for x in [0.1, 1.0, 10.0, 100.0] {
            let k = bessel_k(rank as f64 / 2.0 - 1.0, x)?;
            let rhs = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() * profile_e(rank, x)?;
            worst = worst.max((k / rhs - 1.0).abs());
        }
    }
    let half = (bessel_k(0.5, 1.0)? - (std::f64::consts::PI / 2.0).sqrt() * (-1.0f64).exp()).abs();
    let e3 = [0.1, 1.0, 10.0, 100.0].iter().all(|&x| profile_e(3, x).ok() == Some(1.0));
    Ok(verdict(
        worst < 1e-7 && half < 1e-9 && e3,
        format!("max rel error {worst:.2e} (< 1e-7), K_1/2(1) error {half:.2e} (< 1e-9), rank-3 E exactly 1: {e3}"),
    ))
}

fn crit_two_route(m: &Model<f64>) -> localmix::Result<Outcome> {
    let triv = CharacterLabel::trivial(m.holonomy.group);
    let case = QueryCase { name: "two-route".into(), u: vec![0.0], profile: RProfile::Zero };
    let mut fourier_gap = 0.0f64;
    let mut cyl_gap = 0.0f64;
    for mult in [10.0, 20.0, 40.0] {
        let t = mult * m.nu_tau;
        let mut q = constant_query(m, 2.0, &triv, &case, vec![t]);
        q.psi1.omega.width[0] = 0.1;
        q.psi2.omega.width[0] = 0.1;
        let s = correlation_jt_series(m, &q, t, 100_000)?.value;
        let f = correlation_jt_fourier(m, &q, t, 1e-3)?.value;
        let c = correlation_by_cylinders(m, &q, t, m.cocycle.depth, DEFAULT_BUDGET)?.value;
        fourier_gap = fourier_gap.max((s - f).norm() / s.norm());
        cyl_gap = cyl_gap.max((s - c).norm() / s.norm());
    }
    Ok(verdict(
        fourier_gap < 1e-6 && cyl_gap < 1e-12,
        format!("series vs Fourier {fourier_gap:.2e} (< 1e-6), series vs cylinders {cyl_gap:.2e} (< 1e-12)"),
    ))
}

fn crit_local_mixing(m: &Model<f64>, exp: &localmix::Expansion) -> localmix::Result<Outcome> {
    let times = RunConfig::builtin("R2A").query.t_grid.times(m.nu_tau);
    let triv = CharacterLabel::trivial(m.holonomy.group);
    let mut ok = true;
    let mut parts = Vec::new();
    for case in RunConfig::builtin("R2A").cases(2) {
        let q = constant_query(m, 2.0, &triv, &case, times.clone());
        let rep = verify_limit(m, exp, &q, 1.0)?;
        ok &= rep.plateau_deviation.abs() < 0.10 && rep.monotone;
        parts.push(format!("{} {:+.4}{}", case.name, rep.plateau_deviation, if rep.monotone { "" } else { " non-monotone" }));
    }
    let z2 = Model::<f64>::builtin("R2A-Z2")?;
    let ez = expand_kappa(&z2, &DEFAULT_STEPS)?;
    let mu = CharacterLabel { signs: vec![1, 0], freqs: vec![] };
    let case = QueryCase { name: "decay".into(), u: vec![0.0], profile: RProfile::Zero };
    let q = constant_query(&z2, 2.0, &mu, &case, RunConfig::builtin("R2A").query.t_grid.times(z2.nu_tau));
    let rep = verify_limit(&z2, &ez, &q, 1.0)?;
    let first = rep.rows[0].scaled.abs();
    let ratio = rep.rows[rep.rows.len() - 1].scaled.abs() / first;
    ok &= ratio < 0.10;
    parts.push(format!("decay ratio {ratio:.2e}"));
    Ok(verdict(ok, format!("plateau deviations (< 10%): {}", parts.join(", "))))
}

fn crit_determinism() -> localmix::Result<Outcome> {
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    let cfg = RunConfig::builtin("R2A");
    for d in &dirs {
        pipeline::run(&cfg, d.path())?;
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    names.sort();
    let mut differing = Vec::new();
    for n in &names {
        let a = std::fs::read(dirs[0].path().join(n))?;
        let b = std::fs::read(dirs[1].path().join(n)).unwrap_or_default();
        if a != b {
            differing.push(n.to_string_lossy().into_owned());
        }
    }
    Ok(verdict(
        differing.is_empty() && names.iter().any(|n| n == "report.json"),
        format!("{} artifacts compared, differing: {:?}", names.len(), differing),
    ))
}

fn main() -> ExitCode {
    let r2a = Model::<f64>::builtin("R2A").expect("R2A builds");
    let exp = expand_kappa(&r2a, &DEFAULT_STEPS).expect("R2A expansion");
    let criteria: Vec<(&str, Box<dyn Fn() -> localmix::Result<Outcome>>)> = vec![
        ("RPF fixed points", Box::new(crit_rpf)),
        ("pressure oracle", Box::new(crit_pressure_oracle)),
        ("Jordan projections", Box::new(crit_jordan)),
        ("averaging", Box::new(crit_averaging)),
        ("eigenvalue expansion", Box::new(|| Ok(crit_expansion(&r2a, &exp)))),
        ("curvature consistency", Box::new(|| Ok(crit_curvature(&exp)))),
        ("spectral bound", Box::new(crit_spectral_bound)),
        ("resolvent identity", Box::new(|| crit_resolvent(&r2a))),
        ("Bessel identities", Box::new(crit_bessel)),
        ("two-route correlation", Box::new(|| crit_two_route(&r2a))),
        ("local-mixing limit", Box::new(|| crit_local_mixing(&r2a, &exp))),
        ("determinism", Box::new(crit_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Err(format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name} [{secs:.1}s]: {detail}", i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
