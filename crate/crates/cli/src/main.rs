//! Batch driver: builds a model from a built-in name or a config file, runs
//! the pipeline stages and writes their artifacts.
//!
//! Exit status is 0 when every enabled check passes, 1 on a failed check or a
//! numerical failure, and 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use localmix::pipeline::{self, Check, RunConfig, RunProfile, TimeGrid};
use localmix::Error;

#[derive(Parser)]
#[command(name = "localmix", version, about = "Twisted transfer operators and local-mixing checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the model and write model.json.
    ModelInfo(Common),
    /// Solve the RPF problem and write rpf.json and gibbs.csv.
    Rpf(Common),
    /// Lattice sweep and eigenvalue expansion; writes spectral.json.
    Spectral(Common),
    /// Local-mixing limit along the time grid; writes mixing.json and mixing.csv.
    Mixing(Common),
    /// Compare the main routes against the brute-force oracles.
    OracleCheck(Common),
    /// Run every stage and write report.json.
    Run(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Diagnostics,
    Full,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in model, used when no config is given.
    #[arg(long, default_value = "R2A")]
    builtin: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Depth override.
    #[arg(long)]
    depth: Option<usize>,
    /// Time grid `lo:hi:n` in units of the mean roof.
    #[arg(long)]
    t_grid: Option<String>,
    /// Stages to run.
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Multiplies every tolerance.
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

impl Common {
    fn config(&self) -> localmix::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::builtin(&self.builtin),
        };
        if let Some(d) = self.depth {
            cfg.depth = Some(d);
        }
        if let Some(g) = &self.t_grid {
            cfg.query.t_grid = TimeGrid::parse(g)?;
            cfg.t_grid_override = true;
        }
        if let Some(p) = self.profile {
            cfg.profile = match p {
                ProfileArg::Diagnostics => RunProfile::Diagnostics,
                ProfileArg::Full => RunProfile::Full,
            };
        }
        if let Some(s) = self.tolerance_scale {
            cfg.tolerances.scale = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::MissingUpstreamArtifact(_)
            | Error::InvalidModel(_)
            | Error::DeadState(_)
            | Error::NotMixing
            | Error::Inadmissible(_)
            | Error::DimensionMismatch { .. }
            | Error::NonPositiveRoof(_)
            | Error::DepthMismatch { .. }
            | Error::NotLoxodromic(_)
            | Error::OutsideDomain(_)
            | Error::PingPong(_)
    )
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("{:<32} {:<4} value={:.3e} tol={:.3e}", c.name, if c.passed { "ok" } else { "FAIL" }, c.value, c.tolerance);
    }
    checks.iter().all(|c| c.passed)
}

fn execute(cmd: &Command) -> localmix::Result<bool> {
    match cmd {
        Command::ModelInfo(c) => {
            let cfg = c.config()?;
            let d = pipeline::stage_model(&cfg, &c.out)?;
            println!("model {}  dim {}  rank {}", d.model.name, d.dim, d.rank);
            Ok(print_checks(&d.checks))
        }
        Command::Rpf(c) => {
            let d = pipeline::stage_rpf(&c.config()?, &c.out)?;
            println!("pressure {:.3e}  nu(tau) {:.12}", d.rpf.pressure, d.nu_tau);
            Ok(print_checks(&d.checks))
        }
        Command::Spectral(c) => {
            let d = pipeline::stage_spectral(&c.config()?, &c.out)?;
            if d.lattice.lattice {
                println!("lattice model: |kappa| = 1 at {:?}", d.lattice.flagged.first());
            }
            if let Some(e) = &d.expansion {
                println!("curvature {:.10}  (kappa route {:.10})", e.curvature_c, e.curvature_c_kappa);
            }
            Ok(print_checks(&d.checks))
        }
        Command::Mixing(c) => {
            let cfg = c.config()?;
            match pipeline::stage_mixing(&cfg, &c.out)? {
                Some(d) => {
                    for (name, rep) in &d.cases {
                        println!("{name}: plateau {:.6e} target {:.6e} deviation {:+.4}", rep.plateau, rep.target, rep.plateau_deviation);
                    }
                    Ok(print_checks(&d.checks))
                }
                None => {
                    println!("mixing skipped: lattice model");
                    Ok(true)
                }
            }
        }
        Command::OracleCheck(c) => {
            let d = pipeline::stage_oracle(&c.config()?, &c.out)?;
            Ok(print_checks(&d.checks))
        }
        Command::Run(c) => {
            let cfg = c.config()?;
            let rep = pipeline::run(&cfg, &c.out)?;
            println!("model {}  profile {:?}  lattice {}", rep.model, rep.profile, rep.lattice);
            for (stage, why) in &rep.skipped {
                println!("skipped {stage}: {why}");
            }
            print_checks(&rep.checks);
            if !rep.passed {
                eprintln!("failed checks: {}", rep.failed.join(", "));
            }
            Ok(rep.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
