//! Staged batch runs: configuration, content-keyed artifacts and the report.
//!
//! Stages run in the order model → rpf → spectral → mixing, with an
//! independent oracle stage. Each artifact is a JSON envelope carrying the
//! SHA-256 key of the configuration sections it depends on; a downstream stage
//! refuses to start when its upstream artifact is absent or carries a
//! different key.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cocycle::{calibrate, HolonomyData};
use crate::error::{Error, Result};
use crate::expansion::{cubic_ratio, expand_kappa, SpectralExpansion, DEFAULT_STEPS};
use crate::holonomy::{enumerate_characters, CharacterLabel, GroupElement, GroupSpec};
use crate::mixing::{
    correlation_jt_fourier, correlation_jt_series, limit_csv, verify_limit, GaussianBump, LimitReport, MixingQuery,
    RProfile, TestFunction,
};
use crate::model::{Model, ModelRecord, SchottkyFile, BUILTINS};
use crate::oracle::{correlation_by_cylinders, iterate_by_preimages, kappa_by_orbits, pressure_by_orbits, DEFAULT_BUDGET};
use crate::scalar::{cabs, C};
use crate::sft::SubshiftSpec;
use crate::thermo::{gibbs_csv, pressure_of, rpf_residuals, RpfData};
use crate::transfer::{
    assemble, lattice_diagnostic, leading_eigenvalue, neumann_resolvent, spectral_split, sweep_grid, LatticeReport,
    OperatorFamily, OperatorParams,
};

/// How much of the pipeline to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunProfile {
    /// Model, RPF and spectral stages only.
    Diagnostics,
    /// All stages including mixing and the oracle gate.
    #[default]
    Full,
}

/// Depth-`k` cocycle given directly, one entry per admissible `(k+1)`-window in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleSection {
    /// Locally-constant depth.
    pub depth: usize,
    /// Raw return vectors `K(w)`.
    pub k_values: Vec<Vec<f64>>,
    /// Covector `ψ`.
    pub psi: Vec<f64>,
}

/// Holonomy given directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomySection {
    /// Group shape.
    pub group: GroupSpec,
    /// One element per window.
    pub theta: Vec<GroupElement<f64>>,
}

/// Schottky source: a fixture file or inline data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchottkySection {
    /// Path to a fixture file, relative to the config file.
    File {
        /// Fixture path.
        file: PathBuf,
    },
    /// Inline fixture.
    Inline(SchottkyFile<f64>),
}

/// Character truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterSection {
    /// Largest torus frequency.
    #[serde(default = "default_max_freq")]
    pub max_freq: u32,
}

fn default_max_freq() -> u32 {
    1
}

impl Default for CharacterSection {
    fn default() -> Self {
        CharacterSection { max_freq: default_max_freq() }
    }
}

/// Geometric time grid in units of the mean roof `ν(τ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// First time.
    pub lo: f64,
    /// Last time.
    pub hi: f64,
    /// Number of points.
    pub n: usize,
}

impl TimeGrid {
    /// Parses `a:b:n`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("t-grid {s:?} is not of the form a:b:n")));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad t-grid entry {p:?}")));
        let n = parts[2].trim().parse::<usize>().map_err(|_| Error::Config(format!("bad t-grid count {:?}", parts[2])))?;
        let g = TimeGrid { lo: num(parts[0])?, hi: num(parts[1])?, n };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0) || !(self.hi >= self.lo) || self.n == 0 || (self.n == 1 && self.hi != self.lo) {
            return Err(Error::Config(format!("invalid t-grid {}:{}:{}", self.lo, self.hi, self.n)));
        }
        Ok(())
    }

    /// Absolute times for a mean roof `a`.
    pub fn times(&self, a: f64) -> Vec<f64> {
        MixingQuery::geometric_grid(self.lo * a, self.hi * a, self.n)
    }
}

/// One drift profile of the limit check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryCase {
    /// Label used in check names and CSV rows.
    pub name: String,
    /// Drift in the kernel basis (`rank - 1` entries).
    pub u: Vec<f64>,
    /// Drift profile.
    pub profile: RProfile,
}

/// Mixing queries: isotropic Gaussian bumps, constant `f`, and the drifts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySection {
    /// Bump width.
    #[serde(default = "default_width")]
    pub omega_width: f64,
    /// Time grid.
    #[serde(default = "default_grid")]
    pub t_grid: TimeGrid,
    /// Drift cases; the default set depends on the rank.
    #[serde(default)]
    pub cases: Option<Vec<QueryCase>>,
    /// Also check decay for a mixing nontrivial character.
    #[serde(default = "yes")]
    pub decay: bool,
}

fn default_width() -> f64 {
    2.0
}

fn default_grid() -> TimeGrid {
    TimeGrid { lo: 64.0, hi: 4096.0, n: 7 }
}

fn yes() -> bool {
    true
}

impl Default for QuerySection {
    fn default() -> Self {
        QuerySection { omega_width: default_width(), t_grid: default_grid(), cases: None, decay: true }
    }
}

/// Check tolerances, all scaled by `scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// RPF eigen-equation residuals.
    pub rpf: f64,
    /// `|ν(h) - 1|`.
    pub normalization: f64,
    /// Averaging identities of the calibrated cocycle.
    pub averaging: f64,
    /// `|Re Dκ(0)|`.
    pub re_dkappa: f64,
    /// Relative error of `Im Dκ(0)`.
    pub im_dkappa: f64,
    /// Upper bound on the largest eigenvalue of `D²κ(0)`.
    pub hessian_max: f64,
    /// Relative gap between the two curvature routes.
    pub curvature: f64,
    /// Margin below one for `|κ|` off the trivial point.
    pub spectral_margin: f64,
    /// Resolvent residual.
    pub resolvent: f64,
    /// Resolvent splitting residual.
    pub splitting: f64,
    /// Orbit-sum pressure against the eigenvalue pressure.
    pub pressure_oracle: f64,
    /// Orbit-sum `κ` against the eigensolver.
    pub kappa_oracle: f64,
    /// Preimage iterates against matrix powers.
    pub iterate_oracle: f64,
    /// Relative agreement of the correlation routes.
    pub two_route: f64,
    /// Relative plateau deviation.
    pub plateau: f64,
    /// Ratio of last to first scaled correlation for a nontrivial character.
    pub decay: f64,
    /// Multiplies every tolerance.
    pub scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rpf: 1e-10,
            normalization: 1e-12,
            averaging: 1e-8,
            re_dkappa: 1e-7,
            im_dkappa: 1e-5,
            hessian_max: -1e-6,
            curvature: 1e-3,
            spectral_margin: 1e-6,
            resolvent: 1e-10,
            splitting: 1e-8,
            pressure_oracle: 1e-5,
            kappa_oracle: 1e-4,
            iterate_oracle: 1e-10,
            two_route: 1e-6,
            plateau: 0.10,
            decay: 0.10,
            scale: 1.0,
        }
    }
}

impl Tolerances {
    fn get(&self, x: f64) -> f64 {
        x * self.scale
    }
}

/// Full run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Built-in model name.
    #[serde(default)]
    pub builtin: Option<String>,
    /// Subshift, used with `cocycle`.
    #[serde(default)]
    pub subshift: Option<SubshiftSpec>,
    /// Cocycle, used with `subshift`.
    #[serde(default)]
    pub cocycle: Option<CocycleSection>,
    /// Holonomy, optional with `cocycle`; trivial when absent.
    #[serde(default)]
    pub holonomy: Option<HolonomySection>,
    /// Schottky source.
    #[serde(default)]
    pub schottky: Option<SchottkySection>,
    /// Depth override.
    #[serde(default)]
    pub depth: Option<usize>,
    /// Character truncation.
    #[serde(default)]
    pub characters: CharacterSection,
    /// Mixing queries.
    #[serde(default)]
    pub query: QuerySection,
    /// Check tolerances.
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Stages to run.
    #[serde(default)]
    pub profile: RunProfile,
    /// Whether the time grid was overridden on the command line.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub t_grid_override: bool,
}

impl RunConfig {
    /// Default configuration of a built-in model.
    pub fn builtin(name: &str) -> Self {
        RunConfig {
            builtin: Some(name.to_string()),
            subshift: None,
            cocycle: None,
            holonomy: None,
            schottky: None,
            depth: None,
            characters: CharacterSection::default(),
            query: QuerySection::default(),
            tolerances: Tolerances::default(),
            profile: RunProfile::Full,
            t_grid_override: false,
        }
    }

    /// Reads a JSON config; relative Schottky paths are resolved against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        if let Some(SchottkySection::File { file }) = &mut cfg.schottky {
            if file.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *file = base.join(&*file);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks source exclusivity, file existence and tolerance signs.
    pub fn validate(&self) -> Result<()> {
        let sources = [self.builtin.is_some(), self.cocycle.is_some(), self.schottky.is_some()];
        if sources.iter().filter(|&&b| b).count() != 1 {
            return Err(Error::Config("exactly one of builtin, cocycle, schottky must be given".into()));
        }
        if self.cocycle.is_some() != self.subshift.is_some() {
            return Err(Error::Config("subshift and cocycle must be given together".into()));
        }
        if let Some(spec) = &self.subshift {
            spec.validate()?;
        }
        if let Some(name) = &self.builtin {
            if !BUILTINS.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown built-in model {name:?}")));
            }
        }
        if let Some(SchottkySection::File { file }) = &self.schottky {
            if !file.is_file() {
                return Err(Error::Config(format!("model file {} does not exist", file.display())));
            }
        }
        let t = &self.tolerances;
        let positive = [
            t.rpf,
            t.normalization,
            t.averaging,
            t.re_dkappa,
            t.im_dkappa,
            t.curvature,
            t.spectral_margin,
            t.resolvent,
            t.splitting,
            t.pressure_oracle,
            t.kappa_oracle,
            t.iterate_oracle,
            t.two_route,
            t.plateau,
            t.decay,
            t.scale,
        ];
        if positive.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.query.omega_width > 0.0) {
            return Err(Error::Config("omega_width must be positive".into()));
        }
        self.query.t_grid.validate()
    }

    /// Builds the model named by the config.
    pub fn build_model(&self) -> Result<Model<f64>> {
        let m = if let Some(name) = &self.builtin {
            Model::builtin_at(name, self.depth)?
        } else if let Some(s) = &self.schottky {
            let fx: SchottkyFile<f64> = match s {
                SchottkySection::File { file } => {
                    let text = fs::read_to_string(file).map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
                    serde_json::from_str(&text)?
                }
                SchottkySection::Inline(fx) => fx.clone(),
            };
            let name = if fx.description.is_empty() { "schottky".to_string() } else { fx.description.clone() };
            Model::from_schottky(name, &fx.spec, self.depth.unwrap_or(fx.depth), fx.psi)?
        } else {
            let spec = self.subshift.clone().ok_or(Error::Config("missing subshift".into()))?;
            let c = self.cocycle.as_ref().ok_or(Error::Config("missing cocycle".into()))?;
            let cocycle = calibrate(&spec, c.depth, c.k_values.clone(), c.psi.clone())?;
            let holonomy = match &self.holonomy {
                Some(h) => HolonomyData { group: h.group, theta: h.theta.clone() },
                None => HolonomyData::trivial(cocycle.tau.len()),
            };
            let m = Model::from_parts("custom", spec, cocycle, holonomy)?;
            match self.depth {
                Some(d) => m.at_depth(d)?,
                None => m,
            }
        };
        Ok(m)
    }

    /// Drift cases, defaulting by rank.
    pub fn cases(&self, rank: usize) -> Vec<QueryCase> {
        if let Some(c) = &self.query.cases {
            return c.clone();
        }
        let drift = |x: f64| (0..rank.saturating_sub(1)).map(|i| if i == 0 { x } else { 0.0 }).collect::<Vec<_>>();
        let mut out = vec![QueryCase { name: "zero-drift".into(), u: drift(0.0), profile: RProfile::Zero }];
        if rank >= 2 {
            out.push(QueryCase { name: "cube-root".into(), u: drift(0.19), profile: RProfile::CubeRoot });
            out.push(QueryCase { name: "sqrt-ell1".into(), u: drift(0.35), profile: RProfile::Sqrt { ell: 1.0 } });
        }
        out
    }

    fn model_key(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            builtin: &'a Option<String>,
            subshift: &'a Option<SubshiftSpec>,
            cocycle: &'a Option<CocycleSection>,
            holonomy: &'a Option<HolonomySection>,
            schottky: Option<String>,
            depth: Option<usize>,
        }
        let schottky = self.schottky.as_ref().map(|s| match s {
            SchottkySection::File { file } => fs::read_to_string(file).unwrap_or_default(),
            SchottkySection::Inline(fx) => serde_json::to_string(fx).unwrap_or_default(),
        });
        hash_of(&Key {
            builtin: &self.builtin,
            subshift: &self.subshift,
            cocycle: &self.cocycle,
            holonomy: &self.holonomy,
            schottky,
            depth: self.depth,
        })
    }

    fn spectral_key(&self) -> String {
        hash_of(&(self.model_key(), &self.characters))
    }

    fn mixing_key(&self) -> String {
        hash_of(&(self.spectral_key(), &self.query))
    }
}

fn hash_of<S: Serialize>(x: &S) -> String {
    let bytes = serde_json::to_vec(x).expect("config sections serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Stored stage output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<D> {
    /// Stage name.
    pub stage: String,
    /// Key of the configuration sections the stage depends on.
    pub key: String,
    /// Payload.
    pub data: D,
}

fn write_json<S: Serialize>(dir: &Path, name: &str, x: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(x).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    fs::write(dir.join(name), s)?;
    Ok(())
}

fn write_artifact<D: Serialize>(dir: &Path, stage: &str, key: String, data: &D) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(dir, &format!("{stage}.json"), &Artifact { stage: stage.to_string(), key, data })
}

fn read_artifact<D: DeserializeOwned>(dir: &Path, stage: &str, key: &str) -> Result<D> {
    let path = dir.join(format!("{stage}.json"));
    let text = fs::read_to_string(&path).map_err(|_| Error::MissingUpstreamArtifact(format!("{}", path.display())))?;
    let a: Artifact<D> = serde_json::from_str(&text)
        .map_err(|e| Error::MissingUpstreamArtifact(format!("{} is unreadable: {e}", path.display())))?;
    if a.key != key {
        return Err(Error::MissingUpstreamArtifact(format!("{} is stale", path.display())));
    }
    Ok(a.data)
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    /// Name.
    pub name: String,
    /// Verdict.
    pub passed: bool,
    /// Measured value.
    pub value: f64,
    /// Threshold the value was compared against.
    pub tolerance: f64,
}

impl Check {
    fn below(name: &str, value: f64, tolerance: f64) -> Self {
        Check { name: name.to_string(), passed: value < tolerance, value, tolerance }
    }
}

/// `model.json` payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStage {
    /// Calibrated model.
    pub model: ModelRecord<f64>,
    /// Number of windows.
    pub dim: usize,
    /// Rank.
    pub rank: usize,
    /// Calibration and averaging checks.
    pub checks: Vec<Check>,
}

/// `rpf.json` payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpfStage {
    /// Eigendata.
    pub rpf: RpfData<f64>,
    /// `ν(τ)`.
    pub nu_tau: f64,
    /// Fixed-point checks.
    pub checks: Vec<Check>,
}

/// `spectral.json` payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralStage {
    /// Lattice sweep over the `7^rank` grid and the characters.
    pub lattice: LatticeReport<f64>,
    /// Expansion, absent for lattice models.
    pub expansion: Option<SpectralExpansion<f64>>,
    /// Characters checked for the spectral bound at zero frequency.
    pub mixing_characters: Vec<CharacterLabel>,
    /// Cubic remainder ratio along the first kernel direction (or `𝗏`).
    pub cubic_ratio: Option<f64>,
    /// Expansion, bound and resolvent checks.
    pub checks: Vec<Check>,
}

/// Decay check for a nontrivial character.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Character.
    pub character: CharacterLabel,
    /// `t^{(rank-1)/2} J_t` along the grid.
    pub scaled: Vec<f64>,
    /// `|last / first|`.
    pub ratio: f64,
}

/// `mixing.json` payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingStage {
    /// Time grid in mean-roof units.
    pub t_grid: TimeGrid,
    /// Whether the grid came from the command line.
    pub t_grid_override: bool,
    /// Limit report per case.
    pub cases: BTreeMap<String, LimitReport<f64>>,
    /// Decay report, when a mixing nontrivial character exists.
    pub decay: Option<DecayReport>,
    /// Plateau, monotonicity and decay checks.
    pub checks: Vec<Check>,
}

/// `oracle.json` payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleStage {
    /// Oracle agreement checks.
    pub checks: Vec<Check>,
}

/// `report.json` payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Model name.
    pub model: String,
    /// Profile actually run.
    pub profile: RunProfile,
    /// Whether the lattice sweep flagged the model.
    pub lattice: bool,
    /// Stages that were skipped and why.
    pub skipped: BTreeMap<String, String>,
    /// Time grid in mean-roof units, when the mixing stage ran.
    pub t_grid: Option<TimeGrid>,
    /// Whether the grid came from the command line.
    pub t_grid_override: bool,
    /// All checks in stage order.
    pub checks: Vec<Check>,
    /// Names of failed checks.
    pub failed: Vec<String>,
    /// Whether every check passed.
    pub passed: bool,
}

/// Model stage: calibration and averaging checks, then `model.json`.
pub fn stage_model(cfg: &RunConfig, out: &Path) -> Result<ModelStage> {
    let m = cfg.build_model()?;
    let data = model_stage_data(cfg, &m);
    write_artifact(out, "model", cfg.model_key(), &data)?;
    Ok(data)
}

fn model_stage_data(cfg: &RunConfig, m: &Model<f64>) -> ModelStage {
    let tol = &cfg.tolerances;
    let rank = m.rank();
    let g = &m.rpf.gibbs;
    let mut khat = vec![0.0; rank];
    let mut kint = vec![0.0; rank];
    for (i, &w) in g.iter().enumerate() {
        for d in 0..rank {
            khat[d] += w * m.cocycle.khat[i][d];
            kint[d] += w * m.cocycle.scale * m.cocycle.k_values[i][d];
        }
    }
    let khat_norm = khat.iter().map(|x| x * x).sum::<f64>().sqrt();
    let k_gap = kint
        .iter()
        .zip(&m.cocycle.v_dir)
        .map(|(k, v)| (k - m.nu_tau * v).powi(2))
        .sum::<f64>()
        .sqrt();
    let pot: Vec<f64> = m.cocycle.tau.iter().map(|t| -t).collect();
    let pr = pressure_of(&m.space, &pot).map(f64::abs).unwrap_or(f64::INFINITY);
    ModelStage {
        model: m.record(),
        dim: m.dim(),
        rank,
        checks: vec![
            Check::below("calibration_pressure", pr, tol.get(1e-10)),
            Check::below("averaging_khat", khat_norm, tol.get(tol.averaging)),
            Check::below("averaging_k", k_gap, tol.get(tol.averaging)),
        ],
    }
}

fn load_model(cfg: &RunConfig, out: &Path) -> Result<Model<f64>> {
    let data: ModelStage = read_artifact(out, "model", &cfg.model_key())?;
    Model::from_record(data.model)
}

/// RPF stage: fixed-point residuals, then `rpf.json` and `gibbs.csv`.
pub fn stage_rpf(cfg: &RunConfig, out: &Path) -> Result<RpfStage> {
    let m = load_model(cfg, out)?;
    let data = rpf_stage_data(cfg, &m);
    write_artifact(out, "rpf", cfg.model_key(), &data)?;
    fs::write(out.join("gibbs.csv"), gibbs_csv(&m.space, &m.rpf))?;
    Ok(data)
}

/// Largest residuals of `L 1 = 1` and `L* (ν h) = ν h` for the normalized
/// operator, and `|ν(h) - 1|`.
pub fn fixed_point_residuals(m: &Model<f64>) -> (f64, f64, f64) {
    let fam = OperatorFamily::new(m, 0.0);
    let triv = CharacterLabel::trivial(m.holonomy.group);
    let l = fam.matrix_real(&vec![0.0; m.rank()], &triv);
    let one = DVector::from_element(m.dim(), C::new(1.0, 0.0));
    let gibbs = DVector::from_iterator(m.dim(), m.rpf.gibbs.iter().map(|&g| C::new(g, 0.0)));
    let sup = |x: DVector<C<f64>>| x.iter().map(|z| cabs(*z)).fold(0.0, f64::max);
    let r1 = sup(&l * &one - &one);
    let r2 = sup(l.transpose() * &gibbs - &gibbs);
    let nh: f64 = m.rpf.nu.iter().zip(&m.rpf.h).map(|(a, b)| a * b).sum();
    (r1, r2, (nh - 1.0).abs())
}

fn rpf_stage_data(cfg: &RunConfig, m: &Model<f64>) -> RpfStage {
    let tol = &cfg.tolerances;
    let (rh, rn) = rpf_residuals(&m.space, &m.cocycle, &m.rpf);
    let (r1, r2, nh) = fixed_point_residuals(m);
    RpfStage {
        rpf: m.rpf.clone(),
        nu_tau: m.nu_tau,
        checks: vec![
            Check::below("rpf_eigenfunction", rh.max(r1), tol.get(tol.rpf)),
            Check::below("rpf_eigenmeasure", rn.max(r2), tol.get(tol.rpf)),
            Check::below("rpf_normalization", nh, tol.get(tol.normalization)),
        ],
    }
}

/// Deterministic nonzero sample frequencies for the resolvent checks.
pub fn sample_frequencies(rank: usize, count: usize) -> Vec<Vec<f64>> {
    (1..=count)
        .map(|k| {
            let k = k as f64;
            (0..rank)
                .map(|d| {
                    let s = if d % 2 == 0 { 1.0 } else { -1.0 };
                    s * (0.37 * k + 0.11 * d as f64).sin() * (0.5 + 0.25 * k)
                })
                .collect()
        })
        .collect()
}

/// Spectral stage: lattice sweep, expansion, bound and resolvent checks, then
/// `spectral.json`.
pub fn stage_spectral(cfg: &RunConfig, out: &Path) -> Result<SpectralStage> {
    let _: RpfStage = read_artifact(out, "rpf", &cfg.model_key())?;
    let m = load_model(cfg, out)?;
    let data = spectral_stage_data(cfg, &m)?;
    write_artifact(out, "spectral", cfg.spectral_key(), &data)?;
    Ok(data)
}

fn spectral_stage_data(cfg: &RunConfig, m: &Model<f64>) -> Result<SpectralStage> {
    let tol = &cfg.tolerances;
    let rank = m.rank();
    let characters = enumerate_characters(m.holonomy.group, cfg.characters.max_freq);
    let grid = sweep_grid(rank, 3.0, 1.0);
    let lattice = lattice_diagnostic(m, &grid, &characters);
    let mixing_characters: Vec<CharacterLabel> = characters
        .iter()
        .filter(|mu| !mu.is_trivial() && !lattice.nonmixing_characters.contains(mu))
        .cloned()
        .collect();
    if lattice.lattice {
        return Ok(SpectralStage { lattice, expansion: None, mixing_characters, cubic_ratio: None, checks: vec![] });
    }
    let exp = expand_kappa(m, &DEFAULT_STEPS)?;
    let c = &exp.checks;
    let mut checks = vec![
        Check::below("expansion_re_dkappa", c.re_dkappa, tol.get(tol.re_dkappa)),
        Check::below("expansion_im_dkappa", c.dkappa_rel_err, tol.get(tol.im_dkappa)),
        Check::below("expansion_hessian_symmetric", c.d2_imag, tol.get(tol.re_dkappa)),
        Check::below("expansion_hessian_negative", c.d2_max_eigenvalue, tol.hessian_max),
        Check::below("curvature_consistency", c.curvature_rel_gap, tol.get(tol.curvature)),
    ];
    let dir: Vec<f64> = (0..rank).map(|d| if d == rank.min(2) - 1 { 1.0 } else { 0.0 }).collect();
    let ratio = cubic_ratio(m, &exp, &dir, 0.02);
    checks.push(Check { name: "cubic_remainder".into(), passed: (6.0..=10.0).contains(&ratio), value: ratio, tolerance: 8.0 });

    // Spectral bound: trivial character off zero, mixing characters everywhere.
    let fam = OperatorFamily::new(m, 0.0);
    let mut pts: Vec<(Vec<f64>, CharacterLabel)> =
        grid.iter().map(|v| (v.clone(), CharacterLabel::trivial(m.holonomy.group))).collect();
    let mut full = grid.clone();
    full.push(vec![0.0; rank]);
    for mu in &mixing_characters {
        pts.extend(full.iter().map(|v| (v.clone(), mu.clone())));
    }
    let max_mod = pts
        .iter()
        .map(|(v, mu)| {
            let vc: Vec<C<f64>> = v.iter().map(|&x| C::new(x, 0.0)).collect();
            cabs(leading_eigenvalue(&fam, &vc, mu).0)
        })
        .fold(0.0, f64::max);
    checks.push(Check::below("spectral_bound", max_mod, 1.0 - tol.get(tol.spectral_margin)));

    let mut res = 0.0f64;
    let mut split = 0.0f64;
    for v in sample_frequencies(rank, 10) {
        let op = assemble(m, &OperatorParams::frequency(v, CharacterLabel::trivial(m.holonomy.group)), m.cocycle.depth)?;
        res = res.max(neumann_resolvent(&op)?.1);
        let s = spectral_split(&op)?;
        split = split.max(s.identity_residual.unwrap_or(f64::INFINITY));
    }
    checks.push(Check::below("resolvent_identity", res, tol.get(tol.resolvent)));
    checks.push(Check::below("resolvent_splitting", split, tol.get(tol.splitting)));
    Ok(SpectralStage { lattice, expansion: Some(exp), mixing_characters, cubic_ratio: Some(ratio), checks })
}

/// Mixing stage: limit reports per case and the decay check, then
/// `mixing.json` and `mixing.csv`.
pub fn stage_mixing(cfg: &RunConfig, out: &Path) -> Result<Option<MixingStage>> {
    let spec: SpectralStage = read_artifact(out, "spectral", &cfg.spectral_key())?;
    let m = load_model(cfg, out)?;
    let data = match mixing_stage_data(cfg, &m, &spec)? {
        Some(d) => d,
        None => return Ok(None),
    };
    write_artifact(out, "mixing", cfg.mixing_key(), &data)?;
    let mut csv = String::from("case,");
    csv.push_str("t,jt,scaled,target,deviation,error\n");
    for (name, rep) in &data.cases {
        for line in limit_csv(rep).lines().skip(1) {
            csv.push_str(&format!("{name},{line}\n"));
        }
    }
    fs::write(out.join("mixing.csv"), csv)?;
    Ok(Some(data))
}

/// Query with constant `f`, isotropic bumps and the given character on both
/// sides (`μ₁ = μ`, `μ₂ = μ̄`).
pub fn constant_query(m: &Model<f64>, width: f64, mu: &CharacterLabel, case: &QueryCase, t_grid: Vec<f64>) -> MixingQuery<f64> {
    let mut psi1 = TestFunction::constant(m, GaussianBump::isotropic(m.rank(), width));
    psi1.mu = mu.clone();
    let mut psi2 = psi1.clone();
    psi2.mu = mu.conjugate();
    MixingQuery { psi1, psi2, u_drift: case.u.clone(), profile: case.profile, t_grid }
}

fn mixing_stage_data(cfg: &RunConfig, m: &Model<f64>, spec: &SpectralStage) -> Result<Option<MixingStage>> {
    let exp = match &spec.expansion {
        Some(e) => e,
        None => return Ok(None),
    };
    let tol = &cfg.tolerances;
    let times = cfg.query.t_grid.times(m.nu_tau);
    let triv = CharacterLabel::trivial(m.holonomy.group);
    let mut cases = BTreeMap::new();
    let mut checks = Vec::new();
    for case in cfg.cases(m.rank()) {
        let q = constant_query(m, cfg.query.omega_width, &triv, &case, times.clone());
        let rep = verify_limit(m, exp, &q, 1.0)?;
        checks.push(Check::below(&format!("plateau:{}", case.name), rep.plateau_deviation.abs(), tol.get(tol.plateau)));
        checks.push(Check {
            name: format!("monotone:{}", case.name),
            passed: rep.monotone,
            value: if rep.monotone { 1.0 } else { 0.0 },
            tolerance: 1.0,
        });
        cases.insert(case.name.clone(), rep);
    }
    let decay = match spec.mixing_characters.first() {
        Some(mu) if cfg.query.decay => {
            let case = QueryCase { name: "decay".into(), u: vec![0.0; m.rank() - 1], profile: RProfile::Zero };
            let q = constant_query(m, cfg.query.omega_width, mu, &case, times.clone());
            let rep = verify_limit(m, exp, &q, 1.0)?;
            let scaled: Vec<f64> = rep.rows.iter().map(|r| r.scaled).collect();
            let first = scaled[0].abs();
            let ratio = if first > 0.0 { scaled[scaled.len() - 1].abs() / first } else { 0.0 };
            checks.push(Check::below("decay", ratio, tol.get(tol.decay)));
            Some(DecayReport { character: mu.clone(), scaled, ratio })
        }
        _ => None,
    };
    Ok(Some(MixingStage { t_grid: cfg.query.t_grid, t_grid_override: cfg.t_grid_override, cases, decay, checks }))
}

/// Oracle stage: orbit-sum pressure and `κ`, preimage iterates, and the three
/// correlation routes; writes `oracle.json`.
pub fn stage_oracle(cfg: &RunConfig, out: &Path) -> Result<OracleStage> {
    let m = load_model(cfg, out)?;
    let data = oracle_stage_data(cfg, &m)?;
    write_artifact(out, "oracle", cfg.model_key(), &data)?;
    Ok(data)
}

/// Largest orbit period whose enumeration stays within the default budget.
fn orbit_period(m: &Model<f64>, cap: usize) -> usize {
    let n = m.spec.n as f64;
    ((DEFAULT_BUDGET as f64).ln() / n.ln()).floor().min(cap as f64) as usize
}

fn oracle_stage_data(cfg: &RunConfig, m: &Model<f64>) -> Result<OracleStage> {
    let tol = &cfg.tolerances;
    let rank = m.rank();
    let triv = CharacterLabel::trivial(m.holonomy.group);
    let mut checks = Vec::new();

    let n_max = orbit_period(m, 20);
    let mut pgap = 0.0f64;
    for s in [0.0, 1.0, 1.1] {
        let pot: Vec<f64> = m.cocycle.tau.iter().map(|t| -s * t).collect();
        let a = pressure_of(&m.space, &pot)?;
        let b = pressure_by_orbits(m, &pot, n_max)?;
        pgap = pgap.max((a - b).abs());
    }
    checks.push(Check::below("oracle_pressure", pgap, tol.get(tol.pressure_oracle)));

    let fam = OperatorFamily::new(m, 0.0);
    let v: Vec<f64> = (0..rank).map(|d| if d == 0 { 0.2 } else { 0.1 }).collect();
    let vc: Vec<C<f64>> = v.iter().map(|&x| C::new(x, 0.0)).collect();
    let k_orbit = kappa_by_orbits(m, &v, &triv, orbit_period(m, 14))?;
    let k_eig = leading_eigenvalue(&fam, &vc, &triv).0;
    checks.push(Check::below("oracle_kappa", cabs(k_orbit - k_eig), tol.get(tol.kappa_oracle)));

    let params = OperatorParams::frequency(v, triv.clone());
    let h: Vec<C<f64>> = (0..m.dim()).map(|i| C::new(1.0 + 0.5 * (i as f64).sin(), 0.25 * (i as f64).cos())).collect();
    let n_it = orbit_period(m, 6);
    let a = iterate_by_preimages(m, &params, &h, n_it)?;
    let op = assemble(m, &params, m.cocycle.depth)?;
    let b = crate::transfer::apply_iterate(&op, &DVector::from_vec(h), n_it)?;
    let it_gap = a.iter().zip(b.iter()).map(|(x, y)| cabs(*x - *y)).fold(0.0, f64::max);
    checks.push(Check::below("oracle_iterate", it_gap, tol.get(tol.iterate_oracle)));

    if rank >= 1 && !lattice_like(m) {
        let case = QueryCase { name: "two-route".into(), u: vec![0.0; rank - 1], profile: RProfile::Zero };
        let mut widths = vec![2.0; rank];
        widths[0] = 0.1;
        let t = 10.0 * m.nu_tau;
        let mut q = constant_query(m, 1.0, &triv, &case, vec![t]);
        q.psi1.omega.width = widths.clone();
        q.psi2.omega.width = widths;
        let s = correlation_jt_series(m, &q, t, 100_000)?.value;
        let f = correlation_jt_fourier(m, &q, t, 1e-3)?.value;
        let c = correlation_by_cylinders(m, &q, t, m.cocycle.depth, DEFAULT_BUDGET)?.value;
        let scale = cabs(s).max(f64::MIN_POSITIVE);
        checks.push(Check::below("oracle_series_fourier", cabs(s - f) / scale, tol.get(tol.two_route)));
        checks.push(Check::below("oracle_series_cylinders", cabs(s - c) / scale, tol.get(1e-12)));
    }
    Ok(OracleStage { checks })
}

fn lattice_like(m: &Model<f64>) -> bool {
    lattice_diagnostic(m, &sweep_grid(m.rank(), 3.0, 1.0), &[]).lattice
}

/// Runs every stage the profile asks for and writes `report.json`.
///
/// The model is built before anything is written, so configuration errors
/// leave the output directory untouched.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Report> {
    cfg.validate()?;
    let m = cfg.build_model()?;
    let model = model_stage_data(cfg, &m);
    write_artifact(out, "model", cfg.model_key(), &model)?;
    let rpf = stage_rpf(cfg, out)?;
    let spectral = stage_spectral(cfg, out)?;
    let mut checks: Vec<Check> = model.checks.into_iter().chain(rpf.checks).chain(spectral.checks).collect();
    let mut skipped = BTreeMap::new();
    let lattice = spectral.lattice.lattice;
    let mut profile = cfg.profile;
    let mut t_grid = None;
    if lattice {
        profile = RunProfile::Diagnostics;
        skipped.insert("mixing".to_string(), "lattice model".to_string());
        skipped.insert("oracle".to_string(), "lattice model".to_string());
    } else if cfg.profile == RunProfile::Full {
        if let Some(mix) = stage_mixing(cfg, out)? {
            t_grid = Some(mix.t_grid);
            checks.extend(mix.checks);
        }
        checks.extend(stage_oracle(cfg, out)?.checks);
    } else {
        skipped.insert("mixing".to_string(), "diagnostics profile".to_string());
        skipped.insert("oracle".to_string(), "diagnostics profile".to_string());
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let report = Report {
        model: m.name.clone(),
        profile,
        lattice,
        skipped,
        t_grid,
        t_grid_override: cfg.t_grid_override,
        passed: failed.is_empty(),
        failed,
        checks,
    };
    write_artifact(out, "report", cfg.mixing_key(), &report)?;
    Ok(report)
}
