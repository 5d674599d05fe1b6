//! Complete symbolic models and the built-in fixtures.

use serde::{Deserialize, Serialize};

use crate::cocycle::{calibrate, CocycleData, HolonomyData};
use crate::error::{Error, Result};
use crate::holonomy::{GroupElement, GroupSpec};
use crate::scalar::{r, Real};
use crate::schottky::SchottkySpec;
use crate::sft::{SubshiftSpec, WindowSpace};
use crate::thermo::{nu_tau, rpf_solve, RpfData};

/// Names of the built-in models.
pub const BUILTINS: [&str; 6] = ["full2-const", "golden-const", "golden-r1", "golden-r2", "R2A", "R2A-Z2"];

const R2A_JSON: &str = include_str!("../../../fixtures/r2a.json");
const R2A_Z2_JSON: &str = include_str!("../../../fixtures/r2a_z2.json");

/// Schottky fixture file: generators, intervals, covector and default depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SchottkyFile<T: Real> {
    /// Free-form description.
    #[serde(default)]
    pub description: String,
    /// Generators and attracting intervals.
    #[serde(flatten)]
    pub spec: SchottkySpec<T>,
    /// Covector `ψ`.
    pub psi: Vec<T>,
    /// Default depth.
    #[serde(default = "one")]
    pub depth: usize,
}

fn one() -> usize {
    1
}

/// Parses the committed `R2A` fixture.
pub fn r2a_fixture<T: Real>() -> SchottkyFile<T> {
    serde_json::from_str(R2A_JSON).expect("committed fixture parses")
}

/// Parses the committed `R2A-Z2` fixture.
pub fn r2a_z2_fixture<T: Real>() -> SchottkyFile<T> {
    serde_json::from_str(R2A_Z2_JSON).expect("committed fixture parses")
}

/// Subshift, calibrated cocycles, holonomy and the RPF data of `L_{-τ}`.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    /// Model name.
    pub name: String,
    /// Underlying subshift.
    pub spec: SubshiftSpec,
    /// Calibrated cocycles.
    pub cocycle: CocycleData<T>,
    /// Holonomy cocycle.
    pub holonomy: HolonomyData<T>,
    /// Window space of the cocycle depth.
    pub space: WindowSpace,
    /// RPF data at `a = 0`.
    pub rpf: RpfData<T>,
    /// `ν(τ)`.
    pub nu_tau: T,
    /// Source Schottky semigroup, when the model was built from one.
    pub schottky: Option<SchottkySpec<T>>,
}

/// Serializable form of a [`Model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelRecord<T: Real> {
    /// Model name.
    pub name: String,
    /// Underlying subshift.
    pub subshift: SubshiftSpec,
    /// Window labels, aligned with every table.
    pub windows: Vec<String>,
    /// Calibrated cocycles.
    pub cocycle: CocycleData<T>,
    /// Holonomy cocycle.
    pub holonomy: HolonomyData<T>,
    /// Source Schottky semigroup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schottky: Option<SchottkySpec<T>>,
}

impl<T: Real> Model<T> {
    /// Assembles a model and solves its RPF problem.
    pub fn from_parts(
        name: impl Into<String>,
        spec: SubshiftSpec,
        cocycle: CocycleData<T>,
        holonomy: HolonomyData<T>,
    ) -> Result<Self> {
        spec.validate()?;
        let space = WindowSpace::new(&spec, cocycle.depth);
        if cocycle.tau.len() != space.dim() || holonomy.theta.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: cocycle.tau.len() });
        }
        let rpf = rpf_solve(&space, &cocycle, T::zero())?;
        let nu_tau = nu_tau(&rpf, &cocycle);
        Ok(Model { name: name.into(), spec, cocycle, holonomy, space, rpf, nu_tau, schottky: None })
    }

    /// Builds a model from a Schottky semigroup.
    pub fn from_schottky(name: impl Into<String>, s: &SchottkySpec<T>, depth: usize, psi: Vec<T>) -> Result<Self> {
        let (spec, cocycle, holonomy) = s.build_cocycle_model(depth, psi)?;
        let mut m = Model::from_parts(name, spec, cocycle, holonomy)?;
        m.schottky = Some(s.clone());
        Ok(m)
    }

    /// Built-in model by name at its default depth.
    pub fn builtin(name: &str) -> Result<Self> {
        Self::builtin_at(name, None)
    }

    /// Built-in model by name, optionally at a different depth.
    pub fn builtin_at(name: &str, depth: Option<usize>) -> Result<Self> {
        let m = match name {
            "full2-const" => {
                let spec = SubshiftSpec::full(2);
                let c = calibrate(&spec, 0, vec![vec![T::one()]; 2], vec![T::one()])?;
                Model::from_parts(name, spec, c, HolonomyData::trivial(2))?
            }
            "golden-const" => {
                let spec = SubshiftSpec::golden_mean();
                let c = calibrate(&spec, 0, vec![vec![T::one()]; 2], vec![T::one()])?;
                Model::from_parts(name, spec, c, HolonomyData::trivial(2))?
            }
            "golden-r1" => {
                let spec = SubshiftSpec::golden_mean();
                let raw = [1.0, 1.7, 0.6].iter().map(|&x| vec![r::<T>(x)]).collect();
                let c = calibrate(&spec, 1, raw, vec![T::one()])?;
                Model::from_parts(name, spec, c, HolonomyData::trivial(3))?
            }
            "golden-r2" => {
                let spec = SubshiftSpec::golden_mean();
                let raw = [[1.0, 0.4], [1.3, 1.9], [0.7, 0.2]]
                    .iter()
                    .map(|p| vec![r::<T>(p[0]), r::<T>(p[1])])
                    .collect();
                let c = calibrate(&spec, 1, raw, vec![r(0.5), r(0.5)])?;
                let group = GroupSpec { p: 1, q: 0 };
                let theta = [1i8, -1, 1].iter().map(|&s| GroupElement::new(vec![s], vec![])).collect();
                Model::from_parts(name, spec, c, HolonomyData { group, theta })?
            }
            "R2A" | "R2A-Z2" => {
                let fx: SchottkyFile<T> = if name == "R2A" { r2a_fixture() } else { r2a_z2_fixture() };
                Model::from_schottky(name, &fx.spec, depth.unwrap_or(fx.depth), fx.psi)?
            }
            other => return Err(Error::Config(format!("unknown built-in model {other:?}"))),
        };
        match depth {
            Some(d) if d != m.cocycle.depth => m.at_depth(d),
            _ => Ok(m),
        }
    }

    /// Same model with all tables repeated onto `(d+1)`-windows.
    pub fn at_depth(&self, depth: usize) -> Result<Self> {
        if depth < self.cocycle.depth {
            return Err(Error::DepthMismatch { requested: depth, cocycle: self.cocycle.depth });
        }
        if depth == self.cocycle.depth {
            return Ok(self.clone());
        }
        let to = WindowSpace::new(&self.spec, depth);
        let cocycle = self.cocycle.lift(&self.space, &to);
        let holonomy = self.holonomy.lift(&self.space, &to);
        let mut m = Model::from_parts(self.name.clone(), self.spec.clone(), cocycle, holonomy)?;
        m.schottky = self.schottky.clone();
        Ok(m)
    }

    /// Number of windows.
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Rank of `𝔞`.
    pub fn rank(&self) -> usize {
        self.cocycle.rank
    }

    /// Serializable record.
    pub fn record(&self) -> ModelRecord<T> {
        ModelRecord {
            name: self.name.clone(),
            subshift: self.spec.clone(),
            windows: self.space.windows.iter().map(|w| w.to_string()).collect(),
            cocycle: self.cocycle.clone(),
            holonomy: self.holonomy.clone(),
            schottky: self.schottky.clone(),
        }
    }

    /// Rebuilds a model from its record.
    pub fn from_record(rec: ModelRecord<T>) -> Result<Self> {
        let mut m = Model::from_parts(rec.name, rec.subshift, rec.cocycle, rec.holonomy)?;
        m.schottky = rec.schottky;
        Ok(m)
    }
}
