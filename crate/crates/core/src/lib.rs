//! Thermodynamic formalism on subshifts of finite type with vector-valued
//! return cocycles and abelian holonomy.
//!
//! The crate builds holonomy-twisted transfer operators on depth-`k` locally
//! constant function spaces, solves their RPF problems, expands the leading
//! eigenvalue around zero frequency, and evaluates suspension-flow correlation
//! functions both as exact symbolic series and by Fourier inversion of the
//! resolvent, so the local-mixing asymptotics can be checked against the
//! closed-form limit.
//!
//! All numerical types are generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64`.

pub mod cocycle;
pub mod error;
pub mod expansion;
pub mod holonomy;
pub mod linalg;
pub mod mixing;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod scalar;
pub mod schottky;
pub mod sft;
pub mod special;
pub mod thermo;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Calibrated cocycle tables in double precision.
pub type Cocycles = cocycle::CocycleData<f64>;
/// Holonomy tables in double precision.
pub type Holonomy = cocycle::HolonomyData<f64>;
/// RPF eigendata in double precision.
pub type Rpf = thermo::RpfData<f64>;
/// Complete symbolic model in double precision.
pub type Model = model::Model<f64>;
/// Leading-eigenvalue expansion in double precision.
pub type Expansion = expansion::SpectralExpansion<f64>;
/// Normalized transfer operator in double precision.
pub type Operator = transfer::TransferMatrix<f64>;
/// Schottky semigroup in double precision.
pub type Schottky = schottky::SchottkySpec<f64>;
/// Correlation query in double precision.
pub type Query = mixing::MixingQuery<f64>;
