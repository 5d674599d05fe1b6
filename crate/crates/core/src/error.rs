//! Error type shared by all modules.

use thiserror::Error;

/// Failures reported by the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed transition matrix or other invalid model input.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// A row or column of the transition matrix has no allowed transition.
    #[error("dead state {0} in transition matrix")]
    DeadState(usize),
    /// No power of the transition matrix up to `N^2` is positive.
    #[error("transition matrix is not topologically mixing")]
    NotMixing,
    /// A word is not admissible for the subshift.
    #[error("word {0} is not admissible")]
    Inadmissible(String),
    /// A word is too short for the requested number of windows.
    #[error("word of length {len} is too short for depth {depth}")]
    WordTooShort { len: usize, depth: usize },
    /// Vector or group dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    /// The roof `ψ(K)` is not positive on some window.
    #[error("roof is not positive on window {0}")]
    NonPositiveRoof(String),
    /// Bisection could not bracket a root.
    #[error("root bracketing failed: {0}")]
    RootBracketFailure(String),
    /// Requested depth is smaller than the cocycle depth.
    #[error("depth {requested} is smaller than cocycle depth {cocycle}")]
    DepthMismatch { requested: usize, cocycle: usize },
    /// The maximal eigenvalue is not separated from the rest of the spectrum.
    #[error("spectral gap {gap:e} below threshold {threshold:e}")]
    GapTooSmall { gap: f64, threshold: f64 },
    /// The Perron eigenvector has entries of both signs.
    #[error("Perron eigenvector is not positive")]
    NegativeEigenfunction,
    /// `1` lies within tolerance of the spectrum.
    #[error("resolvent is singular: distance {0:e} from 1 to the spectrum")]
    SingularResolvent(f64),
    /// The lattice diagnostic flagged a unit-modulus eigenvalue.
    #[error("lattice model: |kappa| = 1 at frequency {0:?}")]
    LatticeModel(Vec<f64>),
    /// Richardson levels disagree beyond tolerance.
    #[error("finite-difference extrapolation disagreement {0:e} above noise floor")]
    NoiseFloor(f64),
    /// A vector expected in `ker ψ` is not.
    #[error("vector not in ker psi: psi(u) = {0:e}")]
    NotInKernel(f64),
    /// Argument outside the domain of a special function.
    #[error("argument outside domain: {0}")]
    DomainError(String),
    /// The correlation series did not terminate within `k_max` steps.
    #[error("series not terminated after {0} steps")]
    SeriesNotTerminated(usize),
    /// Grid refinement changed the quadrature beyond tolerance.
    #[error("quadrature unconverged: refinement difference {diff:e} exceeds {tol:e}")]
    QuadratureUnconverged { diff: f64, tol: f64 },
    /// Enumeration exceeded its configured budget.
    #[error("enumeration budget of {0} terms exceeded")]
    CombinatorialBlowup(u64),
    /// Orbit-sum ratios did not settle.
    #[error("orbit-sum ratios did not converge: {0}")]
    NoConvergence(String),
    /// Trace of a product is inside `[-2, 2]`.
    #[error("word {0} is not loxodromic")]
    NotLoxodromic(String),
    /// Boundary point outside the ping-pong domain.
    #[error("boundary point outside ping-pong domain: {0}")]
    OutsideDomain(String),
    /// Ping-pong intervals fail the containment test.
    #[error("ping-pong check failed: {0}")]
    PingPong(String),
    /// Configuration problem.
    #[error("config error: {0}")]
    Config(String),
    /// Stage artifact missing or stale.
    #[error("missing upstream artifact: {0}")]
    MissingUpstreamArtifact(String),
    /// I/O failure.
    #[error("io error: {0}")]
    Io(String),
}

/// Result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
