//! Error type shared by every module in the crate.

/// Everything that can go wrong across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A quantizer was requested with zero levels.
    #[error("level count must be at least 1")]
    InvalidLevels,

    /// A model or solver parameter is outside its domain.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// An iterative solver ran out of iterations. The last residual is
    /// reported instead of silently returning an unconverged result.
    #[error("solver did not converge within {iterations} iterations (last residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },

    /// A distortion level must be strictly positive (the rate at zero
    /// distortion is infinite for every model with infinite support).
    #[error("distortion level must be strictly positive, got {0}")]
    NonPositiveEps(f64),

    /// A truncation bias budget cannot be met within the coordinate cap.
    #[error(
        "truncation bias budget {budget:e} needs about {required_j} coordinates, \
         more than the cap of {j_max}"
    )]
    BiasBudget {
        budget: f64,
        j_max: usize,
        required_j: usize,
    },

    /// Empirical distortion needs at least as many sampled coordinates as the
    /// plan quantizes.
    #[error("truncation {got} is shorter than the plan's {needed} quantized coordinates")]
    TruncationTooShort { needed: usize, got: usize },

    /// Too few samples landed inside the ball for a usable estimate.
    #[error(
        "only {hits} of {samples} samples hit the ball; the smallest sampled norm \
         was {min_norm:.6e}; increase the radius or the sample count"
    )]
    RareEvent {
        hits: u64,
        samples: u64,
        min_norm: f64,
    },

    /// A process name failed to parse or is not in the catalog.
    #[error("unknown process {0:?}")]
    UnknownProcess(String),

    /// A catalog process was given a malformed parameter list.
    #[error("process {0:?}: {1}")]
    ProcessParam(String, &'static str),

    /// A numeric grid argument failed to parse.
    #[error("malformed grid {0:?}: {1}")]
    MalformedGrid(String, &'static str),

    /// A covariance evaluation produced an asymmetric matrix (kernel bug).
    #[error("covariance matrix is not symmetric (max asymmetry {0:e})")]
    AsymmetricKernel(f64),

    /// The discretized covariance has a significantly negative eigenvalue.
    #[error("covariance matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    /// Tensor-product asymptotics require all factors to share one index.
    #[error("tensor factors must share one decay index (got {0} and {1})")]
    MixedTensorIndices(f64, f64),

    /// The eigenvalue sequence does not have a finite trace.
    #[error("eigenvalue tail diverges: index b = {b} with log exponent a = {a}")]
    DivergentTail { b: f64, a: f64 },

    /// A per-block level is beyond what the scalar solver materializes.
    #[error("codebook level {0} exceeds the solvable range")]
    LevelTooLarge(u64),

    /// A level budget so large the per-block levels overflow integers; only
    /// possible for finite spectra, where the block count cannot grow.
    #[error("budget too large for a finite spectrum: log level {0:.2} overflows an integer")]
    LevelOverflow(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
