use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("layer {layer}: {msg}")]
    Layer { layer: usize, msg: String },

    #[error("decoder Jacobian is rank-deficient ({context})")]
    RankDeficientJacobian { context: String },

    #[error("requested {requested} modes but snapshot matrix has numerical rank {rank}")]
    Rank { requested: usize, rank: usize },

    #[error(
        "step {step} failed to converge after {iterations} iterations \
         (residual norm {residual_norm:.3e})"
    )]
    StepFailure {
        step: usize,
        iterations: usize,
        residual_norm: f64,
    },

    #[error("line search found no strong-Wolfe step within {trials} trials")]
    LineSearchFailure { trials: usize },

    #[error("line search requires a descent direction (phi'(0) = {slope:.3e} >= 0)")]
    NotDescentDirection { slope: f64 },

    #[error("Cholesky factorization failed even after diagonal regularization")]
    CholeskyFailure,

    #[error("linear solve failed: matrix is singular at pivot {pivot}")]
    SingularMatrix { pivot: usize },

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("degenerate scaling channel {channel}: max == min")]
    DegenerateChannel { channel: usize },

    #[error("multistep coefficients must satisfy sum(alpha) == 0 (got {sum:.3e})")]
    SchemeCoefficients { sum: f64 },

    #[error("basis is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("error bound inapplicable: dt = {dt} >= |alpha0|/(|beta0| kappa) = {limit}")]
    BoundInapplicable { dt: f64, limit: f64 },

    #[error("artifact format error: {0}")]
    Format(String),

    #[error("checksum mismatch for {name}: manifest {expected:016x}, file {actual:016x}")]
    ChecksumMismatch {
        name: String,
        expected: u64,
        actual: u64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
