use thiserror::Error;

/// Errors raised by the lattice, kernel, disorder, alloy, charfun and spectra
/// modules. Harness code maps these onto process exit codes via
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty plateau: n = {n} is below n_o = {n_min} or the annulus [{r_lo}, {r_hi}) is too thin for L = {radius}")]
    EmptyPlateau {
        n: u64,
        n_min: u64,
        r_lo: u64,
        r_hi: u64,
        radius: u64,
    },

    #[error("bad radius: layer index r = {r} must satisfy r >= 2L = {min}")]
    BadRadius { r: u64, min: u64 },

    #[error("kernel is singular at the origin")]
    SingularOrigin,

    #[error("split set is not a subset of the configuration window (first offending point {0})")]
    NotSubset(String),

    #[error("configuration window does not cover the truncation cube of radius {radius} around {center}")]
    WindowTooSmall { radius: u64, center: String },

    #[error("source {source_point} is at distance {distance:.3} < 2L = {min} from the box center")]
    SourceTooClose {
        source_point: String,
        distance: f64,
        min: u64,
    },

    #[error("orthant violation: {0}")]
    OrthantViolation(String),

    #[error("sector condition fails for source {source_point} and box point {box_point}")]
    LayerViolation {
        source_point: String,
        box_point: String,
    },

    #[error("factorization domain violation: {0}")]
    FactorizationDomainViolation(String),

    #[error("insufficient decay: -ln|phi| <= 0 on {bad} of {total} grid points")]
    InsufficientDecay { bad: usize, total: usize },

    #[error("characteristic function not integrable: |phi| stays above {level:e} up to t = {t_max}")]
    NotIntegrable { level: f64, t_max: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("eigensolver residual {residual:e} exceeds tolerance {tolerance:e}")]
    NoConvergence { residual: f64, tolerance: f64 },

    #[error("boxes too close: separation {separation} < required {required}")]
    TooClose { separation: f64, required: f64 },

    #[error("negativity violation: {0}")]
    NegativityViolation(String),

    #[error("Bernstein hypothesis violated: gamma = {gamma:.4} (needs > 1), {detail}")]
    HypothesisViolation { gamma: f64, detail: String },

    #[error("degenerate direction: cos(theta) = {0:e}")]
    DegenerateDirection(f64),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code used by the CLI: 2 for violated preconditions, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InsufficientDecay { .. }
            | Error::NotIntegrable { .. }
            | Error::NoConvergence { .. }
            | Error::Io(_)
            | Error::Serialization(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
