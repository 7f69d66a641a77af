use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid arm set: {0}")]
    InvalidArms(String),

    #[error("degenerate parameter: top-k l1 norm is zero")]
    DegenerateParameter,

    #[error("no tail coordinates: beta_target > 0 requires k < d")]
    NoTailCoordinates,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("infeasible cap: {m} coordinates with cap {cap} cannot carry unit mass")]
    InfeasibleCap { m: usize, cap: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rounding degenerate: realized subset empty after {0} retries")]
    RoundingDegenerate(usize),

    #[error("search too large: {subsets} subsets exceed enumeration cap {cap}")]
    SearchTooLarge { subsets: u128, cap: u128 },

    #[error("blocking violation: arm {0} already pulled")]
    BlockingViolation(usize),

    #[error("arm index {0} out of range")]
    ArmOutOfRange(usize),

    #[error("all arms exhausted")]
    ArmsExhausted,

    #[error("normalizer root-finding failed to bracket")]
    NoBracket,

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }
}
