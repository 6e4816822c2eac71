use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("row {row} of the kernel is not stochastic (sum = {sum})")]
    NotStochastic { row: usize, sum: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("non-finite or invalid function values: {0}")]
    InvalidFunction(String),

    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),

    #[error("kernel has {} recurrent classes: {}", .classes.len(), format_classes(.classes))]
    Reducible { classes: Vec<Vec<String>> },

    #[error("kernel is not reversible with respect to the measure (max flux gap {gap:e})")]
    NotReversible { gap: f64 },

    #[error("measure has empty support")]
    EmptySupport,

    #[error("state `{0}` is absorbing: the jump chain is undefined there")]
    Absorbing(String),

    #[error("weight function is identically zero")]
    ZeroWeights,

    #[error("target is not absolutely continuous w.r.t. the reference measure at state `{0}`")]
    NotAbsolutelyContinuous(String),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("support condition violated at theta={theta}, u={u}: eta = 0 but zeta(1) = {zeta1}")]
    SupportViolation { theta: usize, u: usize, zeta1: f64 },

    #[error("model is not enumerable; exact quantities are unavailable")]
    NotEnumerable,

    #[error("model configuration: {0}")]
    Config(String),

    #[error("initialisation failed: {0}")]
    Initialisation(String),

    #[error("estimator has no weight mass (normalizer = {0})")]
    ZeroNormalizer(f64),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("incompatible path: {0}")]
    IncompatiblePath(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_classes(classes: &[Vec<String>]) -> String {
    classes
        .iter()
        .map(|c| format!("{{{}}}", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}
