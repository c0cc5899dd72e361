//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset construction, loss evaluation, training and
/// the certification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("score vector must have at least 3 entries (n >= 2), got {0}")]
    ScoreVectorTooShort(usize),

    #[error("score vector contains a non-finite entry at index {0}")]
    NonFiniteScore(usize),

    #[error("label {label} out of range 1..={max}")]
    LabelOutOfRange { label: usize, max: usize },

    #[error("dimension mismatch: expected n = {expected}, got n = {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cost {0} outside [0, 1]")]
    CostOutOfRange(f64),

    #[error("affine cost requires alpha > 0, beta >= 0, alpha + beta <= 1 (alpha = {alpha}, beta = {beta})")]
    InvalidAffineCost { alpha: f64, beta: f64 },

    #[error("cost mode {mode} needs {missing} in the example context")]
    MissingCostContext { mode: &'static str, missing: &'static str },

    #[error("GCE exponent q must lie in (0, 1), got {0}")]
    InvalidGceExponent(f64),

    #[error("{0} accepts only binary costs (expert classification error); got cost {1}")]
    NonBinaryCost(&'static str, f64),

    #[error("modified comp-sum loss is defined for true labels only; got the deferral label {0}")]
    DeferralLabelRejected(usize),

    #[error("probability vector must sum to 1 within 1e-12 (sum = {0})")]
    ProbabilityNotNormalized(f64),

    #[error("probability vector needs at least 2 entries, got {0}")]
    TooFewLabels(usize),

    #[error("negative probability {0}")]
    NegativeProbability(f64),

    #[error("gamma transform needs t >= 0, got {0}")]
    NegativeGammaArgument(f64),

    #[error("{gamma} gamma requires binary expert-error costs (exactly one zero-cost label); instance costs are {costs:?}")]
    GammaCostMismatch { gamma: String, costs: Vec<f64> },

    #[error("witness is not zero-error: example {example} has deferral loss {loss}")]
    WitnessNotRealizable { example: usize, loss: f64 },

    #[error("invalid synthetic config: {0}")]
    InvalidSyntheticConfig(String),

    #[error("rejection sampling exhausted {attempts} attempts while {stage}; config too tight")]
    RejectionSamplingFailed { stage: String, attempts: usize },

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (first example index {example})")]
    NonFiniteLoss { epoch: usize, batch: usize, example: usize },

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("csv: missing column '{0}'")]
    MissingColumn(String),

    #[error("csv: row {row}, column '{column}': {message}")]
    MalformedRow { row: usize, column: String, message: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
