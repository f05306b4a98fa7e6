use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Label noise proportions outside the admissible region.
    #[error("invalid noise rates (rho+ = {rho_plus}, rho- = {rho_minus}): {reason}")]
    InvalidNoiseRates {
        rho_plus: f64,
        rho_minus: f64,
        reason: &'static str,
    },

    /// Cost weights must be strictly positive and finite.
    #[error("invalid cost pair (alpha+ = {alpha_plus}, alpha- = {alpha_minus})")]
    InvalidCostPair { alpha_plus: f64, alpha_minus: f64 },

    /// Label-proportion pair violating 0 <= gamma- < gamma+ <= 1.
    #[error("invalid label proportion pair (gamma+ = {gamma_plus}, gamma- = {gamma_minus}): {reason}")]
    InvalidGammaPair {
        gamma_plus: f64,
        gamma_minus: f64,
        reason: &'static str,
    },

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A stated theorem precondition does not hold for the given inputs.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Weight vector is not a member of the probability simplex.
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    /// A source is missing a field required by the chosen setting.
    #[error("source {index} is missing fields for the {setting} setting: {missing}")]
    MissingSourceField {
        index: usize,
        setting: &'static str,
        missing: &'static str,
    },

    /// Bag pairing needs an even number of bags.
    #[error("cannot pair an odd number of bags ({0})")]
    OddBagCount(usize),

    /// Bags of unequal size under the strict pairing policy.
    #[error("bags have unequal sizes ({0} vs {1}) under the strict size policy")]
    UnequalBagSizes(usize, usize),

    /// Brute-force matching is restricted to small instances.
    #[error("too many bags for brute-force matching ({0} > {1})")]
    TooManyBags(usize, usize),

    /// Training produced a non-finite objective.
    #[error("training diverged at step {step}: objective is not finite")]
    Diverged { step: usize },

    /// No pairs with a positive proportion gap remain.
    #[error("no usable pairs: {0}")]
    NoUsablePairs(String),

    /// Degenerate or malformed experiment configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Metric undefined for the given inputs.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// A data file could not be parsed.
    #[error("parse error in {path} at row {row}, column {column}: {reason}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        reason: String,
    },

    /// Malformed input data outside of a specific cell.
    #[error("invalid data in {path}: {reason}")]
    InvalidData { path: String, reason: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
