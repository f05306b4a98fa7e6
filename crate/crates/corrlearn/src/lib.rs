//! Binary classification from multiple corrupted label sources, with the
//! reduction of learning from label proportions (LLP) to that setting.
//!
//! The pieces, bottom up:
//!
//! - [`loss`]: margin losses, cost-sensitive losses, and noise-corrected
//!   (unbiased) losses with their derivatives and constants.
//! - [`kernel`]: Gaussian kernel, Gram matrices, representer-form models.
//! - [`weighting`]: signal-to-noise coefficients and bound-optimal source
//!   weights.
//! - [`matching`]: exact maximum-weight perfect matching (blossom algorithm).
//! - [`llp`]: the bag-pair probabilistic model, its reduction to corrupted
//!   sources, and optimal bag pairing.
//! - [`solver`]: regularized weighted corrected-loss risk minimization by
//!   gradient descent in representer form.
//! - [`bounds`]: generalization-bound evaluators and Monte-Carlo coverage
//!   checks.
//! - [`data`]: dataset ingestion, splitting, bagging, noise injection, and
//!   synthetic Gaussian benchmarks.
//! - [`eval`]: metrics, cross-validation, and the repeated experiment
//!   protocol.

pub mod bounds;
pub mod data;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod llp;
pub mod loss;
pub mod matching;
pub mod seed;
pub mod solver;
pub mod textio;
pub mod weighting;

pub use error::{Error, Result};
