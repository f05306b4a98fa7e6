//! Signal-to-noise coefficients and bound-optimal source weights.
//!
//! Each corrupted source gets a coefficient `c_i` combining its sample size
//! and noise severity; the generalization bounds all contain the weighted
//! quadratic `sum_i w_i^2 c_i^2`, which over the probability simplex is
//! minimized by `w_i = c_i^-2 / sum_j c_j^-2`. At the optimum the quadratic
//! equals `H(c^2) / N`, the harmonic mean of the squared coefficients over
//! the source count, so a single very noisy source cannot dominate the way
//! it does under uniform weights (where the arithmetic mean appears).

use crate::error::{Error, Result};
use crate::loss::{GammaPair, NoiseRates};

/// Which multiple-source setting a coefficient is computed for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Setting {
    /// All sources corrupt one common clean distribution.
    Common,
    /// Sources share class-conditionals but have their own class priors.
    VaryingPriors,
    /// Sources are paired bags with label proportions.
    Llp,
}

/// Per-source statistics; populate the fields the chosen setting needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceStats {
    /// Sample count, >= 1.
    pub n: usize,
    pub rho: Option<NoiseRates>,
    /// Class prior in (0, 1).
    pub pi: Option<f64>,
    pub gamma: Option<GammaPair>,
}

impl SourceStats {
    pub fn common(n: usize, rho: NoiseRates) -> Self {
        SourceStats {
            n,
            rho: Some(rho),
            pi: None,
            gamma: None,
        }
    }

    pub fn varying_priors(n: usize, rho: NoiseRates, pi: f64) -> Self {
        SourceStats {
            n,
            rho: Some(rho),
            pi: Some(pi),
            gamma: None,
        }
    }

    pub fn llp(n: usize, gamma: GammaPair) -> Self {
        SourceStats {
            n,
            rho: None,
            pi: None,
            gamma: Some(gamma),
        }
    }
}

/// A member of the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(WeightVector { weights })
    }

    /// Normalizes arbitrary nonnegative masses into a simplex vector.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if masses.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = masses.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidWeights("masses sum to zero".into()));
        }
        let weights = masses.iter().map(|m| m / sum).collect();
        Ok(WeightVector { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        Ok(WeightVector {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// The per-source coefficient `c_i` whose square is the reciprocal
/// signal-to-noise ratio:
///
/// - common: `(1/sqrt(n)) (1 + |rho+ - rho-|) / (1 - rho- - rho+)`
/// - varying priors: additionally `1 / min(pi, 1 - pi)`
/// - llp: `1 / sqrt(n (gamma+ - gamma-)^2)`
pub fn snr_coefficient(stats: &SourceStats, setting: Setting) -> Result<f64> {
    if stats.n == 0 {
        return Err(Error::InvalidConfig("source has no samples".into()));
    }
    let root_n = (stats.n as f64).sqrt();
    let noise_factor = |rho: &NoiseRates| {
        (1.0 + (rho.rho_plus() - rho.rho_minus()).abs()) / rho.divisor()
    };
    match setting {
        Setting::Common => {
            let rho = stats.rho.as_ref().ok_or(Error::MissingSourceField {
                index: 0,
                setting: "common",
                missing: "rho",
            })?;
            Ok(noise_factor(rho) / root_n)
        }
        Setting::VaryingPriors => {
            let rho = stats.rho.as_ref().ok_or(Error::MissingSourceField {
                index: 0,
                setting: "varying priors",
                missing: "rho",
            })?;
            let pi = stats.pi.ok_or(Error::MissingSourceField {
                index: 0,
                setting: "varying priors",
                missing: "pi",
            })?;
            if !(pi > 0.0 && pi < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "class prior must lie in (0, 1), got {pi}"
                )));
            }
            Ok(noise_factor(rho) / (root_n * pi.min(1.0 - pi)))
        }
        Setting::Llp => {
            let gamma = stats.gamma.as_ref().ok_or(Error::MissingSourceField {
                index: 0,
                setting: "llp",
                missing: "gamma",
            })?;
            Ok(1.0 / (stats.n as f64 * gamma.gap() * gamma.gap()).sqrt())
        }
    }
}

/// Weights `w_i = c_i^-2 / sum_j c_j^-2` minimizing the weighted quadratic
/// over the simplex. Sources with non-finite or nonpositive coefficients
/// must be dropped by the caller first.
pub fn optimal_weights(coefficients: &[f64]) -> Result<WeightVector> {
    if coefficients.is_empty() {
        return Err(Error::InvalidWeights("no coefficients".into()));
    }
    if coefficients.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::InvalidWeights(
            "coefficients must be strictly positive and finite".into(),
        ));
    }
    let inv_sq: Vec<f64> = coefficients.iter().map(|c| 1.0 / (c * c)).collect();
    WeightVector::from_masses(&inv_sq)
}

/// `sum_i w_i^2 c_i^2`; at [`optimal_weights`] this equals `H(c^2) / N`.
pub fn weighted_quadratic(weights: &WeightVector, coefficients: &[f64]) -> Result<f64> {
    if weights.len() != coefficients.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights vs {} coefficients",
            weights.len(),
            coefficients.len()
        )));
    }
    Ok(weights
        .as_slice()
        .iter()
        .zip(coefficients.iter())
        .map(|(w, c)| w * w * c * c)
        .sum())
}

/// Harmonic mean of strictly positive values.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    n / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

/// Arithmetic mean.
pub fn arithmetic_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// The fixed ten-source illustration of how much uniform weighting can lose:
/// nine mildly corrupted sources (`rho = (0.01, 0.01)`) and one nearly
/// useless one (`rho = (0.49, 0.49)`), all with n = 100. Returns the ratio
/// of arithmetic to harmonic mean of the squared coefficients, which
/// exceeds 100.
pub fn mean_ratio_illustration() -> f64 {
    let mild = NoiseRates::new(0.01, 0.01).unwrap();
    let harsh = NoiseRates::new(0.49, 0.49).unwrap();
    let mut c_sq = Vec::with_capacity(10);
    for i in 0..10 {
        let rho = if i < 9 { mild } else { harsh };
        let c = snr_coefficient(&SourceStats::common(100, rho), Setting::Common).unwrap();
        c_sq.push(c * c);
    }
    arithmetic_mean(&c_sq) / harmonic_mean(&c_sq)
}
