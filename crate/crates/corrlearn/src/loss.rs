//! Margin losses, cost-sensitive losses, and noise-corrected (unbiased) losses.
//!
//! A margin loss is `l(t, y) = phi(y * t)` for a scalar function `phi`. Under
//! class-conditional label noise with flip probabilities `rho = (rho+, rho-)`,
//! the corrected loss `l^rho` is the linear recombination of `l(., +1)` and
//! `l(., -1)` whose expectation over the label flip recovers the clean loss.
//! Corrected losses can be negative; nothing here clamps them and downstream
//! code must not either, or the unbiasedness property is lost.

use crate::error::{Error, Result};

/// Binary label, encoded as +1 / -1.
pub type Label = i8;

#[inline]
fn check_label(y: Label) {
    debug_assert!(y == 1 || y == -1, "labels must be +1 or -1, got {y}");
}

/// Divisors below this are rejected to avoid numerical blowup in the
/// corrected-loss formulas.
pub const MIN_NOISE_DIVISOR: f64 = 1e-9;

/// A margin loss phi with value, first and second derivative evaluators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarginLoss {
    /// `phi(m) = ln(1 + e^-m)`. Lipschitz constant 1, `phi(0) = ln 2`,
    /// classification-calibrated (`phi'(0) = -1/2`).
    Logistic,
    /// `phi(m) = (1 - m)^2`. Not globally Lipschitz; `lipschitz()` is +inf.
    Squared,
    /// Quadratically smoothed hinge: zero for `m >= width`, quadratic
    /// `(width - m)^2 / 2` on `|m| < width`, linear with slope `-2 width`
    /// below. Second derivative is even in `m`.
    Huber { width: f64 },
}

impl MarginLoss {
    pub fn huber(width: f64) -> Result<Self> {
        if width > 0.0 && width.is_finite() {
            Ok(MarginLoss::Huber { width })
        } else {
            Err(Error::InvalidConfig(format!(
                "huber width must be positive and finite, got {width}"
            )))
        }
    }

    /// phi(m).
    pub fn phi(&self, m: f64) -> f64 {
        match *self {
            MarginLoss::Logistic => {
                if m >= 0.0 {
                    (-m).exp().ln_1p()
                } else {
                    -m + m.exp().ln_1p()
                }
            }
            MarginLoss::Squared => (1.0 - m) * (1.0 - m),
            MarginLoss::Huber { width } => {
                if m >= width {
                    0.0
                } else if m > -width {
                    let d = width - m;
                    0.5 * d * d
                } else {
                    -2.0 * width * m
                }
            }
        }
    }

    /// phi'(m).
    pub fn phi_prime(&self, m: f64) -> f64 {
        match *self {
            MarginLoss::Logistic => {
                // -sigma(-m), computed from exp(-|m|) for stability
                let e = (-m.abs()).exp();
                if m >= 0.0 {
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + e)
                }
            }
            MarginLoss::Squared => 2.0 * (m - 1.0),
            MarginLoss::Huber { width } => {
                if m >= width {
                    0.0
                } else if m > -width {
                    m - width
                } else {
                    -2.0 * width
                }
            }
        }
    }

    /// phi''(m). Even in `m` for all built-in kinds.
    pub fn phi_double_prime(&self, m: f64) -> f64 {
        match *self {
            MarginLoss::Logistic => {
                let e = (-m.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            MarginLoss::Squared => 2.0,
            MarginLoss::Huber { width } => {
                if m.abs() < width {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// l(t, y) = phi(y t).
    pub fn eval(&self, t: f64, y: Label) -> f64 {
        check_label(y);
        self.phi(f64::from(y) * t)
    }

    /// d/dt l(t, y) = y phi'(y t).
    pub fn eval_prime(&self, t: f64, y: Label) -> f64 {
        check_label(y);
        f64::from(y) * self.phi_prime(f64::from(y) * t)
    }

    /// d^2/dt^2 l(t, y) = phi''(y t).
    pub fn eval_double_prime(&self, t: f64, y: Label) -> f64 {
        check_label(y);
        self.phi_double_prime(f64::from(y) * t)
    }

    /// Smallest Lipschitz constant of `t -> l(t, y)` over the real line.
    /// Infinite for the squared loss.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            MarginLoss::Logistic => 1.0,
            MarginLoss::Squared => f64::INFINITY,
            MarginLoss::Huber { width } => 2.0 * width,
        }
    }

    /// phi(0).
    pub fn value_at_zero(&self) -> f64 {
        match *self {
            MarginLoss::Logistic => std::f64::consts::LN_2,
            MarginLoss::Squared => 1.0,
            MarginLoss::Huber { width } => 0.5 * width * width,
        }
    }
}

impl std::str::FromStr for MarginLoss {
    type Err = Error;

    /// Parses `logistic`, `squared`, `huber` (width 1) or `huber:WIDTH`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "logistic" => Ok(MarginLoss::Logistic),
            "squared" => Ok(MarginLoss::Squared),
            "huber" => Ok(MarginLoss::Huber { width: 1.0 }),
            other => {
                if let Some(w) = other.strip_prefix("huber:") {
                    let width: f64 = w.parse().map_err(|_| {
                        Error::InvalidConfig(format!("bad huber width: {w}"))
                    })?;
                    MarginLoss::huber(width)
                } else {
                    Err(Error::InvalidConfig(format!("unknown loss kind: {other}")))
                }
            }
        }
    }
}

/// Label noise proportions `(rho+, rho-)`: the probability of flipping a
/// true +1 to -1, and a true -1 to +1 respectively. Valid when each lies in
/// [0, 1) and `rho+ + rho- < 1` (strictly, with a small numerical margin).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseRates {
    rho_plus: f64,
    rho_minus: f64,
}

impl NoiseRates {
    pub fn new(rho_plus: f64, rho_minus: f64) -> Result<Self> {
        let bad = |reason| Error::InvalidNoiseRates {
            rho_plus,
            rho_minus,
            reason,
        };
        if !(rho_plus.is_finite() && rho_minus.is_finite()) {
            return Err(bad("rates must be finite"));
        }
        if !(0.0..1.0).contains(&rho_plus) || !(0.0..1.0).contains(&rho_minus) {
            return Err(bad("each rate must lie in [0, 1)"));
        }
        if 1.0 - rho_plus - rho_minus < MIN_NOISE_DIVISOR {
            return Err(bad("rho+ + rho- must be strictly below 1"));
        }
        Ok(NoiseRates {
            rho_plus,
            rho_minus,
        })
    }

    pub fn noiseless() -> Self {
        NoiseRates {
            rho_plus: 0.0,
            rho_minus: 0.0,
        }
    }

    pub fn rho_plus(&self) -> f64 {
        self.rho_plus
    }

    pub fn rho_minus(&self) -> f64 {
        self.rho_minus
    }

    /// Flip probability for the class of `y`.
    pub fn flip_probability(&self, y: Label) -> f64 {
        check_label(y);
        if y == 1 {
            self.rho_plus
        } else {
            self.rho_minus
        }
    }

    /// `1 - rho- - rho+`, the divisor of every corrected formula.
    pub fn divisor(&self) -> f64 {
        1.0 - self.rho_minus - self.rho_plus
    }
}

/// Class cost weights `(alpha+, alpha-)`, both strictly positive and finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostPair {
    alpha_plus: f64,
    alpha_minus: f64,
}

impl CostPair {
    pub fn new(alpha_plus: f64, alpha_minus: f64) -> Result<Self> {
        if alpha_plus > 0.0
            && alpha_minus > 0.0
            && alpha_plus.is_finite()
            && alpha_minus.is_finite()
        {
            Ok(CostPair {
                alpha_plus,
                alpha_minus,
            })
        } else {
            Err(Error::InvalidCostPair {
                alpha_plus,
                alpha_minus,
            })
        }
    }

    pub fn unit() -> Self {
        CostPair {
            alpha_plus: 1.0,
            alpha_minus: 1.0,
        }
    }

    /// Costs `(1 / 2 pi, 1 / 2 (1 - pi))` that turn the cost-sensitive risk
    /// into the balanced error rate under class prior `pi`.
    pub fn balanced(pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "class prior must lie in (0, 1), got {pi}"
            )));
        }
        CostPair::new(0.5 / pi, 0.5 / (1.0 - pi))
    }

    pub fn alpha_plus(&self) -> f64 {
        self.alpha_plus
    }

    pub fn alpha_minus(&self) -> f64 {
        self.alpha_minus
    }

    pub fn cost(&self, y: Label) -> f64 {
        check_label(y);
        if y == 1 {
            self.alpha_plus
        } else {
            self.alpha_minus
        }
    }

    pub fn max(&self) -> f64 {
        self.alpha_plus.max(self.alpha_minus)
    }
}

/// A pair of bag label proportions with `0 <= gamma- < gamma+ <= 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaPair {
    plus: f64,
    minus: f64,
}

impl GammaPair {
    pub fn new(gamma_plus: f64, gamma_minus: f64) -> Result<Self> {
        let bad = |reason| Error::InvalidGammaPair {
            gamma_plus,
            gamma_minus,
            reason,
        };
        if !(gamma_plus.is_finite() && gamma_minus.is_finite()) {
            return Err(bad("proportions must be finite"));
        }
        if !(0.0..=1.0).contains(&gamma_plus) || !(0.0..=1.0).contains(&gamma_minus) {
            return Err(bad("proportions must lie in [0, 1]"));
        }
        if gamma_plus - gamma_minus < MIN_NOISE_DIVISOR {
            return Err(bad("gamma+ must exceed gamma-"));
        }
        Ok(GammaPair {
            plus: gamma_plus,
            minus: gamma_minus,
        })
    }

    pub fn plus(&self) -> f64 {
        self.plus
    }

    pub fn minus(&self) -> f64 {
        self.minus
    }

    pub fn gap(&self) -> f64 {
        self.plus - self.minus
    }
}

/// Noise-corrected loss `l^rho(t, y)`. May be negative.
pub fn corrected_loss(loss: MarginLoss, rho: &NoiseRates, t: f64, y: Label) -> f64 {
    check_label(y);
    let lp = loss.eval(t, 1);
    let lm = loss.eval(t, -1);
    let d = rho.divisor();
    if y == 1 {
        ((1.0 - rho.rho_minus()) * lp - rho.rho_plus() * lm) / d
    } else {
        ((1.0 - rho.rho_plus()) * lm - rho.rho_minus() * lp) / d
    }
}

/// Cost-sensitive loss `l_alpha(t, y) = alpha^y * l(t, y)`.
pub fn cost_sensitive_loss(loss: MarginLoss, alpha: &CostPair, t: f64, y: Label) -> f64 {
    check_label(y);
    alpha.cost(y) * loss.eval(t, y)
}

/// `(l_alpha)^rho`: costs applied first, then the noise correction. The
/// reverse composition `(l^rho)_alpha` is a different function and is not
/// provided.
pub fn corrected_cost_loss(
    loss: MarginLoss,
    alpha: &CostPair,
    rho: &NoiseRates,
    t: f64,
    y: Label,
) -> f64 {
    check_label(y);
    let lp = alpha.alpha_plus() * loss.eval(t, 1);
    let lm = alpha.alpha_minus() * loss.eval(t, -1);
    let d = rho.divisor();
    if y == 1 {
        ((1.0 - rho.rho_minus()) * lp - rho.rho_plus() * lm) / d
    } else {
        ((1.0 - rho.rho_plus()) * lm - rho.rho_minus() * lp) / d
    }
}

/// d/dt of [`corrected_cost_loss`].
pub fn corrected_cost_grad(
    loss: MarginLoss,
    alpha: &CostPair,
    rho: &NoiseRates,
    t: f64,
    y: Label,
) -> f64 {
    check_label(y);
    let lp = alpha.alpha_plus() * loss.eval_prime(t, 1);
    let lm = alpha.alpha_minus() * loss.eval_prime(t, -1);
    let d = rho.divisor();
    if y == 1 {
        ((1.0 - rho.rho_minus()) * lp - rho.rho_plus() * lm) / d
    } else {
        ((1.0 - rho.rho_plus()) * lm - rho.rho_minus() * lp) / d
    }
}

/// d^2/dt^2 of [`corrected_cost_loss`].
pub fn corrected_cost_curvature(
    loss: MarginLoss,
    alpha: &CostPair,
    rho: &NoiseRates,
    t: f64,
    y: Label,
) -> f64 {
    check_label(y);
    let lp = alpha.alpha_plus() * loss.eval_double_prime(t, 1);
    let lm = alpha.alpha_minus() * loss.eval_double_prime(t, -1);
    let d = rho.divisor();
    if y == 1 {
        ((1.0 - rho.rho_minus()) * lp - rho.rho_plus() * lm) / d
    } else {
        ((1.0 - rho.rho_plus()) * lm - rho.rho_minus() * lp) / d
    }
}

/// Closed form of the cost-corrected loss for a bag pair with proportions
/// `(gamma+, gamma-)`:
///
/// ```text
/// [(1 - gamma-) l(t, 1) - gamma- l(t, -1)] / (gamma+ - gamma-)   for y = +1
/// [gamma+ l(t, -1) - (1 - gamma+) l(t, 1)] / (gamma+ - gamma-)   for y = -1
/// ```
///
/// Agrees with [`corrected_cost_loss`] under the bag-pair (alpha, rho)
/// mapping.
pub fn llp_corrected_form(loss: MarginLoss, gamma: &GammaPair, t: f64, y: Label) -> f64 {
    check_label(y);
    let lp = loss.eval(t, 1);
    let lm = loss.eval(t, -1);
    let gap = gamma.gap();
    if y == 1 {
        ((1.0 - gamma.minus()) * lp - gamma.minus() * lm) / gap
    } else {
        (gamma.plus() * lm - (1.0 - gamma.plus()) * lp) / gap
    }
}

/// d/dt of [`llp_corrected_form`].
pub fn llp_corrected_grad(loss: MarginLoss, gamma: &GammaPair, t: f64, y: Label) -> f64 {
    check_label(y);
    let lp = loss.eval_prime(t, 1);
    let lm = loss.eval_prime(t, -1);
    let gap = gamma.gap();
    if y == 1 {
        ((1.0 - gamma.minus()) * lp - gamma.minus() * lm) / gap
    } else {
        (gamma.plus() * lm - (1.0 - gamma.plus()) * lp) / gap
    }
}

/// Lipschitz constant and value-at-zero bounds for a (possibly corrected,
/// possibly cost-weighted) loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConstants {
    /// Upper bound on the Lipschitz constant.
    pub lipschitz: f64,
    /// Upper bound on `max_y l(0, y)`.
    pub at_zero: f64,
}

/// Constants of `l^rho`: `|l^rho|_0 = phi(0)` and
/// `|l^rho| <= L (1 + |rho+ - rho-|) / (1 - rho- - rho+)`.
pub fn corrected_constants(loss: MarginLoss, rho: &NoiseRates) -> LossConstants {
    let spread = (rho.rho_plus() - rho.rho_minus()).abs();
    LossConstants {
        lipschitz: loss.lipschitz() * (1.0 + spread) / rho.divisor(),
        at_zero: loss.value_at_zero(),
    }
}

/// Constants of `(l_alpha)^rho`:
/// `|l_alpha^rho|_0 <= 2 phi(0) max(alpha) / (1 - rho- - rho+)` and
/// `|l_alpha^rho| <= L max(alpha) (1 + |rho+ - rho-|) / (1 - rho- - rho+)`.
pub fn cost_corrected_constants(
    loss: MarginLoss,
    rho: &NoiseRates,
    alpha: &CostPair,
) -> LossConstants {
    let spread = (rho.rho_plus() - rho.rho_minus()).abs();
    LossConstants {
        lipschitz: loss.lipschitz() * alpha.max() * (1.0 + spread) / rho.divisor(),
        at_zero: 2.0 * loss.value_at_zero() * alpha.max() / rho.divisor(),
    }
}

/// Constants of the bag-pair corrected loss:
/// `|l_alpha^rho|_0 <= phi(0) / (gamma+ - gamma-)` and
/// `|l_alpha^rho| <= L / (gamma+ - gamma-)`.
pub fn llp_constants(loss: MarginLoss, gamma: &GammaPair) -> LossConstants {
    LossConstants {
        lipschitz: loss.lipschitz() / gamma.gap(),
        at_zero: loss.value_at_zero() / gamma.gap(),
    }
}

/// True iff `l''(t, 1) = l''(t, -1)` on the grid t = -5, -4.9, ..., 5 to
/// 1e-10 absolute, the second-order condition under which noise correction
/// preserves convexity.
pub fn check_second_order_condition(loss: MarginLoss) -> bool {
    (0..=100).all(|i| {
        let t = -5.0 + 0.1 * f64::from(i);
        (loss.eval_double_prime(t, 1) - loss.eval_double_prime(t, -1)).abs() <= 1e-10
    })
}
