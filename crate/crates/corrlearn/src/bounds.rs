//! Generalization-bound evaluators and Monte-Carlo coverage checks.
//!
//! Three closed-form bounds cover the multiple-corrupted-source settings
//! (common clean distribution, varying class priors, paired bags), all
//! specializations of one master bound parameterized by per-source loss
//! constants. Evaluators enforce the stated preconditions on the radius and
//! confidence and report per-source contributions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelSpec};
use crate::llp::{sample_bag_pair, ClassSampler};
use crate::loss::{llp_corrected_form, GammaPair, LossConstants, MarginLoss};
use crate::seed;
use crate::weighting::{optimal_weights, snr_coefficient, Setting, SourceStats, WeightVector};

/// Everything needed to evaluate a bound right-hand side.
#[derive(Clone, Debug)]
pub struct BoundInputs {
    /// RKHS-ball radius R.
    pub radius: f64,
    /// Kernel bound K.
    pub kernel_bound: f64,
    /// Loss Lipschitz constant L.
    pub lipschitz: f64,
    /// phi(0) of the margin loss.
    pub phi_zero: f64,
    /// Confidence parameter delta.
    pub delta: f64,
    pub weights: WeightVector,
    pub sources: Vec<SourceStats>,
}

/// A bound value with the per-source summands of its square-root argument.
#[derive(Clone, Debug)]
pub struct BoundValue {
    pub value: f64,
    pub per_source: Vec<f64>,
}

impl BoundInputs {
    fn check_shape(&self) -> Result<()> {
        if self.weights.len() != self.sources.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights vs {} sources",
                self.weights.len(),
                self.sources.len()
            )));
        }
        if !(self.kernel_bound > 0.0) || !(self.lipschitz > 0.0) || !self.lipschitz.is_finite() {
            return Err(Error::Precondition(
                "kernel bound and Lipschitz constant must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    fn check_delta_quarter(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 0.25) {
            return Err(Error::Precondition(format!(
                "requires 0 < delta <= 1/4, got delta = {}",
                self.delta
            )));
        }
        Ok(())
    }

    fn log_term(&self) -> f64 {
        (2.0 / self.delta).ln() / 2.0
    }
}

/// Bound for corruptions of one common clean distribution:
/// `4 K R L sqrt( sum_i (w_i^2 / n_i) ((1 + |rho_i+ - rho_i-|) / (1 - rho_i- - rho_i+))^2 log(2/delta)/2 )`.
/// Requires `R > phi(0) / (K L)` and `delta <= 1/4`.
pub fn bound_common(inputs: &BoundInputs) -> Result<BoundValue> {
    inputs.check_shape()?;
    inputs.check_delta_quarter()?;
    if !(inputs.radius > inputs.phi_zero / (inputs.kernel_bound * inputs.lipschitz)) {
        return Err(Error::Precondition(format!(
            "requires R > phi(0)/(K L) = {}, got R = {}",
            inputs.phi_zero / (inputs.kernel_bound * inputs.lipschitz),
            inputs.radius
        )));
    }
    let log_term = inputs.log_term();
    let mut per_source = Vec::with_capacity(inputs.sources.len());
    for (i, s) in inputs.sources.iter().enumerate() {
        let rho = s.rho.as_ref().ok_or(Error::MissingSourceField {
            index: i,
            setting: "common",
            missing: "rho",
        })?;
        let w = inputs.weights[i];
        let factor = (1.0 + (rho.rho_plus() - rho.rho_minus()).abs()) / rho.divisor();
        per_source.push(w * w / s.n as f64 * factor * factor * log_term);
    }
    let value = 4.0
        * inputs.kernel_bound
        * inputs.radius
        * inputs.lipschitz
        * per_source.iter().sum::<f64>().sqrt();
    Ok(BoundValue { value, per_source })
}

/// Bound for sources sharing class-conditionals but not priors, against the
/// balanced error rate:
/// `2 K R L sqrt(log(2/delta)/2) * sqrt( sum_i (w_i^2 / n_i) ((1 + |drho_i|)/(1 - rho_i- - rho_i+))^2 / min(pi_i, 1-pi_i)^2 )`.
/// Requires `R > 2 phi(0) / (K L)` and `delta <= 1/4`.
pub fn bound_varying_priors(inputs: &BoundInputs) -> Result<BoundValue> {
    inputs.check_shape()?;
    inputs.check_delta_quarter()?;
    if !(inputs.radius > 2.0 * inputs.phi_zero / (inputs.kernel_bound * inputs.lipschitz)) {
        return Err(Error::Precondition(format!(
            "requires R > 2 phi(0)/(K L) = {}, got R = {}",
            2.0 * inputs.phi_zero / (inputs.kernel_bound * inputs.lipschitz),
            inputs.radius
        )));
    }
    let mut per_source = Vec::with_capacity(inputs.sources.len());
    for (i, s) in inputs.sources.iter().enumerate() {
        let rho = s.rho.as_ref().ok_or(Error::MissingSourceField {
            index: i,
            setting: "varying priors",
            missing: "rho",
        })?;
        let pi = s.pi.ok_or(Error::MissingSourceField {
            index: i,
            setting: "varying priors",
            missing: "pi",
        })?;
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Precondition(format!(
                "class priors must lie strictly inside (0, 1), got pi_{i} = {pi}"
            )));
        }
        let w = inputs.weights[i];
        let factor = (1.0 + (rho.rho_plus() - rho.rho_minus()).abs()) / rho.divisor();
        let balance = pi.min(1.0 - pi);
        per_source.push(w * w / s.n as f64 * factor * factor / (balance * balance));
    }
    let c = 2.0 * inputs.kernel_bound * inputs.radius * inputs.lipschitz * inputs.log_term().sqrt();
    let value = c * per_source.iter().sum::<f64>().sqrt();
    Ok(BoundValue { value, per_source })
}

/// Bound for paired bags against the balanced error rate:
/// `4 K R L sqrt( sum_i w_i^2 / (n_i (gamma_i+ - gamma_i-)^2) * log(2/delta)/2 )`.
/// Requires `R > phi(0) / (K L)` and `delta <= 1/4`.
pub fn bound_llp(inputs: &BoundInputs) -> Result<BoundValue> {
    inputs.check_shape()?;
    inputs.check_delta_quarter()?;
    if !(inputs.radius > inputs.phi_zero / (inputs.kernel_bound * inputs.lipschitz)) {
        return Err(Error::Precondition(format!(
            "requires R > phi(0)/(K L) = {}, got R = {}",
            inputs.phi_zero / (inputs.kernel_bound * inputs.lipschitz),
            inputs.radius
        )));
    }
    let log_term = inputs.log_term();
    let mut per_source = Vec::with_capacity(inputs.sources.len());
    for (i, s) in inputs.sources.iter().enumerate() {
        let gamma = s.gamma.as_ref().ok_or(Error::MissingSourceField {
            index: i,
            setting: "llp",
            missing: "gamma",
        })?;
        let w = inputs.weights[i];
        per_source.push(w * w / (s.n as f64 * gamma.gap() * gamma.gap()) * log_term);
    }
    let value = 4.0
        * inputs.kernel_bound
        * inputs.radius
        * inputs.lipschitz
        * per_source.iter().sum::<f64>().sqrt();
    Ok(BoundValue { value, per_source })
}

/// The master bound, parameterized by per-source loss constants
/// `(|l_i|, |l_i|_0)`:
/// `2 K R sqrt(sum_i (w_i^2/n_i) |l_i|^2) + sqrt(sum_i (w_i^2/n_i) (|l_i|_0 + |l_i| K R)^2 log(2/delta)/2)`.
/// Holds for every `R > 0` and `0 < delta <= 1`.
pub fn bound_master(inputs: &BoundInputs, constants: &[LossConstants]) -> Result<BoundValue> {
    inputs.check_shape()?;
    if constants.len() != inputs.sources.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} constants vs {} sources",
            constants.len(),
            inputs.sources.len()
        )));
    }
    if !(inputs.delta > 0.0 && inputs.delta <= 1.0) {
        return Err(Error::Precondition(format!(
            "requires 0 < delta <= 1, got delta = {}",
            inputs.delta
        )));
    }
    if !(inputs.radius > 0.0) {
        return Err(Error::Precondition(format!(
            "requires R > 0, got R = {}",
            inputs.radius
        )));
    }
    let kr = inputs.kernel_bound * inputs.radius;
    let log_term = inputs.log_term();
    let mut rad_term = 0.0;
    let mut per_source = Vec::with_capacity(inputs.sources.len());
    for (i, s) in inputs.sources.iter().enumerate() {
        let w = inputs.weights[i];
        let wn = w * w / s.n as f64;
        rad_term += wn * constants[i].lipschitz * constants[i].lipschitz;
        let envelope = constants[i].at_zero + constants[i].lipschitz * kr;
        per_source.push(wn * envelope * envelope * log_term);
    }
    let value = 2.0 * kr * rad_term.sqrt() + per_source.iter().sum::<f64>().sqrt();
    Ok(BoundValue { value, per_source })
}

/// The optimized-weights form under a bounded-noise floor `c0`:
/// `(8 K R L / c0) sqrt( (sum_i n_i)^-1 log(2/delta)/2 )`.
pub fn bound_optimal_consistency_form(
    sources: &[SourceStats],
    c0: f64,
    radius: f64,
    kernel_bound: f64,
    lipschitz: f64,
    delta: f64,
) -> Result<f64> {
    if !(c0 > 0.0) {
        return Err(Error::Precondition(format!(
            "requires a positive noise floor c0, got {c0}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Precondition(format!(
            "requires 0 < delta <= 1, got delta = {delta}"
        )));
    }
    let total: usize = sources.iter().map(|s| s.n).sum();
    if total == 0 {
        return Err(Error::Precondition("total sample size is zero".into()));
    }
    Ok(8.0 * kernel_bound * radius * lipschitz / c0
        * (((2.0 / delta).ln() / 2.0) / total as f64).sqrt())
}

/// Synthetic scenario for the paired-bag coverage check: two unit Gaussians
/// at separation `separation` along the first axis, `gammas.len()` bag
/// pairs with `bag_size` instances per bag.
#[derive(Clone, Debug)]
pub struct LlpCoverageSpec {
    pub dim: usize,
    pub separation: f64,
    pub gammas: Vec<GammaPair>,
    pub bag_size: usize,
    pub loss: MarginLoss,
    pub kernel: KernelSpec,
    /// Anchors per probe function.
    pub n_anchors: usize,
    /// Clean holdout draws per class for the true-risk oracle.
    pub holdout_per_class: usize,
}

/// Outcome of a Monte-Carlo coverage run.
#[derive(Clone, Debug)]
pub struct CoverageReport {
    /// Fraction of trials whose probed maximum deviation stayed within the
    /// bound.
    pub coverage: f64,
    pub bound: f64,
    /// Probed max |empirical - true| per trial.
    pub deviations: Vec<f64>,
}

fn draw_matrix(
    sampler: &dyn ClassSampler,
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> DMatrix<f64> {
    let dim = sampler.dim();
    let mut out = DMatrix::zeros(n, dim);
    for r in 0..n {
        let row = sampler.draw(rng);
        for (c, v) in row.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    out
}

/// Monte-Carlo check of the paired-bag bound: per trial, fresh corrupted
/// samples are drawn from the bag-pair model and `probes` random functions
/// on the sphere of radius `radius` probe the deviation between weighted
/// corrected empirical risk and true balanced risk (estimated on one shared
/// clean holdout). Probing lower-bounds the supremum, so coverage at least
/// `1 - delta` is expected.
pub fn empirical_coverage_llp(
    spec: &LlpCoverageSpec,
    radius: f64,
    delta: f64,
    trials: usize,
    probes: usize,
    seed_value: u64,
) -> Result<CoverageReport> {
    if spec.gammas.is_empty() || spec.bag_size == 0 || trials == 0 || probes == 0 {
        return Err(Error::InvalidConfig(
            "coverage needs pairs, positive bag size, trials, and probes".into(),
        ));
    }
    let n_per_pair = 2 * spec.bag_size;
    let sources: Vec<SourceStats> = spec
        .gammas
        .iter()
        .map(|g| SourceStats::llp(n_per_pair, *g))
        .collect();
    let coeffs: Vec<f64> = sources
        .iter()
        .map(|s| snr_coefficient(s, Setting::Llp))
        .collect::<Result<_>>()?;
    let weights = optimal_weights(&coeffs)?;
    let inputs = BoundInputs {
        radius,
        kernel_bound: spec.kernel.bound(),
        lipschitz: spec.loss.lipschitz(),
        phi_zero: spec.loss.value_at_zero(),
        delta,
        weights: weights.clone(),
        sources,
    };
    let bound = bound_llp(&inputs)?.value;

    let shift = spec.separation / 2.0;
    let p_plus = crate::data::GaussianClass::standard(spec.dim, shift);
    let p_minus = crate::data::GaussianClass::standard(spec.dim, -shift);

    // one clean holdout for the whole trial set
    let mut holdout_rng = seed::rng(seed::derive(seed_value, 0));
    let holdout_plus = draw_matrix(&p_plus, spec.holdout_per_class, &mut holdout_rng);
    let holdout_minus = draw_matrix(&p_minus, spec.holdout_per_class, &mut holdout_rng);

    let mut deviations = Vec::with_capacity(trials);
    let mut covered = 0usize;
    for trial in 0..trials {
        let trial_seed = seed::derive(seed_value, 1000 + trial as u64);
        let mut rng = seed::rng(trial_seed);

        // anchors drawn from the clean balanced mixture, shared by this
        // trial's probes
        let mut anchors = DMatrix::zeros(spec.n_anchors, spec.dim);
        for r in 0..spec.n_anchors {
            let row = if rng.gen_bool(0.5) {
                p_plus.draw(&mut rng)
            } else {
                p_minus.draw(&mut rng)
            };
            for (c, v) in row.into_iter().enumerate() {
                anchors[(r, c)] = v;
            }
        }

        // corrupted bag pairs for this trial
        let mut pair_features = Vec::with_capacity(spec.gammas.len());
        for (i, g) in spec.gammas.iter().enumerate() {
            let s = sample_bag_pair(
                &p_plus,
                &p_minus,
                g,
                spec.bag_size,
                spec.bag_size,
                seed::derive(trial_seed, 7 + i as u64),
            )?;
            pair_features.push((s.pair.pos.instances, s.pair.neg.instances));
        }

        // kernel matrices against this trial's anchors
        let g_plus = gram(&holdout_plus, &anchors, &spec.kernel)?;
        let g_minus = gram(&holdout_minus, &anchors, &spec.kernel)?;
        let pair_grams: Vec<(DMatrix<f64>, DMatrix<f64>)> = pair_features
            .iter()
            .map(|(pos, neg)| {
                Ok((
                    gram(pos, &anchors, &spec.kernel)?,
                    gram(neg, &anchors, &spec.kernel)?,
                ))
            })
            .collect::<Result<_>>()?;
        let anchor_gram = gram(&anchors, &anchors, &spec.kernel)?;

        let mut max_dev = 0.0f64;
        for _ in 0..probes {
            let mut coef = DVector::from_fn(spec.n_anchors, |_, _| {
                rand::distributions::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            });
            let norm_sq = (&anchor_gram * &coef).dot(&coef);
            if norm_sq <= 0.0 {
                continue;
            }
            coef *= radius / norm_sq.sqrt();

            // true balanced risk on the holdout
            let f_plus = &g_plus * &coef;
            let f_minus = &g_minus * &coef;
            let risk_plus: f64 = f_plus.iter().map(|&t| spec.loss.eval(t, 1)).sum::<f64>()
                / spec.holdout_per_class as f64;
            let risk_minus: f64 = f_minus.iter().map(|&t| spec.loss.eval(t, -1)).sum::<f64>()
                / spec.holdout_per_class as f64;
            let true_risk = 0.5 * (risk_plus + risk_minus);

            // weighted corrected empirical risk on the corrupted sample
            let mut emp = 0.0;
            for (i, (gp, gn)) in pair_grams.iter().enumerate() {
                let gamma = &spec.gammas[i];
                let w = weights[i];
                let scale = w / n_per_pair as f64;
                let fp = gp * &coef;
                let fn_ = gn * &coef;
                for &t in fp.iter() {
                    emp += scale * llp_corrected_form(spec.loss, gamma, t, 1);
                }
                for &t in fn_.iter() {
                    emp += scale * llp_corrected_form(spec.loss, gamma, t, -1);
                }
            }
            max_dev = max_dev.max((emp - true_risk).abs());
        }
        deviations.push(max_dev);
        if max_dev <= bound {
            covered += 1;
        }
    }
    Ok(CoverageReport {
        coverage: covered as f64 / trials as f64,
        bound,
        deviations,
    })
}

/// Synthetic scenario for the common-source coverage check: one clean
/// balanced two-Gaussian distribution corrupted at the given per-source
/// rates.
#[derive(Clone, Debug)]
pub struct CommonCoverageSpec {
    pub dim: usize,
    pub separation: f64,
    pub sources: Vec<SourceStats>,
    pub loss: MarginLoss,
    pub kernel: KernelSpec,
    pub n_anchors: usize,
    pub holdout_per_class: usize,
}

/// Monte-Carlo check of the common-source bound, structured like
/// [`empirical_coverage_llp`]: per trial the sources are re-drawn from the
/// corrupted distributions and probed with random ball functions.
pub fn empirical_coverage_common(
    spec: &CommonCoverageSpec,
    radius: f64,
    delta: f64,
    trials: usize,
    probes: usize,
    seed_value: u64,
) -> Result<CoverageReport> {
    if spec.sources.is_empty() || trials == 0 || probes == 0 {
        return Err(Error::InvalidConfig(
            "coverage needs sources, trials, and probes".into(),
        ));
    }
    let coeffs: Vec<f64> = spec
        .sources
        .iter()
        .map(|s| snr_coefficient(s, Setting::Common))
        .collect::<Result<_>>()?;
    let weights = optimal_weights(&coeffs)?;
    let inputs = BoundInputs {
        radius,
        kernel_bound: spec.kernel.bound(),
        lipschitz: spec.loss.lipschitz(),
        phi_zero: spec.loss.value_at_zero(),
        delta,
        weights: weights.clone(),
        sources: spec.sources.clone(),
    };
    let bound = bound_common(&inputs)?.value;

    let shift = spec.separation / 2.0;
    let p_plus = crate::data::GaussianClass::standard(spec.dim, shift);
    let p_minus = crate::data::GaussianClass::standard(spec.dim, -shift);

    let mut holdout_rng = seed::rng(seed::derive(seed_value, 0));
    let holdout_plus = draw_matrix(&p_plus, spec.holdout_per_class, &mut holdout_rng);
    let holdout_minus = draw_matrix(&p_minus, spec.holdout_per_class, &mut holdout_rng);

    let mut deviations = Vec::with_capacity(trials);
    let mut covered = 0usize;
    for trial in 0..trials {
        let trial_seed = seed::derive(seed_value, 1000 + trial as u64);
        let mut rng = seed::rng(trial_seed);

        let mut anchors = DMatrix::zeros(spec.n_anchors, spec.dim);
        for r in 0..spec.n_anchors {
            let row = if rng.gen_bool(0.5) {
                p_plus.draw(&mut rng)
            } else {
                p_minus.draw(&mut rng)
            };
            for (c, v) in row.into_iter().enumerate() {
                anchors[(r, c)] = v;
            }
        }

        // corrupted samples: balanced prior, labels flipped per source
        struct TrialSource {
            gram_rows: DMatrix<f64>,
            labels: Vec<i8>,
        }
        let mut trial_sources = Vec::with_capacity(spec.sources.len());
        for s in &spec.sources {
            let rho = s.rho.as_ref().expect("checked by bound_common");
            let mut feats = DMatrix::zeros(s.n, spec.dim);
            let mut labels = Vec::with_capacity(s.n);
            for r in 0..s.n {
                let y: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
                let row = if y == 1 {
                    p_plus.draw(&mut rng)
                } else {
                    p_minus.draw(&mut rng)
                };
                for (c, v) in row.into_iter().enumerate() {
                    feats[(r, c)] = v;
                }
                let flip = rng.gen_bool(rho.flip_probability(y));
                labels.push(if flip { -y } else { y });
            }
            trial_sources.push(TrialSource {
                gram_rows: gram(&feats, &anchors, &spec.kernel)?,
                labels,
            });
        }
        let g_plus = gram(&holdout_plus, &anchors, &spec.kernel)?;
        let g_minus = gram(&holdout_minus, &anchors, &spec.kernel)?;
        let anchor_gram = gram(&anchors, &anchors, &spec.kernel)?;

        let mut max_dev = 0.0f64;
        for _ in 0..probes {
            let mut coef = DVector::from_fn(spec.n_anchors, |_, _| {
                rand::distributions::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            });
            let norm_sq = (&anchor_gram * &coef).dot(&coef);
            if norm_sq <= 0.0 {
                continue;
            }
            coef *= radius / norm_sq.sqrt();

            let f_plus = &g_plus * &coef;
            let f_minus = &g_minus * &coef;
            // clean risk at balanced prior
            let risk_plus: f64 = f_plus.iter().map(|&t| spec.loss.eval(t, 1)).sum::<f64>()
                / spec.holdout_per_class as f64;
            let risk_minus: f64 = f_minus.iter().map(|&t| spec.loss.eval(t, -1)).sum::<f64>()
                / spec.holdout_per_class as f64;
            let true_risk = 0.5 * (risk_plus + risk_minus);

            let mut emp = 0.0;
            for (i, ts) in trial_sources.iter().enumerate() {
                let rho = spec.sources[i].rho.as_ref().expect("present");
                let w = weights[i];
                let scale = w / ts.labels.len() as f64;
                let f = &ts.gram_rows * &coef;
                for (j, &y) in ts.labels.iter().enumerate() {
                    emp += scale * crate::loss::corrected_loss(spec.loss, rho, f[j], y);
                }
            }
            max_dev = max_dev.max((emp - true_risk).abs());
        }
        deviations.push(max_dev);
        if max_dev <= bound {
            covered += 1;
        }
    }
    Ok(CoverageReport {
        coverage: covered as f64 / trials as f64,
        bound,
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{
        corrected_constants, cost_corrected_constants, llp_constants, NoiseRates,
    };
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn unit_inputs(sources: Vec<SourceStats>, weights: WeightVector, delta: f64) -> BoundInputs {
        BoundInputs {
            radius: 1.0,
            kernel_bound: 1.0,
            lipschitz: 1.0,
            phi_zero: LN_2,
            delta,
            weights,
            sources,
        }
    }

    #[test]
    fn common_hand_value() {
        let inputs = unit_inputs(
            vec![SourceStats::common(100, NoiseRates::noiseless())],
            WeightVector::uniform(1).unwrap(),
            0.25,
        );
        let b = bound_common(&inputs).unwrap();
        assert_relative_eq!(b.value, 4.0 * (8.0f64.ln() / 200.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(b.value, 0.4078679, epsilon = 1e-4);

        // doubling every n scales the bound by 1/sqrt(2)
        let doubled = unit_inputs(
            vec![SourceStats::common(200, NoiseRates::noiseless())],
            WeightVector::uniform(1).unwrap(),
            0.25,
        );
        assert_relative_eq!(
            bound_common(&doubled).unwrap().value,
            b.value / 2.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn common_equal_weight_display_form() {
        // uniform weights, equal n: the simplified display
        // (4KRL / sqrt(Nn)) sqrt( mean(factor^2) log(2/delta)/2 )
        let rhos = [
            NoiseRates::new(0.1, 0.2).unwrap(),
            NoiseRates::new(0.0, 0.3).unwrap(),
            NoiseRates::new(0.25, 0.25).unwrap(),
        ];
        let n = 50;
        let sources: Vec<SourceStats> =
            rhos.iter().map(|r| SourceStats::common(n, *r)).collect();
        let inputs = unit_inputs(sources, WeightVector::uniform(3).unwrap(), 0.1);
        let b = bound_common(&inputs).unwrap();
        let mean_sq = rhos
            .iter()
            .map(|r| {
                let f = (1.0 + (r.rho_plus() - r.rho_minus()).abs()) / r.divisor();
                f * f
            })
            .sum::<f64>()
            / 3.0;
        let display =
            4.0 / (3.0f64 * n as f64).sqrt() * (mean_sq * (2.0f64 / 0.1).ln() / 2.0).sqrt();
        assert_relative_eq!(b.value, display, epsilon = 1e-12);
    }

    #[test]
    fn varying_priors_hand_value() {
        // the bound value is phi(0)-free; a small phi(0) keeps the
        // R > 2 phi(0)/(K L) precondition satisfied at R = 1
        let inputs = BoundInputs {
            phi_zero: 0.25,
            ..unit_inputs(
                vec![SourceStats::varying_priors(100, NoiseRates::noiseless(), 0.25)],
                WeightVector::uniform(1).unwrap(),
                0.25,
            )
        };
        let b = bound_varying_priors(&inputs).unwrap();
        assert_relative_eq!(
            b.value,
            0.8 * (8.0f64.ln() / 2.0).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(b.value, 0.8157338, epsilon = 1e-4);

        // the bound blows up as the prior degenerates
        let mut last = b.value;
        for pi in [0.1, 0.01, 0.001] {
            let inputs = BoundInputs {
                phi_zero: 0.25,
                ..unit_inputs(
                    vec![SourceStats::varying_priors(100, NoiseRates::noiseless(), pi)],
                    WeightVector::uniform(1).unwrap(),
                    0.25,
                )
            };
            let v = bound_varying_priors(&inputs).unwrap().value;
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn llp_hand_value() {
        let sources = vec![
            SourceStats::llp(100, GammaPair::new(0.8, 0.0).unwrap()),
            SourceStats::llp(100, GammaPair::new(0.2, 0.0).unwrap()),
        ];
        let coeffs: Vec<f64> = sources
            .iter()
            .map(|s| snr_coefficient(s, Setting::Llp).unwrap())
            .collect();
        let weights = optimal_weights(&coeffs).unwrap();
        let inputs = unit_inputs(sources, weights, 0.25);
        let b = bound_llp(&inputs).unwrap();
        // optimal weights collapse the sum to (sum n_i gap_i^2)^-1
        assert_relative_eq!(
            b.value,
            4.0 * (8.0f64.ln() / (2.0 * 68.0)).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(b.value, 0.4946108, epsilon = 1e-4);

        // pure single pair equals the clean common bound
        let pure = unit_inputs(
            vec![SourceStats::llp(100, GammaPair::new(1.0, 0.0).unwrap())],
            WeightVector::uniform(1).unwrap(),
            0.25,
        );
        let clean = unit_inputs(
            vec![SourceStats::common(100, NoiseRates::noiseless())],
            WeightVector::uniform(1).unwrap(),
            0.25,
        );
        assert_relative_eq!(
            bound_llp(&pure).unwrap().value,
            bound_common(&clean).unwrap().value,
            epsilon = 1e-12
        );
    }

    #[test]
    fn master_hand_value() {
        let inputs = unit_inputs(
            vec![SourceStats::common(100, NoiseRates::noiseless())],
            WeightVector::uniform(1).unwrap(),
            0.25,
        );
        let constants = [LossConstants {
            lipschitz: 1.0,
            at_zero: LN_2,
        }];
        let b = bound_master(&inputs, &constants).unwrap();
        let expected = 0.2 + (LN_2 + 1.0) / 10.0 * (8.0f64.ln() / 2.0).sqrt();
        assert_relative_eq!(b.value, expected, epsilon = 1e-12);
        assert_relative_eq!(b.value, 0.37264, epsilon = 1e-4);

        // R scaling increases both terms
        let bigger = BoundInputs {
            radius: 2.0,
            ..inputs.clone()
        };
        assert!(bound_master(&bigger, &constants).unwrap().value > b.value);
    }

    #[test]
    fn consistency_form_hand_value() {
        let sources = vec![SourceStats::common(100, NoiseRates::noiseless())];
        let v = bound_optimal_consistency_form(&sources, 1.0, 1.0, 1.0, 1.0, 0.25).unwrap();
        assert_relative_eq!(v, 0.8 * (8.0f64.ln() / 2.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(v, 0.8157338, epsilon = 1e-5);
        // halving the floor doubles the bound
        let half = bound_optimal_consistency_form(&sources, 0.5, 1.0, 1.0, 1.0, 0.25).unwrap();
        assert_relative_eq!(half, 2.0 * v, epsilon = 1e-12);
        assert!(bound_optimal_consistency_form(&sources, 0.0, 1.0, 1.0, 1.0, 0.25).is_err());
    }

    #[test]
    fn preconditions_are_named() {
        let inputs = BoundInputs {
            radius: 0.5, // below ln 2 is fine, but we test with phi0/KL = ln 2
            ..unit_inputs(
                vec![SourceStats::common(10, NoiseRates::noiseless())],
                WeightVector::uniform(1).unwrap(),
                0.25,
            )
        };
        let err = bound_common(&inputs).unwrap_err().to_string();
        assert!(err.contains("R > phi(0)/(K L)"), "{err}");

        let inputs = unit_inputs(
            vec![SourceStats::common(10, NoiseRates::noiseless())],
            WeightVector::uniform(1).unwrap(),
            0.5,
        );
        let err = bound_common(&inputs).unwrap_err().to_string();
        assert!(err.contains("delta"), "{err}");

        let prior_inputs = BoundInputs {
            radius: 1.2,
            ..unit_inputs(
                vec![SourceStats::varying_priors(10, NoiseRates::noiseless(), 0.5)],
                WeightVector::uniform(1).unwrap(),
                0.25,
            )
        };
        let err = bound_varying_priors(&prior_inputs).unwrap_err().to_string();
        assert!(err.contains("2 phi(0)"), "{err}");

        let master_inputs = unit_inputs(
            vec![SourceStats::common(10, NoiseRates::noiseless())],
            WeightVector::uniform(1).unwrap(),
            1.5,
        );
        let err = bound_master(
            &master_inputs,
            &[LossConstants {
                lipschitz: 1.0,
                at_zero: LN_2,
            }],
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("delta"), "{err}");
    }

    #[test]
    fn pi_half_reduces_to_common() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let n_sources = rng.gen_range(1..5);
            let mut common_sources = Vec::new();
            let mut prior_sources = Vec::new();
            for _ in 0..n_sources {
                let rp = rng.gen_range(0.0..0.5);
                let rm = rng.gen_range(0.0..(0.95 - rp));
                let rho = NoiseRates::new(rp, rm).unwrap();
                let n = rng.gen_range(5..500);
                common_sources.push(SourceStats::common(n, rho));
                prior_sources.push(SourceStats::varying_priors(n, rho, 0.5));
            }
            let weights = WeightVector::uniform(n_sources).unwrap();
            let radius = rng.gen_range(1.5..5.0);
            let delta = rng.gen_range(0.01..0.25);
            let common = BoundInputs {
                radius,
                delta,
                ..unit_inputs(common_sources, weights.clone(), 0.25)
            };
            let priors = BoundInputs {
                radius,
                delta,
                ..unit_inputs(prior_sources, weights, 0.25)
            };
            let a = bound_common(&common).unwrap().value;
            let b = bound_varying_priors(&priors).unwrap().value;
            assert_relative_eq!(a, b, epsilon = 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn master_is_dominated_by_each_theorem_bound() {
        let loss = MarginLoss::Logistic;
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..500 {
            let n_sources = rng.gen_range(1..6);
            let mut commons = Vec::new();
            let mut priors = Vec::new();
            let mut llps = Vec::new();
            let mut c_common = Vec::new();
            let mut c_priors = Vec::new();
            let mut c_llp = Vec::new();
            for _ in 0..n_sources {
                let rp = rng.gen_range(0.0..0.45);
                let rm = rng.gen_range(0.0..(0.9 - rp));
                let rho = NoiseRates::new(rp, rm).unwrap();
                let pi = rng.gen_range(0.05..0.95);
                let gm = rng.gen_range(0.0..0.7);
                let gp: f64 = gm + rng.gen_range(0.05..(1.0 - gm));
                let gamma = GammaPair::new(gp.min(1.0), gm).unwrap();
                let n = rng.gen_range(5..300);
                commons.push(SourceStats::common(n, rho));
                priors.push(SourceStats::varying_priors(n, rho, pi));
                llps.push(SourceStats::llp(n, gamma));
                c_common.push(corrected_constants(loss, &rho));
                let alpha = crate::loss::CostPair::balanced(pi).unwrap();
                c_priors.push(cost_corrected_constants(loss, &rho, &alpha));
                c_llp.push(llp_constants(loss, &gamma));
            }
            let weights = {
                let raw: Vec<f64> = (0..n_sources).map(|_| rng.gen_range(0.01..1.0)).collect();
                WeightVector::from_masses(&raw).unwrap()
            };
            let delta = rng.gen_range(0.001..0.25);
            let phi0 = loss.value_at_zero();

            // theorem 1 vs master with corrected constants
            let r = phi0 * rng.gen_range(1.001..6.0);
            let inputs = BoundInputs {
                radius: r,
                delta,
                ..unit_inputs(commons, weights.clone(), 0.25)
            };
            let t1 = bound_common(&inputs).unwrap().value;
            let m1 = bound_master(&inputs, &c_common).unwrap().value;
            assert!(m1 <= t1 * (1.0 + 1e-12), "master {m1} > thm1 {t1}");

            // theorem 2 vs master with cost-corrected constants
            let r = 2.0 * phi0 * rng.gen_range(1.001..6.0);
            let inputs = BoundInputs {
                radius: r,
                delta,
                ..unit_inputs(priors, weights.clone(), 0.25)
            };
            let t2 = bound_varying_priors(&inputs).unwrap().value;
            let m2 = bound_master(&inputs, &c_priors).unwrap().value;
            assert!(m2 <= t2 * (1.0 + 1e-12), "master {m2} > thm2 {t2}");

            // theorem 3 vs master with bag-pair constants
            let r = phi0 * rng.gen_range(1.001..6.0);
            let inputs = BoundInputs {
                radius: r,
                delta,
                ..unit_inputs(llps, weights, 0.25)
            };
            let t3 = bound_llp(&inputs).unwrap().value;
            let m3 = bound_master(&inputs, &c_llp).unwrap().value;
            assert!(m3 <= t3 * (1.0 + 1e-12), "master {m3} > thm3 {t3}");
        }
    }

    #[test]
    fn bounds_are_monotone() {
        let rho = NoiseRates::new(0.1, 0.2).unwrap();
        let base = unit_inputs(
            vec![SourceStats::common(100, rho), SourceStats::common(50, rho)],
            WeightVector::uniform(2).unwrap(),
            0.1,
        );
        let v = bound_common(&base).unwrap().value;
        // larger n shrinks
        let more = unit_inputs(
            vec![SourceStats::common(200, rho), SourceStats::common(50, rho)],
            WeightVector::uniform(2).unwrap(),
            0.1,
        );
        assert!(bound_common(&more).unwrap().value < v);
        // larger R grows
        let bigger = BoundInputs {
            radius: 2.0,
            ..base.clone()
        };
        assert!(bound_common(&bigger).unwrap().value > v);
        // smaller delta grows
        let tighter = BoundInputs {
            delta: 0.01,
            ..base
        };
        assert!(bound_common(&tighter).unwrap().value > v);
    }

    #[test]
    fn llp_optimal_weights_beat_uniform() {
        let sources = vec![
            SourceStats::llp(40, GammaPair::new(0.9, 0.1).unwrap()),
            SourceStats::llp(40, GammaPair::new(0.55, 0.45).unwrap()),
        ];
        let coeffs: Vec<f64> = sources
            .iter()
            .map(|s| snr_coefficient(s, Setting::Llp).unwrap())
            .collect();
        let opt = optimal_weights(&coeffs).unwrap();
        let opt_inputs = unit_inputs(sources.clone(), opt, 0.25);
        let uni_inputs = unit_inputs(sources, WeightVector::uniform(2).unwrap(), 0.25);
        assert!(
            bound_llp(&opt_inputs).unwrap().value < bound_llp(&uni_inputs).unwrap().value
        );
    }

    /// Small, fast coverage smoke check; the full-scale run lives in the
    /// acceptance suite.
    #[test]
    fn coverage_smoke() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gammas: Vec<GammaPair> = (0..6)
            .map(|_| {
                let gm = rng.gen_range(0.0..0.45);
                let gp = rng.gen_range(0.55..1.0);
                GammaPair::new(gp, gm).unwrap()
            })
            .collect();
        let spec = LlpCoverageSpec {
            dim: 2,
            separation: 4.0,
            gammas,
            bag_size: 16,
            loss: MarginLoss::Logistic,
            kernel: KernelSpec::gaussian(0.5).unwrap(),
            n_anchors: 10,
            holdout_per_class: 2000,
        };
        let report = empirical_coverage_llp(&spec, 1.0, 0.25, 20, 10, 11).unwrap();
        assert!(report.coverage >= 0.75, "coverage {}", report.coverage);
        assert!(report.bound > 0.0);
        assert_eq!(report.deviations.len(), 20);
    }
}
