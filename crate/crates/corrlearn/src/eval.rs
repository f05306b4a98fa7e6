//! Metrics, cross-validation by corrected empirical risk, and the repeated
//! experiment protocol.
//!
//! Cross-validation folds partition bag pairs (the iid units of the model),
//! never instances. The selection criterion is the corrected empirical risk
//! of the validation pairs, with weights and correction parameters
//! recomputed from the validation pairs' proportions, so instance labels
//! play no role in model selection.

use nalgebra::DVector;

use crate::data::{split, Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::llp::{pair_bags, BagPair, SizePolicy};
use crate::loss::{Label, MarginLoss};
use crate::seed;
use crate::solver::{
    corrected_empirical_risk, train, TrainConfig, TrainedModel, TrainingProblem,
};
use crate::weighting::{optimal_weights, snr_coefficient, Setting, SourceStats, WeightVector};

/// Classification rule: sign of the decision value, with sign(0) = +1.
pub fn decision_label(value: f64) -> Label {
    if value >= 0.0 {
        1
    } else {
        -1
    }
}

/// Balanced error rate: the mean of the two class-conditional error rates
/// under the sign rule. Undefined unless both classes appear in the truth.
pub fn ber(decision_values: &[f64], labels: &[Label]) -> Result<f64> {
    if decision_values.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decision values vs {} labels",
            decision_values.len(),
            labels.len()
        )));
    }
    let mut err = [0usize; 2];
    let mut count = [0usize; 2];
    for (&v, &y) in decision_values.iter().zip(labels.iter()) {
        let idx = usize::from(y == 1);
        count[idx] += 1;
        if decision_label(v) != y {
            err[idx] += 1;
        }
    }
    if count[0] == 0 || count[1] == 0 {
        return Err(Error::UndefinedMetric(
            "balanced error rate needs both classes in the truth".into(),
        ));
    }
    Ok(0.5 * (err[0] as f64 / count[0] as f64 + err[1] as f64 / count[1] as f64))
}

/// `1 - ber`.
pub fn balanced_accuracy(decision_values: &[f64], labels: &[Label]) -> Result<f64> {
    Ok(1.0 - ber(decision_values, labels)?)
}

/// Fraction of correct sign predictions.
pub fn accuracy(decision_values: &[f64], labels: &[Label]) -> Result<f64> {
    if decision_values.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decision values vs {} labels",
            decision_values.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty sample".into()));
    }
    let correct = decision_values
        .iter()
        .zip(labels.iter())
        .filter(|(&v, &y)| decision_label(v) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// One cell of the hyperparameter grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub decay: f64,
    pub iterations: usize,
    pub lambda: f64,
    pub bandwidth: f64,
}

/// The tuning grid; cells enumerate in nested order with `learning_rates`
/// varying slowest and `bandwidths` fastest. Ties in cross-validation break
/// toward the earlier cell.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub decays: Vec<f64>,
    pub iterations: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub bandwidths: Vec<f64>,
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty()
            || self.decays.is_empty()
            || self.iterations.is_empty()
            || self.lambdas.is_empty()
            || self.bandwidths.is_empty()
        {
            return Err(Error::InvalidConfig("empty hyperparameter grid axis".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &decay in &self.decays {
                for &iterations in &self.iterations {
                    for &lambda in &self.lambdas {
                        for &bandwidth in &self.bandwidths {
                            out.push(HyperParams {
                                learning_rate,
                                decay,
                                iterations,
                                lambda,
                                bandwidth,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Optimal source weights for a set of usable bag pairs.
pub fn llp_weights(pairs: &[BagPair]) -> Result<WeightVector> {
    let coeffs: Vec<f64> = pairs
        .iter()
        .map(|p| snr_coefficient(&SourceStats::llp(p.n(), p.gamma_pair()?), Setting::Llp))
        .collect::<Result<_>>()?;
    optimal_weights(&coeffs)
}

fn train_on_pairs(
    loss: MarginLoss,
    pairs: &[BagPair],
    cell: &HyperParams,
    seed_value: u64,
) -> Result<TrainedModel> {
    let weights = llp_weights(pairs)?;
    let problem = TrainingProblem::from_bag_pairs(
        loss,
        pairs,
        &weights,
        KernelSpec::gaussian(cell.bandwidth)?,
        cell.lambda,
    )?;
    let config = TrainConfig::new(cell.learning_rate, cell.decay, cell.iterations, seed_value)?;
    train(&problem, &config)
}

/// Outcome of a cross-validation sweep.
#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub chosen: HyperParams,
    pub chosen_index: usize,
    /// Mean validation corrected empirical risk per grid cell.
    pub cell_scores: Vec<f64>,
}

/// K-fold cross-validation over bag pairs: for every grid cell, trains on
/// the out-of-fold pairs and scores the corrected empirical risk of the
/// validation pairs (with validation-side weights); returns the argmin cell.
pub fn cross_validate(
    loss: MarginLoss,
    pairs: &[BagPair],
    grid: &HyperGrid,
    folds: usize,
    seed_value: u64,
) -> Result<CvOutcome> {
    grid.validate()?;
    if folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if pairs.len() < folds {
        return Err(Error::InvalidConfig(format!(
            "{} bag pairs cannot fill {folds} folds",
            pairs.len()
        )));
    }
    // shuffled strided fold assignment
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = seed::rng(seed::derive(seed_value, 0xf01d));
    for i in (1..order.len()).rev() {
        let j = rand::Rng::gen_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    let fold_of: Vec<usize> = {
        let mut f = vec![0usize; pairs.len()];
        for (pos, &idx) in order.iter().enumerate() {
            f[idx] = pos % folds;
        }
        f
    };

    let cells = grid.cells();
    let mut cell_scores = Vec::with_capacity(cells.len());
    for (ci, cell) in cells.iter().enumerate() {
        let mut total = 0.0;
        for fold in 0..folds {
            let train_pairs: Vec<BagPair> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| fold_of[*i] != fold)
                .map(|(_, p)| p.clone())
                .collect();
            let val_pairs: Vec<BagPair> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| fold_of[*i] == fold)
                .map(|(_, p)| p.clone())
                .collect();
            let run = train_on_pairs(
                loss,
                &train_pairs,
                cell,
                seed::derive(seed_value, (ci * folds + fold) as u64),
            )?;
            // criterion: corrected risk of the validation pairs under their
            // own weights
            let val_weights = llp_weights(&val_pairs)?;
            let val_problem = TrainingProblem::from_bag_pairs(
                loss,
                &val_pairs,
                &val_weights,
                KernelSpec::gaussian(cell.bandwidth)?,
                cell.lambda,
            )?;
            total += corrected_empirical_risk(&val_problem, &run.model)?;
        }
        cell_scores.push(total / folds as f64);
    }
    let mut chosen_index = 0;
    for (i, &s) in cell_scores.iter().enumerate() {
        if s < cell_scores[chosen_index] {
            chosen_index = i;
        }
    }
    Ok(CvOutcome {
        chosen: cells[chosen_index],
        chosen_index,
        cell_scores,
    })
}

/// Protocol settings for [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub loss: MarginLoss,
    pub bag_sizes: Vec<usize>,
    pub repetitions: usize,
    pub cv_folds: usize,
    pub grid: HyperGrid,
    pub train_fraction: f64,
    pub standardize: bool,
    /// Confidence for the reported bound values.
    pub delta: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.bag_sizes.is_empty() {
            return Err(Error::InvalidConfig("no bag sizes".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be positive".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidConfig("cv_folds must be at least 2".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 0.25) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1/4], got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// One repetition of the pipeline.
#[derive(Clone, Debug)]
pub struct RepetitionOutcome {
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    pub chosen: HyperParams,
    /// Paired-bag bound at the radius proxy `sqrt(phi(0)/lambda)` (lambda >
    /// 0) or the trained norm; absent when the theorem preconditions fail.
    pub bound: Option<f64>,
    pub retained_pairs: usize,
    pub dropped_zero_gap: usize,
    pub folds_used: usize,
}

/// Aggregates for one (dataset, bag size) cell.
#[derive(Clone, Debug)]
pub struct BagSizeRow {
    pub bag_size: usize,
    pub mean_balanced_accuracy: f64,
    pub std_balanced_accuracy: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub repetitions: Vec<RepetitionOutcome>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub dataset: String,
    pub method: String,
    pub rows: Vec<BagSizeRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs one repetition for one bag size: split, bag, pair, drop zero-gap
/// pairs, weight, cross-validate, train, and score on the clean test side.
pub fn run_repetition(
    dataset: &Dataset,
    bag_size: usize,
    config: &ExperimentConfig,
    rep: usize,
) -> Result<RepetitionOutcome> {
    let tag = |phase: u64| -> u64 {
        seed::derive(
            config.seed,
            (bag_size as u64) << 24 | (rep as u64) << 4 | phase,
        )
    };
    let (train_set, test_set) = split(dataset, config.train_fraction, tag(1))?;
    let (train_set, test_set) = if config.standardize {
        let s = Standardizer::fit(&train_set);
        (s.apply(&train_set), s.apply(&test_set))
    } else {
        (train_set, test_set)
    };
    let mut bags = crate::data::make_bags(&train_set, bag_size, tag(2))?;
    if bags.len() < 2 {
        return Err(Error::NoUsablePairs(format!(
            "bag size {bag_size} yields {} bag(s); need at least 2",
            bags.len()
        )));
    }
    if bags.len() % 2 != 0 {
        // an odd bag count cannot be perfectly matched; drop the last bag of
        // the shuffled order
        bags.pop();
    }
    let pairing = pair_bags(&bags, SizePolicy::Strict)?;
    let retained: Vec<BagPair> = pairing
        .usable_pairs()
        .into_iter()
        .map(|(_, p)| p.clone())
        .collect();
    let dropped_zero_gap = pairing.pairs.len() - retained.len();
    if retained.is_empty() {
        return Err(Error::NoUsablePairs(
            "all pairs have zero proportion gap".into(),
        ));
    }

    // the fold count cannot exceed the pair count; a single pair skips
    // model selection entirely
    let (chosen, folds_used) = if retained.len() == 1 {
        (config.grid.cells()[0], 0)
    } else {
        let folds = config.cv_folds.min(retained.len());
        let outcome = cross_validate(config.loss, &retained, &config.grid, folds, tag(3))?;
        (outcome.chosen, folds)
    };

    let run = train_on_pairs(config.loss, &retained, &chosen, tag(4))?;
    let decisions = run.model.evaluate_rows(&test_set.features)?;
    let values: Vec<f64> = decisions.iter().copied().collect();
    let labels = test_set.labels.as_ref().ok_or_else(|| Error::InvalidData {
        path: "<dataset>".into(),
        reason: "test split has no labels".into(),
    })?;
    let bacc = balanced_accuracy(&values, labels)?;
    let acc = accuracy(&values, labels)?;

    // bound value at the radius proxy
    let phi0 = config.loss.value_at_zero();
    let radius = if chosen.lambda > 0.0 {
        (phi0 / chosen.lambda).sqrt()
    } else {
        run.model.rkhs_norm_sq().sqrt()
    };
    let weights = llp_weights(&retained)?;
    let sources: Vec<SourceStats> = retained
        .iter()
        .map(|p| Ok(SourceStats::llp(p.n(), p.gamma_pair()?)))
        .collect::<Result<_>>()?;
    let inputs = crate::bounds::BoundInputs {
        radius,
        kernel_bound: 1.0,
        lipschitz: config.loss.lipschitz(),
        phi_zero: phi0,
        delta: config.delta,
        weights,
        sources,
    };
    let bound = crate::bounds::bound_llp(&inputs).ok().map(|b| b.value);

    Ok(RepetitionOutcome {
        balanced_accuracy: bacc,
        accuracy: acc,
        chosen,
        bound,
        retained_pairs: retained.len(),
        dropped_zero_gap,
        folds_used,
    })
}

/// The full protocol: every bag size, `repetitions` independent runs,
/// aggregated as mean and sample standard deviation.
pub fn run_experiment(
    dataset: &Dataset,
    dataset_name: &str,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.bag_sizes.len());
    for &bag_size in &config.bag_sizes {
        let mut reps = Vec::with_capacity(config.repetitions);
        for rep in 0..config.repetitions {
            let outcome = run_repetition(dataset, bag_size, config, rep).map_err(|e| {
                Error::InvalidConfig(format!(
                    "dataset {dataset_name}, bag size {bag_size}, repetition {rep}: {e}"
                ))
            })?;
            reps.push(outcome);
        }
        let (mean_bacc, std_bacc) =
            mean_std(&reps.iter().map(|r| r.balanced_accuracy).collect::<Vec<_>>());
        let (mean_acc, std_acc) = mean_std(&reps.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        rows.push(BagSizeRow {
            bag_size,
            mean_balanced_accuracy: mean_bacc,
            std_balanced_accuracy: std_bacc,
            mean_accuracy: mean_acc,
            std_accuracy: std_acc,
            repetitions: reps,
        });
    }
    Ok(ExperimentReport {
        dataset: dataset_name.to_string(),
        method: "corrected loss".to_string(),
        rows,
    })
}

impl ExperimentReport {
    /// Long-form CSV, one row per bag size.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "dataset,method,bag_size,mean_balanced_accuracy,std_balanced_accuracy,mean_accuracy,std_accuracy,mean_bound\n",
        );
        for row in &self.rows {
            let bounds: Vec<f64> = row.repetitions.iter().filter_map(|r| r.bound).collect();
            let mean_bound = if bounds.is_empty() {
                f64::NAN
            } else {
                bounds.iter().sum::<f64>() / bounds.len() as f64
            };
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                self.dataset,
                self.method,
                row.bag_size,
                row.mean_balanced_accuracy,
                row.std_balanced_accuracy,
                row.mean_accuracy,
                row.std_accuracy,
                mean_bound,
            ));
        }
        out
    }

    /// Aligned table in the dataset-by-bag-size layout: one line per
    /// metric.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.rows.iter().map(|r| r.bag_size.to_string()).collect();
        out.push_str(&format!(
            "{:<16} {:<16} {}\n",
            "dataset",
            "method",
            header
                .iter()
                .map(|h| format!("{h:<19}"))
                .collect::<String>()
        ));
        let fmt_cells = |sel: &dyn Fn(&BagSizeRow) -> (f64, f64)| -> String {
            self.rows
                .iter()
                .map(|r| {
                    let (m, s) = sel(r);
                    format!("{m:.4} +/- {s:.4}   ")
                })
                .collect()
        };
        out.push_str(&format!(
            "{:<16} {:<16} {}\n",
            self.dataset,
            self.method,
            fmt_cells(&|r| (r.mean_balanced_accuracy, r.std_balanced_accuracy))
        ));
        out.push_str(&format!(
            "{:<16} {:<16} {}\n",
            format!("{} (acc)", self.dataset),
            self.method,
            fmt_cells(&|r| (r.mean_accuracy, r.std_accuracy))
        ));
        out
    }
}

/// Evaluates a trained model on a dataset, returning decision values.
pub fn decision_values(model: &crate::kernel::KernelModel, data: &Dataset) -> Result<Vec<f64>> {
    let v: DVector<f64> = model.evaluate_rows(&data.features)?;
    Ok(v.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussians;
    use crate::llp::Bag;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ber_hand_cases() {
        // perfect
        assert_relative_eq!(ber(&[1.0, -1.0], &[1, -1]).unwrap(), 0.0);
        // constant predictor scores one half regardless of prior
        let labels = vec![1, 1, 1, 1, 1, 1, 1, -1];
        let values = vec![1.0; 8];
        assert_relative_eq!(ber(&values, &labels).unwrap(), 0.5);
        // 2 of 4 positives wrong, 0 of 6 negatives wrong
        let labels = vec![1, 1, 1, 1, -1, -1, -1, -1, -1, -1];
        let values = vec![-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0];
        assert_relative_eq!(ber(&values, &labels).unwrap(), 0.25);
        // undefined on a single class
        assert!(ber(&[1.0, -1.0], &[1, 1]).is_err());
    }

    #[test]
    fn accuracy_hand_cases() {
        assert_relative_eq!(accuracy(&[2.0, -3.0], &[1, -1]).unwrap(), 1.0);
        assert_relative_eq!(accuracy(&[-2.0, 3.0], &[1, -1]).unwrap(), 0.0);
        let values = vec![1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let labels = vec![1, 1, 1, -1, -1, -1, -1, -1, 1, 1];
        assert_relative_eq!(accuracy(&values, &labels).unwrap(), 0.7);
        assert!(accuracy(&[], &[]).is_err());
        // sign(0) counts as +1
        assert_relative_eq!(accuracy(&[0.0], &[1]).unwrap(), 1.0);
        assert_relative_eq!(accuracy(&[0.0], &[-1]).unwrap(), 0.0);
    }

    #[test]
    fn ber_insensitive_to_class_prior_resampling() {
        // fixed decision rule on a large synthetic test set; halving the
        // negatives moves the BER by less than 3 binomial sigmas
        let d = synth_gaussians(2, 2.0, 40_000, 5).unwrap();
        let labels = d.labels.as_ref().unwrap();
        let values: Vec<f64> = (0..d.n()).map(|i| d.features[(i, 0)]).collect();
        let full = ber(&values, labels).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut sub_values = Vec::new();
        let mut sub_labels = Vec::new();
        let mut kept_neg = 0usize;
        for i in 0..d.n() {
            if labels[i] == -1 && !rng.gen_bool(0.5) {
                continue;
            }
            if labels[i] == -1 {
                kept_neg += 1;
            }
            sub_values.push(values[i]);
            sub_labels.push(labels[i]);
        }
        let sub = ber(&sub_values, &sub_labels).unwrap();
        // positives are untouched, so only the negative error estimate
        // moved; its sampling std on the retained half bounds the shift
        let neg_errors = values
            .iter()
            .zip(labels.iter())
            .filter(|(&v, &y)| y == -1 && decision_label(v) != y)
            .count() as f64;
        let n_neg = labels.iter().filter(|&&y| y == -1).count() as f64;
        let e_neg = neg_errors / n_neg;
        let sigma = 0.5 * (e_neg * (1.0 - e_neg) / kept_neg as f64).sqrt();
        assert!(
            (sub - full).abs() <= 3.0 * sigma.max(1e-4),
            "ber moved from {full} to {sub} (sigma {sigma})"
        );
    }

    fn synthetic_pairs(n_pairs: usize, m: usize, seed_val: u64) -> Vec<BagPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_val);
        (0..n_pairs)
            .map(|_| {
                let gp = rng.gen_range(0.6..1.0);
                let gm = rng.gen_range(0.0..0.4);
                let pos = Bag::new(
                    DMatrix::from_fn(m, 2, |_, c| {
                        rng.gen_range(-1.0..1.0) + if c == 0 { 2.0 * gp - 1.0 } else { 0.0 }
                    }),
                    gp,
                )
                .unwrap();
                let neg = Bag::new(
                    DMatrix::from_fn(m, 2, |_, c| {
                        rng.gen_range(-1.0..1.0) + if c == 0 { 2.0 * gm - 1.0 } else { 0.0 }
                    }),
                    gm,
                )
                .unwrap();
                BagPair::new(pos, neg).unwrap()
            })
            .collect()
    }

    #[test]
    fn cv_single_cell_and_determinism() {
        let pairs = synthetic_pairs(6, 4, 1);
        let grid = HyperGrid {
            learning_rates: vec![0.1],
            decays: vec![0.01],
            iterations: vec![20],
            lambdas: vec![0.01],
            bandwidths: vec![0.5],
        };
        let a = cross_validate(MarginLoss::Logistic, &pairs, &grid, 3, 7).unwrap();
        assert_eq!(a.chosen_index, 0);
        let b = cross_validate(MarginLoss::Logistic, &pairs, &grid, 3, 7).unwrap();
        assert_eq!(a.cell_scores, b.cell_scores);
        assert_eq!(a.chosen, b.chosen);
        // too few pairs
        assert!(cross_validate(MarginLoss::Logistic, &pairs[..2], &grid, 3, 7).is_err());
    }

    #[test]
    fn cv_prefers_learning_over_frozen_model() {
        // lambda large enough to pin the model at zero loses to a lambda
        // that lets training move, on every fold
        let pairs = synthetic_pairs(8, 6, 2);
        let grid = HyperGrid {
            learning_rates: vec![0.5],
            decays: vec![0.001],
            iterations: vec![150],
            lambdas: vec![10_000.0, 0.001],
            bandwidths: vec![0.5],
        };
        let outcome = cross_validate(MarginLoss::Logistic, &pairs, &grid, 4, 3).unwrap();
        assert_eq!(outcome.chosen.lambda, 0.001);
        assert!(outcome.cell_scores[1] < outcome.cell_scores[0]);
    }

    #[test]
    fn cv_ignores_hidden_labels() {
        // the criterion sees only instances and proportions: scrubbing
        // hidden labels changes nothing
        let d = synth_gaussians(2, 3.0, 60, 11).unwrap();
        let bags = crate::data::make_bags(&d, 6, 13).unwrap();
        let pairing = pair_bags(&bags, SizePolicy::Strict).unwrap();
        let with_hidden: Vec<BagPair> = pairing
            .usable_pairs()
            .into_iter()
            .map(|(_, p)| p.clone())
            .collect();
        let scrubbed: Vec<BagPair> = with_hidden
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.pos.hidden_labels = None;
                q.neg.hidden_labels = None;
                q
            })
            .collect();
        let grid = HyperGrid {
            learning_rates: vec![0.2],
            decays: vec![0.01],
            iterations: vec![30],
            lambdas: vec![0.01, 0.1],
            bandwidths: vec![0.8],
        };
        let a = cross_validate(MarginLoss::Logistic, &with_hidden, &grid, 3, 5).unwrap();
        let b = cross_validate(MarginLoss::Logistic, &scrubbed, &grid, 3, 5).unwrap();
        assert_eq!(a.chosen, b.chosen);
        assert_eq!(a.cell_scores, b.cell_scores);

        // and the trained coefficients agree bit for bit
        let ra = train_on_pairs(MarginLoss::Logistic, &with_hidden, &a.chosen, 99).unwrap();
        let rb = train_on_pairs(MarginLoss::Logistic, &scrubbed, &b.chosen, 99).unwrap();
        assert_eq!(ra.model.coefficients(), rb.model.coefficients());
    }

    #[test]
    fn experiment_report_shape() {
        let d = synth_gaussians(2, 4.0, 120, 3).unwrap();
        let config = ExperimentConfig {
            loss: MarginLoss::Logistic,
            bag_sizes: vec![2, 8],
            repetitions: 2,
            cv_folds: 3,
            grid: HyperGrid {
                learning_rates: vec![0.5],
                decays: vec![0.001],
                iterations: vec![60],
                lambdas: vec![0.001],
                bandwidths: vec![0.5],
            },
            train_fraction: 0.8,
            standardize: false,
            delta: 0.05,
            seed: 21,
        };
        let report = run_experiment(&d, "synthetic", &config).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert_eq!(row.repetitions.len(), 2);
            assert!(row.std_balanced_accuracy >= 0.0);
            assert!((0.0..=1.0).contains(&row.mean_balanced_accuracy));
            for rep in &row.repetitions {
                assert!(rep.retained_pairs > 0);
                if let Some(b) = rep.bound {
                    assert!(b > 0.0);
                }
            }
        }
        let csv = report.to_csv();
        assert!(csv.lines().count() == 3);
        assert!(csv.starts_with("dataset,method,bag_size"));
        let table = report.to_table();
        assert!(table.contains("corrected loss"));

        // degenerate bag size: a single bag errors with context
        let tiny = synth_gaussians(2, 4.0, 10, 3).unwrap();
        let mut bad = config.clone();
        bad.bag_sizes = vec![16];
        let err = run_experiment(&tiny, "tiny", &bad).unwrap_err().to_string();
        assert!(err.contains("bag size 16"), "{err}");
    }

    #[test]
    fn experiment_is_seed_deterministic() {
        let d = synth_gaussians(2, 4.0, 80, 9).unwrap();
        let config = ExperimentConfig {
            loss: MarginLoss::Logistic,
            bag_sizes: vec![4],
            repetitions: 2,
            cv_folds: 2,
            grid: HyperGrid {
                learning_rates: vec![0.3],
                decays: vec![0.001],
                iterations: vec![40],
                lambdas: vec![0.001, 0.1],
                bandwidths: vec![0.5],
            },
            train_fraction: 0.8,
            standardize: false,
            delta: 0.05,
            seed: 77,
        };
        let a = run_experiment(&d, "synthetic", &config).unwrap();
        let b = run_experiment(&d, "synthetic", &config).unwrap();
        for (ra, rb) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(ra.mean_balanced_accuracy, rb.mean_balanced_accuracy);
            assert_eq!(ra.mean_accuracy, rb.mean_accuracy);
        }
    }
}
