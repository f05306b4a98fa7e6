//! Regularized weighted corrected-loss empirical risk minimization over an
//! RKHS, in representer form.
//!
//! The trained decision function is `f(x) = sum_p c_p k(x, x_p)` over all
//! training points; gradient descent runs on the coefficient vector with
//! step size `learning_rate / (1 + decay * step)`. The objective is
//!
//! ```text
//! sum_i (w_i / n_i) sum_j (l_{alpha_i})^{rho_i}(f(X_ij), y_ij)  +  lambda ||f||^2
//! ```
//!
//! whose first term can be negative; training monitors the trace and fails
//! fast on non-finite values.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelModel, KernelSpec};
use crate::llp::BagPair;
use crate::loss::{
    check_second_order_condition, corrected_cost_curvature, corrected_cost_grad,
    corrected_cost_loss, CostPair, GammaPair, Label, MarginLoss, NoiseRates,
};
use crate::seed;
use crate::textio::fmt_g17;
use crate::weighting::WeightVector;

/// One corrupted source: points with noisy (or pseudo) labels and the
/// correction parameters that debias them.
#[derive(Clone, Debug)]
pub struct SourceSample {
    pub features: DMatrix<f64>,
    pub labels: Vec<Label>,
    pub rho: NoiseRates,
    pub alpha: CostPair,
    pub weight: f64,
    pub gamma: Option<GammaPair>,
}

/// A weighted multi-source training problem.
#[derive(Clone, Debug)]
pub struct TrainingProblem {
    pub loss: MarginLoss,
    pub sources: Vec<SourceSample>,
    pub kernel: KernelSpec,
    pub lambda: f64,
}

impl TrainingProblem {
    pub fn new(
        loss: MarginLoss,
        sources: Vec<SourceSample>,
        kernel: KernelSpec,
        lambda: f64,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::InvalidConfig("no sources".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        let dim = sources[0].features.ncols();
        for (i, s) in sources.iter().enumerate() {
            if s.features.nrows() == 0 {
                return Err(Error::InvalidConfig(format!("source {i} is empty")));
            }
            if s.features.nrows() != s.labels.len() {
                return Err(Error::DimensionMismatch(format!(
                    "source {i}: {} rows vs {} labels",
                    s.features.nrows(),
                    s.labels.len()
                )));
            }
            if s.features.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "source {i} has feature dimension {} but source 0 has {dim}",
                    s.features.ncols()
                )));
            }
        }
        // weights must form a simplex vector over the sources
        WeightVector::new(sources.iter().map(|s| s.weight).collect())?;
        Ok(TrainingProblem {
            loss,
            sources,
            kernel,
            lambda,
        })
    }

    /// Builds the LLP problem from matched bag pairs: members of the
    /// positive bag get pseudo-label +1, of the negative bag -1, and each
    /// pair carries its derived correction parameters. Reads only instances
    /// and proportions; hidden labels never enter.
    pub fn from_bag_pairs(
        loss: MarginLoss,
        pairs: &[BagPair],
        weights: &WeightVector,
        kernel: KernelSpec,
        lambda: f64,
    ) -> Result<Self> {
        if pairs.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} pairs vs {} weights",
                pairs.len(),
                weights.len()
            )));
        }
        let mut sources = Vec::with_capacity(pairs.len());
        for (idx, pair) in pairs.iter().enumerate() {
            let gamma = pair.gamma_pair()?;
            let derived = crate::llp::derive(&gamma);
            let n = pair.n();
            let dim = pair.pos.instances.ncols();
            let mut features = DMatrix::zeros(n, dim);
            let mut labels = Vec::with_capacity(n);
            for r in 0..pair.pos.size() {
                features.set_row(r, &pair.pos.instances.row(r));
                labels.push(1);
            }
            for r in 0..pair.neg.size() {
                features.set_row(pair.pos.size() + r, &pair.neg.instances.row(r));
                labels.push(-1);
            }
            sources.push(SourceSample {
                features,
                labels,
                rho: derived.rho,
                alpha: derived.alpha,
                weight: weights[idx],
                gamma: Some(gamma),
            });
        }
        TrainingProblem::new(loss, sources, kernel, lambda)
    }

    pub fn total_n(&self) -> usize {
        self.sources.iter().map(|s| s.features.nrows()).sum()
    }

    pub fn dim(&self) -> usize {
        self.sources[0].features.ncols()
    }

    /// All training points stacked in source order; the representer anchors.
    pub fn stacked_features(&self) -> DMatrix<f64> {
        let n = self.total_n();
        let mut out = DMatrix::zeros(n, self.dim());
        let mut r = 0;
        for s in &self.sources {
            for i in 0..s.features.nrows() {
                out.set_row(r, &s.features.row(i));
                r += 1;
            }
        }
        out
    }

    /// Per-point (label, w_i / n_i) in stacking order.
    fn point_scales(&self) -> Vec<(usize, Label, f64)> {
        let mut out = Vec::with_capacity(self.total_n());
        for (i, s) in self.sources.iter().enumerate() {
            let scale = s.weight / s.labels.len() as f64;
            for &y in &s.labels {
                out.push((i, y, scale));
            }
        }
        out
    }

    fn check_representer(&self, model: &KernelModel) -> Result<()> {
        if model.kernel() != &self.kernel || model.anchors() != &self.stacked_features() {
            return Err(Error::Precondition(
                "model anchors must be exactly the stacked training points".into(),
            ));
        }
        Ok(())
    }

    /// The zero-coefficient model on this problem's anchors.
    pub fn zero_model(&self) -> KernelModel {
        KernelModel::new(
            self.stacked_features(),
            DVector::zeros(self.total_n()),
            self.kernel,
        )
        .expect("consistent by construction")
    }
}

/// Weighted corrected empirical risk of an arbitrary model on the problem's
/// points (the cross-validation criterion; no representer structure
/// assumed). Can be negative.
pub fn corrected_empirical_risk(problem: &TrainingProblem, model: &KernelModel) -> Result<f64> {
    let mut total = 0.0;
    for s in &problem.sources {
        let values = model.evaluate_rows(&s.features)?;
        let scale = s.weight / s.labels.len() as f64;
        for (j, &y) in s.labels.iter().enumerate() {
            total += scale * corrected_cost_loss(problem.loss, &s.alpha, &s.rho, values[j], y);
        }
    }
    Ok(total)
}

/// Full objective: corrected empirical risk plus `lambda ||f||^2`. The
/// model must be in representer form over the training points.
pub fn objective(problem: &TrainingProblem, model: &KernelModel) -> Result<f64> {
    problem.check_representer(model)?;
    Ok(corrected_empirical_risk(problem, model)? + problem.lambda * model.rkhs_norm_sq())
}

/// Exact objective gradient with respect to the representer coefficients:
/// `G (r + 2 lambda c)` where `r` holds the scaled per-point corrected-loss
/// derivatives.
pub fn gradient(problem: &TrainingProblem, model: &KernelModel) -> Result<DVector<f64>> {
    problem.check_representer(model)?;
    let anchors = problem.stacked_features();
    let g = gram(&anchors, &anchors, &problem.kernel)?;
    let t = &g * model.coefficients();
    let scales = problem.point_scales();
    let mut r = DVector::zeros(t.len());
    for (p, &(i, y, scale)) in scales.iter().enumerate() {
        let s = &problem.sources[i];
        r[p] = scale * corrected_cost_grad(problem.loss, &s.alpha, &s.rho, t[p], y);
    }
    let inner = r + model.coefficients() * (2.0 * problem.lambda);
    Ok(&g * inner)
}

/// Numerically assembled coefficient Hessian `G D G + 2 lambda G` with
/// `D_pp` the scaled per-point loss curvature at the current margins.
pub fn hessian(problem: &TrainingProblem, model: &KernelModel) -> Result<DMatrix<f64>> {
    problem.check_representer(model)?;
    let anchors = problem.stacked_features();
    let g = gram(&anchors, &anchors, &problem.kernel)?;
    let t = &g * model.coefficients();
    let scales = problem.point_scales();
    let n = t.len();
    let mut d = DVector::zeros(n);
    for (p, &(i, y, scale)) in scales.iter().enumerate() {
        let s = &problem.sources[i];
        d[p] = scale * corrected_cost_curvature(problem.loss, &s.alpha, &s.rho, t[p], y);
    }
    let mut gdg = DMatrix::zeros(n, n);
    for p in 0..n {
        let gp = g.column(p);
        let dp = d[p];
        if dp == 0.0 {
            continue;
        }
        // rank-one accumulation of d_p * g_p g_p^T
        for a in 0..n {
            let v = dp * gp[a];
            for b in 0..n {
                gdg[(a, b)] += v * gp[b];
            }
        }
    }
    Ok(gdg + g * (2.0 * problem.lambda))
}

/// The pooled scalar risk `J(t)`: every margin replaced by the same `t`.
pub fn pooled_scalar_risk(problem: &TrainingProblem, t: f64) -> f64 {
    let mut total = 0.0;
    for s in &problem.sources {
        let scale = s.weight / s.labels.len() as f64;
        for &y in &s.labels {
            total += scale * corrected_cost_loss(problem.loss, &s.alpha, &s.rho, t, y);
        }
    }
    total
}

/// Coefficient initialization for training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Gaussian { scale: f64 },
}

/// Gradient-descent settings; the step at iteration k is
/// `learning_rate / (1 + decay * k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub iterations: usize,
    pub seed: u64,
    pub init: Init,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, decay: f64, iterations: usize, seed: u64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(decay >= 0.0 && decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "decay must be nonnegative, got {decay}"
            )));
        }
        if iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        Ok(TrainConfig {
            learning_rate,
            decay,
            iterations,
            seed,
            init: Init::Zeros,
        })
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// A trained model with its objective trace (one entry per iteration plus
/// the initial value).
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: KernelModel,
    pub trace: Vec<f64>,
}

impl TrainedModel {
    pub fn final_objective(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }

    /// True when the objective never increased (up to a tiny slack for
    /// floating-point plateaus).
    pub fn monotone(&self) -> bool {
        self.trace.windows(2).all(|w| {
            let tol = 1e-12 * w[0].abs().max(1.0);
            w[1] <= w[0] + tol
        })
    }
}

/// Full-batch gradient descent from the configured initialization.
/// Deterministic given the seed. Fails with [`Error::Diverged`] on the
/// first non-finite objective.
pub fn train(problem: &TrainingProblem, config: &TrainConfig) -> Result<TrainedModel> {
    let anchors = problem.stacked_features();
    let g = gram(&anchors, &anchors, &problem.kernel)?;
    let n = problem.total_n();
    let scales = problem.point_scales();

    let mut c: DVector<f64> = match config.init {
        Init::Zeros => DVector::zeros(n),
        Init::Gaussian { scale } => {
            let mut rng = seed::rng(config.seed);
            DVector::from_fn(n, |_, _| {
                let z: f64 =
                    rand::distributions::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                scale * z
            })
        }
    };

    let mut trace = Vec::with_capacity(config.iterations + 1);
    for step in 0..=config.iterations {
        let t = &g * &c;
        let mut risk = 0.0;
        let mut r = DVector::zeros(n);
        for (p, &(i, y, scale)) in scales.iter().enumerate() {
            let s = &problem.sources[i];
            risk += scale * corrected_cost_loss(problem.loss, &s.alpha, &s.rho, t[p], y);
            r[p] = scale * corrected_cost_grad(problem.loss, &s.alpha, &s.rho, t[p], y);
        }
        let obj = risk + problem.lambda * t.dot(&c);
        if !obj.is_finite() {
            return Err(Error::Diverged { step });
        }
        trace.push(obj);
        if step == config.iterations {
            break;
        }
        let inner = r + &c * (2.0 * problem.lambda);
        let grad = &g * inner;
        let lr = config.learning_rate / (1.0 + config.decay * step as f64);
        c -= grad * lr;
    }

    let model = KernelModel::new(anchors, c, problem.kernel)?;
    Ok(TrainedModel { model, trace })
}

/// The convexity certificate for pooled bag-pair objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityCertificate {
    /// The sign test: nonnegative `lhs` certifies convexity in the decision
    /// value (and, for losses with strictly positive curvature, negativity
    /// refutes it).
    pub convex: bool,
    pub lhs: f64,
    /// All proportions straddle 1/2 (sufficient condition a).
    pub case_a: bool,
    /// All sources have equally many +1 and -1 pseudo-labels (sufficient
    /// condition b).
    pub case_b: bool,
}

/// Evaluates
/// `sum_i w_i / (n_i (gamma_i+ - gamma_i-)) [n_i+ (1/2 - gamma_i-) + n_i- (gamma_i+ - 1/2)]`
/// over the problem's sources. Every source must carry its proportion pair.
pub fn convexity_certificate(problem: &TrainingProblem) -> Result<ConvexityCertificate> {
    if !check_second_order_condition(problem.loss) {
        return Err(Error::Precondition(
            "loss does not satisfy the matched-curvature condition".into(),
        ));
    }
    let mut lhs = 0.0;
    let mut case_a = true;
    let mut case_b = true;
    for (i, s) in problem.sources.iter().enumerate() {
        let gamma = s.gamma.ok_or(Error::MissingSourceField {
            index: i,
            setting: "llp convexity certificate",
            missing: "gamma",
        })?;
        let n = s.labels.len() as f64;
        let n_pos = s.labels.iter().filter(|&&y| y == 1).count() as f64;
        let n_neg = n - n_pos;
        lhs += s.weight / (n * gamma.gap())
            * (n_pos * (0.5 - gamma.minus()) + n_neg * (gamma.plus() - 0.5));
        case_a &= gamma.minus() <= 0.5 && gamma.plus() >= 0.5;
        case_b &= n_pos == n_neg;
    }
    Ok(ConvexityCertificate {
        convex: lhs >= 0.0,
        lhs,
        case_a,
        case_b,
    })
}

/// Writes a model (with its regularization strength) as a flat CSV-like
/// file: floats carry 17 significant digits, so reading back is exact.
pub fn save_model(path: &Path, model: &KernelModel, lambda: f64) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "bandwidth,{}", fmt_g17(model.kernel().bandwidth()))?;
    writeln!(out, "lambda,{}", fmt_g17(lambda))?;
    let anchors = model.anchors();
    let coef = model.coefficients();
    for i in 0..anchors.nrows() {
        write!(out, "anchor")?;
        for c in 0..anchors.ncols() {
            write!(out, ",{}", fmt_g17(anchors[(i, c)]))?;
        }
        writeln!(out, ",{}", fmt_g17(coef[i]))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<(KernelModel, f64)> {
    let display = path.display().to_string();
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut bandwidth = None;
    let mut lambda = None;
    let mut anchor_rows: Vec<Vec<f64>> = Vec::new();
    let mut coefs: Vec<f64> = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |s: &str, col: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                row: lineno + 1,
                column: col.to_string(),
                reason: format!("'{s}' is not numeric"),
            })
        };
        match fields[0] {
            "bandwidth" => bandwidth = Some(parse(fields[1], "bandwidth")?),
            "lambda" => lambda = Some(parse(fields[1], "lambda")?),
            "anchor" => {
                let mut row = Vec::with_capacity(fields.len() - 2);
                for f in &fields[1..fields.len() - 1] {
                    row.push(parse(f, "anchor")?);
                }
                coefs.push(parse(fields[fields.len() - 1], "coefficient")?);
                anchor_rows.push(row);
            }
            other => {
                return Err(Error::InvalidData {
                    path: display,
                    reason: format!("unknown record kind '{other}'"),
                })
            }
        }
    }
    let bandwidth = bandwidth.ok_or_else(|| Error::InvalidData {
        path: display.clone(),
        reason: "missing bandwidth record".into(),
    })?;
    let lambda = lambda.ok_or_else(|| Error::InvalidData {
        path: display.clone(),
        reason: "missing lambda record".into(),
    })?;
    if anchor_rows.is_empty() {
        return Err(Error::InvalidData {
            path: display,
            reason: "no anchor records".into(),
        });
    }
    let dim = anchor_rows[0].len();
    let flat: Vec<f64> = anchor_rows.iter().flatten().copied().collect();
    let anchors = DMatrix::from_row_slice(anchor_rows.len(), dim, &flat);
    let model = KernelModel::new(anchors, DVector::from_vec(coefs), KernelSpec::gaussian(bandwidth)?)?;
    Ok((model, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llp::Bag;
    use crate::weighting::{optimal_weights, snr_coefficient, Setting, SourceStats};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kern(b: f64) -> KernelSpec {
        KernelSpec::gaussian(b).unwrap()
    }

    fn random_source(
        rng: &mut ChaCha8Rng,
        n: usize,
        dim: usize,
        weight: f64,
        gamma: Option<GammaPair>,
    ) -> SourceSample {
        let features = DMatrix::from_fn(n, dim, |_, _| rng.gen_range(-2.0..2.0));
        let labels: Vec<Label> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        let (rho, alpha) = if let Some(g) = gamma {
            let d = crate::llp::derive(&g);
            (d.rho, d.alpha)
        } else {
            let rp = rng.gen_range(0.0..0.4);
            let rm = rng.gen_range(0.0..(0.9 - rp));
            (
                NoiseRates::new(rp, rm).unwrap(),
                CostPair::new(rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0)).unwrap(),
            )
        };
        SourceSample {
            features,
            labels,
            rho,
            alpha,
            weight,
            gamma,
        }
    }

    /// Two equal-size bag pairs that straddle 1/2 (certificate case a).
    fn straddling_problem(lambda: f64, kernel_bw: f64, seed_val: u64) -> TrainingProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_val);
        let mut make_pair = |gp: f64, gm: f64, m: usize| {
            let pos = Bag::new(DMatrix::from_fn(m, 2, |_, _| rng.gen_range(-2.0..2.0)), gp)
                .unwrap();
            let neg = Bag::new(DMatrix::from_fn(m, 2, |_, _| rng.gen_range(-2.0..2.0)), gm)
                .unwrap();
            BagPair::new(pos, neg).unwrap()
        };
        let pairs = vec![make_pair(0.8, 0.2, 6), make_pair(0.7, 0.4, 6)];
        let coeffs: Vec<f64> = pairs
            .iter()
            .map(|p| {
                snr_coefficient(
                    &SourceStats::llp(p.n(), p.gamma_pair().unwrap()),
                    Setting::Llp,
                )
                .unwrap()
            })
            .collect();
        let weights = optimal_weights(&coeffs).unwrap();
        TrainingProblem::from_bag_pairs(
            MarginLoss::Logistic,
            &pairs,
            &weights,
            kern(kernel_bw),
            lambda,
        )
        .unwrap()
    }

    #[test]
    fn zero_model_objective_is_phi_zero_for_equal_bags() {
        let problem = straddling_problem(0.4, 0.8, 1);
        let zero = problem.zero_model();
        // equal-size bags make the per-source zero value collapse to phi(0)
        assert_relative_eq!(
            objective(&problem, &zero).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            corrected_empirical_risk(&problem, &zero).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            pooled_scalar_risk(&problem, 0.0),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn clean_single_source_is_ordinary_erm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let features = DMatrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels = vec![1, -1, 1, 1, -1];
        let problem = TrainingProblem::new(
            MarginLoss::Logistic,
            vec![SourceSample {
                features: features.clone(),
                labels: labels.clone(),
                rho: NoiseRates::noiseless(),
                alpha: CostPair::unit(),
                weight: 1.0,
                gamma: None,
            }],
            kern(1.0),
            0.25,
        )
        .unwrap();
        let mut model = problem.zero_model();
        let coef = DVector::from_fn(5, |_, _| rng.gen_range(-0.5..0.5));
        model.set_coefficients(coef).unwrap();

        // independent summation oracle
        let mut oracle = 0.0;
        for j in 0..5 {
            let row: Vec<f64> = features.row(j).iter().copied().collect();
            let f = model.evaluate(&row).unwrap();
            oracle += MarginLoss::Logistic.eval(f, labels[j]) / 5.0;
        }
        oracle += 0.25 * model.rkhs_norm_sq();
        assert_relative_eq!(objective(&problem, &model).unwrap(), oracle, epsilon = 1e-12);

        // lambda = 0: risk equals objective
        let free = TrainingProblem { lambda: 0.0, ..problem.clone() };
        assert_relative_eq!(
            objective(&free, &model).unwrap(),
            corrected_empirical_risk(&free, &model).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn multi_source_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sources = vec![
            random_source(&mut rng, 3, 2, 0.5, None),
            random_source(&mut rng, 4, 2, 0.3, None),
            random_source(&mut rng, 2, 2, 0.2, None),
        ];
        let problem = TrainingProblem::new(MarginLoss::Logistic, sources, kern(0.5), 0.1).unwrap();
        let mut model = problem.zero_model();
        model
            .set_coefficients(DVector::from_fn(9, |_, _| rng.gen_range(-0.7..0.7)))
            .unwrap();
        let mut oracle = 0.0;
        for s in &problem.sources {
            let n = s.labels.len() as f64;
            for j in 0..s.labels.len() {
                let row: Vec<f64> = s.features.row(j).iter().copied().collect();
                let f = model.evaluate(&row).unwrap();
                oracle += s.weight / n
                    * corrected_cost_loss(problem.loss, &s.alpha, &s.rho, f, s.labels[j]);
            }
        }
        oracle += problem.lambda * model.rkhs_norm_sq();
        assert_relative_eq!(objective(&problem, &model).unwrap(), oracle, epsilon = 1e-12);
    }

    #[test]
    fn anchor_mismatch_rejected() {
        let problem = straddling_problem(0.1, 1.0, 4);
        let other = KernelModel::new(
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            DVector::zeros(1),
            kern(1.0),
        )
        .unwrap();
        assert!(objective(&problem, &other).is_err());
        assert!(gradient(&problem, &other).is_err());
        // the CV criterion has no representer requirement
        assert!(corrected_empirical_risk(&problem, &other).is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let n1 = rng.gen_range(2..18);
            let n2 = rng.gen_range(2..18);
            let w = rng.gen_range(0.2..0.8);
            let gamma = if trial % 2 == 0 {
                Some(GammaPair::new(0.9, 0.3).unwrap())
            } else {
                None
            };
            let sources = vec![
                random_source(&mut rng, n1, 2, w, gamma),
                random_source(&mut rng, n2, 2, 1.0 - w, None),
            ];
            let lambda = rng.gen_range(0.0..0.5);
            let problem =
                TrainingProblem::new(MarginLoss::Logistic, sources, kern(0.9), lambda).unwrap();
            let n = problem.total_n();
            let mut model = problem.zero_model();
            model
                .set_coefficients(DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5)))
                .unwrap();
            let grad = gradient(&problem, &model).unwrap();
            let h = 1e-6;
            for q in 0..n {
                let mut up = model.clone();
                let mut cu = up.coefficients().clone();
                cu[q] += h;
                up.set_coefficients(cu).unwrap();
                let mut dn = model.clone();
                let mut cd = dn.coefficients().clone();
                cd[q] -= h;
                dn.set_coefficients(cd).unwrap();
                let fd = (objective(&problem, &up).unwrap() - objective(&problem, &dn).unwrap())
                    / (2.0 * h);
                let scale = grad[q].abs().max(fd.abs()).max(1e-4);
                assert!(
                    (grad[q] - fd).abs() / scale < 1e-5,
                    "trial {trial} coef {q}: grad {} vs fd {fd}",
                    grad[q]
                );
            }
        }
    }

    #[test]
    fn training_decreases_objective_and_is_deterministic() {
        let problem = straddling_problem(0.01, 0.8, 8);
        let config = TrainConfig::new(0.01, 0.0, 100, 3).unwrap();
        let run = train(&problem, &config).unwrap();
        assert_eq!(run.trace.len(), 101);
        for w in run.trace.windows(2) {
            assert!(w[1] < w[0], "objective must strictly decrease: {w:?}");
        }
        let again = train(&problem, &config).unwrap();
        assert_eq!(run.model.coefficients(), again.model.coefficients());
        assert_eq!(run.trace, again.trace);
    }

    #[test]
    fn two_inits_reach_same_objective_on_certified_problem() {
        let problem = straddling_problem(0.05, 0.8, 9);
        assert!(convexity_certificate(&problem).unwrap().convex);
        let a = train(&problem, &TrainConfig::new(0.5, 0.001, 4000, 1).unwrap()).unwrap();
        let b = train(
            &problem,
            &TrainConfig::new(0.5, 0.001, 4000, 2)
                .unwrap()
                .with_init(Init::Gaussian { scale: 0.3 }),
        )
        .unwrap();
        assert!(
            (a.final_objective() - b.final_objective()).abs() < 1e-4,
            "{} vs {}",
            a.final_objective(),
            b.final_objective()
        );
    }

    #[test]
    fn heavy_regularization_pins_to_zero() {
        let problem = straddling_problem(500.0, 0.8, 10);
        let run = train(&problem, &TrainConfig::new(0.001, 0.0, 300, 1).unwrap()).unwrap();
        let norm = run.model.rkhs_norm_sq().sqrt();
        assert!(norm < 1e-3, "norm {norm}");
        assert_relative_eq!(
            run.final_objective(),
            pooled_scalar_risk(&problem, 0.0),
            epsilon = 1e-3
        );
    }

    #[test]
    fn divergence_is_reported() {
        let problem = TrainingProblem {
            loss: MarginLoss::Squared,
            ..straddling_problem(0.0, 0.8, 11)
        };
        let err = train(&problem, &TrainConfig::new(1e12, 0.0, 400, 1).unwrap()).unwrap_err();
        match err {
            Error::Diverged { step } => assert!(step > 0),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn certificate_hand_case() {
        // single all-positive source with proportions (0.9, 0.6)
        let gamma = GammaPair::new(0.9, 0.6).unwrap();
        let d = crate::llp::derive(&gamma);
        let features = DMatrix::from_fn(10, 1, |r, _| r as f64 / 10.0);
        let problem = TrainingProblem::new(
            MarginLoss::Logistic,
            vec![SourceSample {
                features,
                labels: vec![1; 10],
                rho: d.rho,
                alpha: d.alpha,
                weight: 1.0,
                gamma: Some(gamma),
            }],
            kern(1.0),
            0.0,
        )
        .unwrap();
        let cert = convexity_certificate(&problem).unwrap();
        assert!(!cert.convex);
        assert_relative_eq!(cert.lhs, -1.0 / 3.0, epsilon = 1e-12);
        assert!(!cert.case_a);
        assert!(!cert.case_b);

        // logistic curvature is strictly positive, so the pooled risk must
        // show a negative second difference somewhere
        let h = 0.05;
        let mut found = false;
        for i in 0..=200 {
            let t = -5.0 + h * i as f64;
            let second = pooled_scalar_risk(&problem, t - h) - 2.0 * pooled_scalar_risk(&problem, t)
                + pooled_scalar_risk(&problem, t + h);
            if second < -1e-12 {
                found = true;
                break;
            }
        }
        assert!(found, "no non-convex point detected");
    }

    #[test]
    fn certificate_sufficient_cases() {
        // case (a): proportions straddle 1/2
        let problem = straddling_problem(0.1, 1.0, 12);
        let cert = convexity_certificate(&problem).unwrap();
        assert!(cert.convex && cert.case_a);

        // case (b): equal pseudo-label counts with proportions on one side
        let gamma = GammaPair::new(0.45, 0.15).unwrap();
        let d = crate::llp::derive(&gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let features = DMatrix::from_fn(8, 1, |_, _| rng.gen_range(-1.0..1.0));
        let labels = vec![1, 1, 1, 1, -1, -1, -1, -1];
        let problem = TrainingProblem::new(
            MarginLoss::Logistic,
            vec![SourceSample {
                features,
                labels,
                rho: d.rho,
                alpha: d.alpha,
                weight: 1.0,
                gamma: Some(gamma),
            }],
            kern(1.0),
            0.0,
        )
        .unwrap();
        let cert = convexity_certificate(&problem).unwrap();
        assert!(cert.convex, "lhs = {}", cert.lhs);
        assert!(!cert.case_a);
        assert!(cert.case_b);
        assert!(cert.lhs >= 0.0);
    }

    #[test]
    fn hessian_psd_on_certified_case_a_problem() {
        let problem = straddling_problem(0.05, 0.9, 14);
        assert!(convexity_certificate(&problem).unwrap().case_a);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut model = problem.zero_model();
        model
            .set_coefficients(DVector::from_fn(problem.total_n(), |_, _| {
                rng.gen_range(-0.5..0.5)
            }))
            .unwrap();
        let h = hessian(&problem, &model).unwrap();
        let eig = h.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= -1e-8 * max.abs(), "min {min} max {max}");
    }

    #[test]
    fn norm_bound_after_monotone_training() {
        let problem = straddling_problem(0.1, 0.8, 16);
        let run = train(&problem, &TrainConfig::new(0.2, 0.001, 500, 1).unwrap()).unwrap();
        assert!(run.monotone());
        let phi0 = problem.loss.value_at_zero();
        let bound = phi0 / problem.lambda;
        assert!(
            run.model.rkhs_norm_sq() <= bound + 1e-9,
            "norm^2 {} > {bound}",
            run.model.rkhs_norm_sq()
        );
    }

    #[test]
    fn model_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.csv");
        let problem = straddling_problem(0.02, 1.3, 17);
        let run = train(&problem, &TrainConfig::new(0.1, 0.01, 50, 1).unwrap()).unwrap();
        save_model(&path, &run.model, problem.lambda).unwrap();
        let (loaded, lambda) = load_model(&path).unwrap();
        assert_eq!(lambda, problem.lambda);
        assert_eq!(loaded.anchors(), run.model.anchors());
        assert_eq!(loaded.coefficients(), run.model.coefficients());
        assert_eq!(loaded.kernel(), run.model.kernel());
    }
}
