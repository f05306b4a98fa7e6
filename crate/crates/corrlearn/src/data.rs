//! Dataset ingestion, binarization, splitting, bag construction, noise
//! injection, and synthetic Gaussian benchmarks.

use std::path::Path;

use nalgebra::DMatrix;
use rand::distributions::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::llp::{Bag, ClassSampler};
use crate::loss::{Label, NoiseRates};
use crate::seed;

/// A feature matrix with optional +-1 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Option<Vec<Label>>,
    /// Original class values and how they were mapped to +-1.
    pub class_names: Option<ClassMapping>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMapping {
    pub positive: String,
    pub negatives: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Fraction of +1 labels; errors when no labels are present.
    pub fn class_prior(&self) -> Result<f64> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::InvalidData {
            path: "<dataset>".into(),
            reason: "dataset has no labels".into(),
        })?;
        let pos = labels.iter().filter(|&&y| y == 1).count();
        Ok(pos as f64 / labels.len() as f64)
    }

    fn take_rows(&self, idx: &[usize]) -> Dataset {
        let mut features = DMatrix::zeros(idx.len(), self.dim());
        for (r, &i) in idx.iter().enumerate() {
            features.set_row(r, &self.features.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Dataset {
            features,
            labels,
            class_names: self.class_names.clone(),
        }
    }
}

/// Loads a CSV with a header row: the `label_column` is compared against
/// `positive_class` (exact string match) to produce +-1 labels; every other
/// column must be numeric.
pub fn load_csv(path: &Path, label_column: &str, positive_class: &str) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::InvalidData {
            path: display.clone(),
            reason: format!("no column named '{label_column}' in header"),
        })?;
    let feature_names: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut negatives: Vec<String> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(feature_names.len());
        for (col, name) in &feature_names {
            let cell = record.get(*col).unwrap_or("");
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: display.clone(),
                // header is row 0, first data row is 1
                row: row_idx + 1,
                column: name.clone(),
                reason: format!("'{cell}' is not numeric"),
            })?;
            row.push(value);
        }
        let class = record.get(label_idx).unwrap_or("").to_string();
        if class == positive_class {
            labels.push(1);
        } else {
            labels.push(-1);
            if !negatives.contains(&class) {
                negatives.push(class);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData {
            path: display,
            reason: "file contains no data rows".into(),
        });
    }
    let dim = feature_names.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Dataset {
        features: DMatrix::from_row_slice(labels.len(), dim, &flat),
        labels: Some(labels),
        class_names: Some(ClassMapping {
            positive: positive_class.to_string(),
            negatives,
        }),
    })
}

/// Uniform random split without replacement; the training side gets
/// `ceil(train_fraction * n)` rows.
pub fn split(dataset: &Dataset, train_fraction: f64, seed_value: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.n();
    let n_train = (train_fraction * n as f64).ceil() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidConfig(format!(
            "split of {n} rows at fraction {train_fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed_value);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let train = dataset.take_rows(&idx[..n_train]);
    let test = dataset.take_rows(&idx[n_train..]);
    Ok((train, test))
}

/// Splits labeled training data into bags of a fixed size: random
/// permutation, consecutive chunks, final partial chunk dropped. Bag gammas
/// come from the hidden labels, which stay inside the bags for evaluation
/// only.
pub fn make_bags(train: &Dataset, bag_size: usize, seed_value: u64) -> Result<Vec<Bag>> {
    let labels = train.labels.as_ref().ok_or_else(|| Error::InvalidData {
        path: "<dataset>".into(),
        reason: "bag construction needs labels".into(),
    })?;
    let n = train.n();
    if bag_size == 0 {
        return Err(Error::InvalidConfig("bag size must be positive".into()));
    }
    if bag_size > n {
        return Err(Error::InvalidConfig(format!(
            "bag size {bag_size} exceeds {n} training rows"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed_value);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut bags = Vec::with_capacity(n / bag_size);
    for chunk in idx.chunks_exact(bag_size) {
        let mut features = DMatrix::zeros(bag_size, train.dim());
        let mut bag_labels = Vec::with_capacity(bag_size);
        for (r, &i) in chunk.iter().enumerate() {
            features.set_row(r, &train.features.row(i));
            bag_labels.push(labels[i]);
        }
        bags.push(Bag::with_labels(features, bag_labels)?);
    }
    Ok(bags)
}

/// Flips each +1 label with probability `rho+` and each -1 with `rho-`,
/// independently. Returns the corrupted dataset and the flip mask.
pub fn inject_noise(
    train: &Dataset,
    rho: &NoiseRates,
    seed_value: u64,
) -> Result<(Dataset, Vec<bool>)> {
    let labels = train.labels.as_ref().ok_or_else(|| Error::InvalidData {
        path: "<dataset>".into(),
        reason: "noise injection needs labels".into(),
    })?;
    let mut rng = seed::rng(seed_value);
    let mut flipped = Vec::with_capacity(labels.len());
    let noisy: Vec<Label> = labels
        .iter()
        .map(|&y| {
            let flip = rng.gen_bool(rho.flip_probability(y));
            flipped.push(flip);
            if flip {
                -y
            } else {
                y
            }
        })
        .collect();
    Ok((
        Dataset {
            features: train.features.clone(),
            labels: Some(noisy),
            class_names: train.class_names.clone(),
        },
        flipped,
    ))
}

/// An isotropic Gaussian class-conditional distribution.
#[derive(Clone, Debug)]
pub struct GaussianClass {
    mean: Vec<f64>,
}

impl GaussianClass {
    /// Unit-covariance Gaussian with mean `shift * e_1`.
    pub fn standard(dim: usize, shift: f64) -> Self {
        let mut mean = vec![0.0; dim];
        if dim > 0 {
            mean[0] = shift;
        }
        GaussianClass { mean }
    }

    pub fn with_mean(mean: Vec<f64>) -> Self {
        GaussianClass { mean }
    }
}

impl ClassSampler for GaussianClass {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        self.mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + z
            })
            .collect()
    }
}

/// The two class-conditionals of [`synth_gaussians`]:
/// `P+ = N(+s e_1, I)` and `P- = N(-s e_1, I)` with `s = separation / 2`.
pub fn synth_class_conditionals(dim: usize, mean_separation: f64) -> (GaussianClass, GaussianClass) {
    let s = mean_separation / 2.0;
    (
        GaussianClass::standard(dim, s),
        GaussianClass::standard(dim, -s),
    )
}

/// Balanced two-Gaussian benchmark: `n_per_class` labeled draws from each
/// class-conditional of [`synth_class_conditionals`].
pub fn synth_gaussians(
    dim: usize,
    mean_separation: f64,
    n_per_class: usize,
    seed_value: u64,
) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be at least 1".into()));
    }
    if mean_separation < 0.0 {
        return Err(Error::InvalidConfig("separation must be nonnegative".into()));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("need at least one point per class".into()));
    }
    let (p_plus, p_minus) = synth_class_conditionals(dim, mean_separation);
    let mut rng = seed::rng(seed_value);
    let n = 2 * n_per_class;
    let mut features = DMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        // interleave so prefixes stay balanced
        let (row, y) = if i % 2 == 0 {
            (p_plus.draw(&mut rng), 1)
        } else {
            (p_minus.draw(&mut rng), -1)
        };
        for (c, v) in row.into_iter().enumerate() {
            features[(i, c)] = v;
        }
        labels.push(y);
    }
    Ok(Dataset {
        features,
        labels: Some(labels),
        class_names: None,
    })
}

/// Bayes-optimal balanced error rate of the two-Gaussian benchmark:
/// `Phi(-separation / 2)`.
pub fn synth_bayes_ber(mean_separation: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.cdf(-mean_separation / 2.0)
}

/// Per-column standardization parameters fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    /// Fits means and standard deviations on the rows of `train`.
    /// Zero-variance columns pass through unscaled.
    pub fn fit(train: &Dataset) -> Self {
        let n = train.n() as f64;
        let d = train.dim();
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for c in 0..d {
            let col = train.features.column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            means[c] = mean;
            stds[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer { means, stds }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut features = data.features.clone();
        for c in 0..features.ncols() {
            for r in 0..features.nrows() {
                features[(r, c)] = (features[(r, c)] - self.means[c]) / self.stds[c];
            }
        }
        Dataset {
            features,
            labels: data.labels.clone(),
            class_names: data.class_names.clone(),
        }
    }
}
