//! Gaussian kernel evaluation, Gram matrices, and representer-form models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gaussian kernel `k(x, x') = exp(-bandwidth * ||x - x'||^2)`.
///
/// Bounded by `K = 1`: `k(x, x) = 1` for every `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KernelSpec { bandwidth })
        } else {
            Err(Error::InvalidConfig(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )))
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Supremum of `sqrt(k(x, x))`.
    pub fn bound(&self) -> f64 {
        1.0
    }

    /// Kernel value between two feature rows.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), z.len());
        let sq: f64 = x
            .iter()
            .zip(z.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (-self.bandwidth * sq).exp()
    }
}

/// Gram matrix between the rows of `x` and the rows of `z`: entry `(i, j)`
/// is `k(x_i, z_j)`.
pub fn gram(x: &DMatrix<f64>, z: &DMatrix<f64>, kernel: &KernelSpec) -> Result<DMatrix<f64>> {
    if x.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "feature dimensions differ: {} vs {}",
            x.ncols(),
            z.ncols()
        )));
    }
    let (n, m) = (x.nrows(), z.nrows());
    let mut g = DMatrix::zeros(n, m);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..m {
            let zj = z.row(j);
            let mut sq = 0.0;
            for c in 0..x.ncols() {
                let d = xi[c] - zj[c];
                sq += d * d;
            }
            g[(i, j)] = (-kernel.bandwidth * sq).exp();
        }
    }
    Ok(g)
}

/// A decision function in representer form:
/// `f(x) = sum_i coefficients[i] * k(x, anchors[i])`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    anchors: DMatrix<f64>,
    coefficients: DVector<f64>,
    kernel: KernelSpec,
}

impl KernelModel {
    pub fn new(
        anchors: DMatrix<f64>,
        coefficients: DVector<f64>,
        kernel: KernelSpec,
    ) -> Result<Self> {
        if anchors.nrows() != coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} anchors but {} coefficients",
                anchors.nrows(),
                coefficients.len()
            )));
        }
        Ok(KernelModel {
            anchors,
            coefficients,
            kernel,
        })
    }

    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn set_coefficients(&mut self, coefficients: DVector<f64>) -> Result<()> {
        if coefficients.len() != self.anchors.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} anchors but {} coefficients",
                self.anchors.nrows(),
                coefficients.len()
            )));
        }
        self.coefficients = coefficients;
        Ok(())
    }

    /// Evaluates the decision function at one point.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.anchors.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "point has dimension {} but anchors have {}",
                x.len(),
                self.anchors.ncols()
            )));
        }
        let mut acc = 0.0;
        for i in 0..self.anchors.nrows() {
            let mut sq = 0.0;
            for c in 0..x.len() {
                let d = x[c] - self.anchors[(i, c)];
                sq += d * d;
            }
            acc += self.coefficients[i] * (-self.kernel.bandwidth * sq).exp();
        }
        Ok(acc)
    }

    /// Evaluates the decision function at every row of `x`.
    pub fn evaluate_rows(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let g = gram(x, &self.anchors, &self.kernel)?;
        Ok(&g * &self.coefficients)
    }

    /// Squared RKHS norm `c^T G c`, clamped to zero when a tiny negative
    /// value arises from rounding.
    pub fn rkhs_norm_sq(&self) -> f64 {
        let g = gram(&self.anchors, &self.anchors, &self.kernel)
            .expect("anchor matrix is self-consistent");
        let v = (&g * &self.coefficients).dot(&self.coefficients);
        if v < 0.0 && v > -1e-9 {
            0.0
        } else {
            v
        }
    }

    /// Rescales coefficients so that the squared RKHS norm equals
    /// `radius^2`. Errors when the current norm is zero.
    pub fn rescale_to_norm(&mut self, radius: f64) -> Result<()> {
        let norm_sq = self.rkhs_norm_sq();
        if norm_sq <= 0.0 {
            return Err(Error::InvalidConfig(
                "cannot rescale a zero-norm model".into(),
            ));
        }
        let s = radius / norm_sq.sqrt();
        self.coefficients *= s;
        Ok(())
    }
}
