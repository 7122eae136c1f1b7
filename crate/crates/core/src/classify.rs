//! Supervised LGCP prediction and the kernel density classifier.
//!
//! For a test point `x*` each class gets an activation
//!
//! ```text
//! F_i = mu_i + C_i(0) / 2 + sum over training points x of class i of C_i(x* - x)
//! ```
//!
//! and the predictive distribution is `softmax(F)`. Cost is `O(N)` kernel
//! evaluations per test point.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{check_points, Kernel};

/// The Gaussian process prior of one class population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassModel {
    pub mean: f64,
    pub kernel: Kernel,
}

impl ClassModel {
    pub fn new(mean: f64, kernel: Kernel) -> Self {
        ClassModel { mean, kernel }
    }

    /// `num_classes` copies with zero mean and one shared kernel.
    pub fn shared(kernel: Kernel, num_classes: usize) -> Vec<ClassModel> {
        vec![ClassModel::new(0.0, kernel); num_classes]
    }

    /// Multiplies mean and covariance by `factor`; acts as an inverse
    /// temperature on the label distribution.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Ok(ClassModel {
            mean: self.mean * factor,
            kernel: self.kernel.scaled(factor)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution(Vec<f64>);

impl PredictiveDistribution {
    /// Wraps probabilities after checking they are non-negative and sum to 1.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {sum}")));
        }
        Ok(PredictiveDistribution(probabilities))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn label(&self) -> usize {
        predict_label(self)
    }
}

/// Softmax with max subtraction.
pub fn softmax(activations: &[f64]) -> Vec<f64> {
    let max = activations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = activations.iter().map(|a| (a - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_inputs(models: &[ClassModel], train: &Dataset, test_point: &[f64]) -> Result<()> {
    if models.len() != train.num_classes() {
        return Err(Error::invalid(format!(
            "{} class models for {} classes",
            models.len(),
            train.num_classes()
        )));
    }
    if !train.is_empty() && test_point.len() != train.dim() {
        return Err(Error::invalid(format!(
            "test point has dimension {}, training data {}",
            test_point.len(),
            train.dim()
        )));
    }
    if test_point.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("test point has non-finite coordinates"));
    }
    Ok(())
}

/// Per-class activations `F`. Unlabelled rows of `train` are ignored and an
/// empty class contributes only `mu_i + C_i(0)/2`.
pub fn activations(models: &[ClassModel], train: &Dataset, test_point: &[f64]) -> Result<Vec<f64>> {
    check_inputs(models, train, test_point)?;
    Ok(activations_unchecked(models, train, test_point))
}

pub(crate) fn activations_unchecked(models: &[ClassModel], train: &Dataset, x: &[f64]) -> Vec<f64> {
    let mut f: Vec<f64> = models.iter().map(|m| m.mean + 0.5 * m.kernel.at_zero()).collect();
    for (xj, y) in train.labeled_rows() {
        f[y] += models[y].kernel.between(x, xj);
    }
    f
}

pub fn predict_proba(
    models: &[ClassModel],
    train: &Dataset,
    test_point: &[f64],
) -> Result<PredictiveDistribution> {
    let f = activations(models, train, test_point)?;
    Ok(PredictiveDistribution(softmax(&f)))
}

/// Predictive distributions for many test points, evaluated in parallel.
pub fn predict_proba_batch(
    models: &[ClassModel],
    train: &Dataset,
    test_points: &[Vec<f64>],
) -> Result<Vec<PredictiveDistribution>> {
    check_points(test_points)?;
    if let Some(x) = test_points.first() {
        check_inputs(models, train, x)?;
    }
    Ok(test_points
        .par_iter()
        .map(|x| PredictiveDistribution(softmax(&activations_unchecked(models, train, x))))
        .collect())
}

/// Kernel density classifier: class densities `beta_i = (1/N_i) sum G(x* - x)`
/// weighted by class counts `N_i`. Empty classes get probability 0.
pub fn kde_predict(kernel: &Kernel, train: &Dataset, test_point: &[f64]) -> Result<PredictiveDistribution> {
    let q = train.num_classes();
    check_inputs(&ClassModel::shared(*kernel, q), train, test_point)?;
    let counts = train.class_counts();
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Degenerate("no labelled training points".into()));
    }
    let mut sums = vec![0.0; q];
    for (xj, y) in train.labeled_rows() {
        sums[y] += kernel.between(test_point, xj);
    }
    let weighted: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { (s / n as f64) * n as f64 })
        .collect();
    let total: f64 = weighted.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate(
            "all class densities vanish at the test point".into(),
        ));
    }
    Ok(PredictiveDistribution(weighted.into_iter().map(|w| w / total).collect()))
}

/// Argmax with ties going to the lowest class index.
pub fn predict_label(dist: &PredictiveDistribution) -> usize {
    let mut best = 0;
    for (i, &p) in dist.0.iter().enumerate().skip(1) {
        if p > dist.0[best] {
            best = i;
        }
    }
    best
}
