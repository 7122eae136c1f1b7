//! Stationary, isotropic covariance functions.
//!
//! The same kernel serves as the covariance of each class's Gaussian process
//! and as the window of the kernel density classifier. Both families are
//! non-negative everywhere, which the graph-cut inference in [`crate::mincut`]
//! relies on.
//!
//! Both families also satisfy the LGCP continuity requirement
//! `1 - C(s)/C(0) < a * |s|^b` for `|s| < 1`: the squared exponential with
//! `b = 2`, `a = 1/(2 l^2)` and the exponential with `b = 1`, `a = 1/l`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `s2 * exp(-|s|^2 / (2 l^2))`
    SquaredExponential,
    /// `s2 * exp(-|s| / l)`
    Exponential,
}

impl KernelFamily {
    /// Every implemented family is non-negative. New families must return
    /// `true` here only if `C(s) >= 0` for all displacements.
    pub fn is_non_negative(self) -> bool {
        match self {
            KernelFamily::SquaredExponential | KernelFamily::Exponential => true,
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" | "squared-exponential" => Ok(KernelFamily::SquaredExponential),
            "exp" | "exponential" => Ok(KernelFamily::Exponential),
            other => Err(Error::invalid(format!("unknown kernel family `{other}`"))),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::SquaredExponential => f.write_str("se"),
            KernelFamily::Exponential => f.write_str("exp"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    family: KernelFamily,
    signal_variance: f64,
    length_scale: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, signal_variance: f64, length_scale: f64) -> Result<Self> {
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(Error::invalid(format!(
                "signal variance must be positive and finite, got {signal_variance}"
            )));
        }
        if !(length_scale.is_finite() && length_scale > 0.0) {
            return Err(Error::invalid(format!(
                "length scale must be positive and finite, got {length_scale}"
            )));
        }
        Ok(Kernel {
            family,
            signal_variance,
            length_scale,
        })
    }

    pub fn squared_exponential(signal_variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, signal_variance, length_scale)
    }

    pub fn exponential(signal_variance: f64, length_scale: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, signal_variance, length_scale)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// `C(0)`.
    pub fn at_zero(&self) -> f64 {
        self.signal_variance
    }

    pub fn with_length_scale(&self, length_scale: f64) -> Result<Self> {
        Self::new(self.family, self.signal_variance, length_scale)
    }

    /// Multiplies the covariance by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.family, self.signal_variance * factor, self.length_scale)
    }

    /// Evaluates `C(s)` at a displacement vector.
    pub fn eval(&self, displacement: &[f64]) -> Result<f64> {
        if displacement.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("displacement has non-finite components"));
        }
        let sq: f64 = displacement.iter().map(|v| v * v).sum();
        Ok(self.eval_sq_dist(sq))
    }

    /// Evaluates `C(a - b)`. The caller guarantees equal dimensions and finite
    /// entries; this is the hot path of every predictor.
    #[inline]
    pub fn between(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.eval_sq_dist(sq)
    }

    /// Evaluates the kernel from a squared Euclidean distance.
    #[inline]
    pub fn eval_sq_dist(&self, sq_dist: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => {
                self.signal_variance
                    * (-sq_dist / (2.0 * self.length_scale * self.length_scale)).exp()
            }
            KernelFamily::Exponential => {
                self.signal_variance * (-sq_dist.sqrt() / self.length_scale).exp()
            }
        }
    }

    /// Gram matrix `K[j][k] = C(x_j - x_k)`.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        check_points(points)?;
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            k[(j, j)] = self.signal_variance;
            for i in 0..j {
                let v = self.between(&points[i], &points[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}

/// Checks that all points share a dimension and are finite; returns the
/// dimension (0 for an empty list).
pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map_or(0, Vec::len);
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::invalid(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("point {i} has non-finite coordinates")));
        }
    }
    Ok(dim)
}
