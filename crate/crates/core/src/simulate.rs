//! Generative side of the model: gridded Gaussian process fields, Poisson
//! sampling from a piecewise-constant intensity, independent thinning and the
//! closed-form LGCP product density.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::classify::ClassModel;
use crate::error::{Error, Result};
use crate::kernels::{check_points, Kernel};
use crate::rng::substream;

/// Largest grid the dense Cholesky sampler accepts.
pub const MAX_GRID_CELLS: usize = 10_000;

/// An axis-aligned box split into `resolution` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: usize,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("window corners must be non-empty and of equal dimension"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && u > l))
        {
            return Err(Error::invalid("window upper corner must exceed lower componentwise"));
        }
        if resolution == 0 {
            return Err(Error::invalid("grid resolution must be at least 1"));
        }
        Ok(Window {
            lower,
            upper,
            resolution,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn num_cells(&self) -> usize {
        self.resolution.saturating_pow(self.dim() as u32)
    }

    pub fn cell_widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / self.resolution as f64)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_widths().iter().product()
    }

    /// Cell centres, first axis varying slowest.
    pub fn cell_centers(&self) -> Vec<Vec<f64>> {
        let widths = self.cell_widths();
        let d = self.dim();
        let mut centers = Vec::with_capacity(self.num_cells());
        let mut idx = vec![0usize; d];
        for _ in 0..self.num_cells() {
            centers.push(
                (0..d)
                    .map(|a| self.lower[a] + (idx[a] as f64 + 0.5) * widths[a])
                    .collect(),
            );
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < self.resolution {
                    break;
                }
                idx[a] = 0;
            }
        }
        centers
    }
}

/// A piecewise-constant intensity over the cells of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    window: Window,
    centers: Vec<Vec<f64>>,
    intensity: Vec<f64>,
}

impl IntensityField {
    pub fn new(window: Window, intensity: Vec<f64>) -> Result<Self> {
        if intensity.len() != window.num_cells() {
            return Err(Error::invalid(format!(
                "{} intensity values for {} cells",
                intensity.len(),
                window.num_cells()
            )));
        }
        if intensity.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("intensities must be finite and non-negative"));
        }
        let centers = window.cell_centers();
        Ok(IntensityField {
            window,
            centers,
            intensity,
        })
    }

    pub fn constant(window: Window, value: f64) -> Result<Self> {
        let n = window.num_cells();
        Self::new(window, vec![value; n])
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn cell_volume(&self) -> f64 {
        self.window.cell_volume()
    }

    /// Intensity measure of the whole window.
    pub fn total_mass(&self) -> f64 {
        self.intensity.iter().sum::<f64>() * self.cell_volume()
    }
}

/// Draws of a Gaussian process at fixed locations, factorised once.
#[derive(Debug, Clone)]
pub struct GpSampler {
    mean: f64,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl GpSampler {
    /// Factorises the Gram matrix at `points`, adding diagonal jitter starting
    /// at `1e-10 * s2` and growing tenfold up to `1e-4 * s2` if needed.
    pub fn new(mean: f64, kernel: &Kernel, points: &[Vec<f64>]) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid("GP mean must be finite"));
        }
        if points.is_empty() {
            return Err(Error::invalid("no sample locations"));
        }
        if points.len() > MAX_GRID_CELLS {
            return Err(Error::invalid(format!(
                "{} locations exceeds the dense sampler limit of {MAX_GRID_CELLS}; reduce the grid",
                points.len()
            )));
        }
        let gram = kernel.gram(points)?;
        let s2 = kernel.signal_variance();
        let mut jitter = 1e-10 * s2;
        loop {
            let mut m = gram.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            if let Some(ch) = Cholesky::new(m) {
                return Ok(GpSampler {
                    mean,
                    factor: ch.unpack(),
                    jitter,
                });
            }
            if jitter >= 1e-4 * s2 * (1.0 - 1e-9) {
                return Err(Error::Factorization { jitter });
            }
            jitter *= 10.0;
        }
    }

    /// Diagonal jitter that made the factorisation succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.factor.nrows();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let f = &self.factor * z;
        f.iter().map(|v| v + self.mean).collect()
    }
}

/// Samples `f ~ GP(mean, kernel)` at the cell centres and returns `exp(f)`.
pub fn sample_gp_field(mean: f64, kernel: &Kernel, window: &Window, seed: u64) -> Result<IntensityField> {
    let centers = window.cell_centers();
    let sampler = GpSampler::new(mean, kernel, &centers)?;
    let mut rng = substream(seed, "simulate/gp");
    let log_field = sampler.sample(&mut rng);
    IntensityField::new(window.clone(), log_field.into_iter().map(f64::exp).collect())
}

/// Poisson process sample: per cell a Poisson(rho * volume) count, placed
/// uniformly within the cell.
pub fn sample_poisson_points(field: &IntensityField, seed: u64) -> Vec<Vec<f64>> {
    let mut counts_rng = substream(seed, "simulate/counts");
    let mut place_rng = substream(seed, "simulate/placement");
    let widths = field.window.cell_widths();
    let volume = field.cell_volume();
    let mut points = Vec::new();
    for (center, &rho) in field.centers.iter().zip(&field.intensity) {
        let rate = rho * volume;
        if rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(rate)
            .expect("positive finite rate")
            .sample(&mut counts_rng) as u64;
        for _ in 0..count {
            points.push(
                center
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| c + w * (place_rng.random::<f64>() - 0.5))
                    .collect(),
            );
        }
    }
    points
}

/// Keeps each point independently with probability `gamma`.
pub fn thin(points: &[Vec<f64>], gamma: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("thinning probability {gamma} outside [0, 1]")));
    }
    let mut rng = substream(seed, "simulate/thin");
    Ok(points
        .iter()
        .filter(|_| rng.random_bool(gamma))
        .cloned()
        .collect())
}

/// Log of the K-th product density of an LGCP:
/// `K * mu + 1/2 * sum_{j,k} C(x_j - x_k)`, the double sum including `j = k`.
pub fn log_product_density(model: &ClassModel, points: &[Vec<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("product density needs at least one point"));
    }
    check_points(points)?;
    Ok(log_product_density_unchecked(model, points.iter().map(Vec::as_slice)))
}

pub(crate) fn log_product_density_unchecked<'a>(
    model: &ClassModel,
    points: impl Iterator<Item = &'a [f64]> + Clone,
) -> f64 {
    let mut k = 0usize;
    let mut pair_sum = 0.0;
    for (j, a) in points.clone().enumerate() {
        k += 1;
        pair_sum += 0.5 * model.kernel.at_zero();
        for b in points.clone().take(j) {
            pair_sum += model.kernel.between(a, b);
        }
    }
    k as f64 * model.mean + pair_sum
}
