//! Timing of supervised prediction against training-set size.
//!
//! Prediction for one test point costs one kernel evaluation per training
//! point, so time per point should grow linearly in N.

use std::hint::black_box;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::classify::{activations_unchecked, softmax, ClassModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::rng::substream;

pub const DEFAULT_SIZES: [usize; 4] = [1000, 2000, 4000, 8000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchPoint {
    pub train_size: usize,
    pub seconds_per_point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log time against log N.
    pub exponent: f64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
    pub test_points: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: DEFAULT_SIZES.to_vec(),
            dim: 2,
            num_classes: 2,
            test_points: 200,
            repeats: 5,
            seed: 0,
        }
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("slope needs at least two matching points"));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("log-log slope needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all sizes are equal"));
    }
    Ok(sxy / sxx)
}

fn uniform_points(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Single-threaded prediction time per test point for each training size,
/// taking the fastest of `repeats` runs.
pub fn bench_prediction(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.sizes.len() < 2 || cfg.sizes.contains(&0) {
        return Err(Error::invalid("need at least two non-zero training sizes"));
    }
    if cfg.test_points == 0 || cfg.repeats == 0 || cfg.dim == 0 || cfg.num_classes < 2 {
        return Err(Error::invalid("bench needs test points, repeats, dimensions and two classes"));
    }
    let mut rng = substream(cfg.seed, "bench");
    let models = ClassModel::shared(Kernel::squared_exponential(1.0, 0.2)?, cfg.num_classes);
    let test = uniform_points(&mut rng, cfg.test_points, cfg.dim);

    let mut points = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let cov = uniform_points(&mut rng, n, cfg.dim);
        let lab = (0..n).map(|_| rng.random_range(0..cfg.num_classes)).collect();
        let train = Dataset::labeled(cov, lab, cfg.num_classes)?;
        let mut best = f64::INFINITY;
        for _ in 0..cfg.repeats {
            let start = Instant::now();
            for x in &test {
                let f = activations_unchecked(&models, &train, black_box(x));
                black_box(softmax(&f));
            }
            best = best.min(start.elapsed().as_secs_f64());
        }
        points.push(BenchPoint {
            train_size: n,
            seconds_per_point: best / cfg.test_points as f64,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.train_size as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds_per_point.max(1e-12)).collect();
    let exponent = loglog_slope(&xs, &ys)?;
    Ok(BenchReport { points, exponent })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(loglog_slope(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn small_bench_runs() {
        let cfg = BenchConfig {
            sizes: vec![50, 100],
            test_points: 10,
            repeats: 1,
            ..BenchConfig::default()
        };
        let r = bench_prediction(&cfg).unwrap();
        assert_eq!(r.points.len(), 2);
        assert!(r.exponent.is_finite());
    }
}
