//! Length-scale selection by cross-validation on the 0-1 loss.
//!
//! Supervised runs use leave-one-out; semi-supervised runs use k-fold
//! transductive CV, where each held-out fold joins the unlabelled pool. All
//! models have zero mean and one shared kernel. Ties in the error go to the
//! larger length scale.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::classify::{predict_label, softmax, ClassModel, PredictiveDistribution};
use crate::data::{zero_one_error, Dataset};
use crate::error::{Error, Result};
use crate::expansion::ssl_solve;
use crate::kernels::Kernel;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridError {
    pub length_scale: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub best_length_scale: f64,
    pub table: Vec<GridError>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("length-scale grid is empty"));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("grid value {v} is not a positive length scale")));
    }
    Ok(())
}

fn select(table: Vec<GridError>) -> CvReport {
    let mut best = table[0];
    for g in &table[1..] {
        if g.error < best.error || (g.error == best.error && g.length_scale > best.length_scale) {
            best = *g;
        }
    }
    CvReport {
        best_length_scale: best.length_scale,
        table,
    }
}

/// Leave-one-out 0-1 error of the supervised classifier for each length
/// scale. Only labelled rows of `train` take part.
pub fn loo_cv(train: &Dataset, template: &Kernel, grid: &[f64]) -> Result<CvReport> {
    check_grid(grid)?;
    let rows: Vec<(&[f64], usize)> = train.labeled_rows().collect();
    if rows.len() < 2 {
        return Err(Error::invalid("leave-one-out needs at least two labelled points"));
    }
    let q = train.num_classes();
    let table = grid
        .par_iter()
        .map(|&ls| {
            let kernel = template.with_length_scale(ls)?;
            let mut wrong = 0usize;
            for (j, &(xj, yj)) in rows.iter().enumerate() {
                let mut f = vec![0.5 * kernel.at_zero(); q];
                for (k, &(xk, yk)) in rows.iter().enumerate() {
                    if k != j {
                        f[yk] += kernel.between(xj, xk);
                    }
                }
                let dist = PredictiveDistribution::new(softmax(&f))
                    .unwrap_or_else(|_| unreachable!("softmax of finite activations"));
                if predict_label(&dist) != yj {
                    wrong += 1;
                }
            }
            Ok(GridError {
                length_scale: ls,
                error: wrong as f64 / rows.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select(table))
}

/// Seeded assignment of `n` items to `k` folds of near-equal size.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "cv/folds"));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// k-fold transductive CV of the semi-supervised solver. Each fold's labels
/// are hidden, the fold joins `unlabeled`, and the recovered labels are
/// scored. The error for a length scale is the mean fold error.
pub fn kfold_cv_ssl(
    labeled: &Dataset,
    unlabeled: &[Vec<f64>],
    k: usize,
    template: &Kernel,
    grid: &[f64],
    seed: u64,
) -> Result<CvReport> {
    check_grid(grid)?;
    let rows: Vec<(&[f64], usize)> = labeled.labeled_rows().collect();
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > rows.len() {
        return Err(Error::invalid(format!(
            "{k} folds but only {} labelled points",
            rows.len()
        )));
    }
    let q = labeled.num_classes();
    let folds = fold_assignment(rows.len(), k, seed);

    let mut splits = Vec::with_capacity(k);
    for f in 0..k {
        let (mut cov, mut lab) = (Vec::new(), Vec::new());
        let mut pool = unlabeled.to_vec();
        let mut truth = Vec::new();
        for (i, &(x, y)) in rows.iter().enumerate() {
            if folds[i] == f {
                pool.push(x.to_vec());
                truth.push(y);
            } else {
                cov.push(x.to_vec());
                lab.push(y);
            }
        }
        splits.push((Dataset::labeled(cov, lab, q)?, pool, truth));
    }

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let errors = jobs
        .par_iter()
        .map(|&(g, f)| {
            let models = ClassModel::shared(template.with_length_scale(grid[g])?, q);
            let (train, pool, truth) = &splits[f];
            let solution = ssl_solve(&models, train, pool)?;
            let held_out = &solution.labeling.as_slice()[unlabeled.len()..];
            Ok(zero_one_error(held_out, truth))
        })
        .collect::<Result<Vec<f64>>>()?;

    let table = grid
        .iter()
        .enumerate()
        .map(|(g, &ls)| GridError {
            length_scale: ls,
            error: errors[g * k..(g + 1) * k].iter().sum::<f64>() / k as f64,
        })
        .collect();
    Ok(select(table))
}

/// Largest number of points used to estimate the median pairwise distance.
const MEDIAN_SAMPLE: usize = 1000;

/// 16 log-spaced length scales over `[0.01, 100]` times the median pairwise
/// distance of `points` (the first 1000 points if there are more).
pub fn default_grid(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let pts = &points[..points.len().min(MEDIAN_SAMPLE)];
    let mut dists = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for k in 1..pts.len() {
        for j in 0..k {
            let d2: f64 = pts[j].iter().zip(&pts[k]).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return Err(Error::invalid("need at least two points for a default grid"));
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[dists.len() / 2];
    if median.is_nan() || median <= 0.0 {
        return Err(Error::Degenerate("median pairwise distance is zero".into()));
    }
    Ok(log_grid(0.01 * median, 100.0 * median, 16))
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// A seeded random subset of `n` labelled rows (all of them if fewer).
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Dataset {
    let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i].is_some()).collect();
    if idx.len() > n {
        idx.shuffle(&mut substream(seed, "cv/subsample"));
        idx.truncate(n);
        idx.sort_unstable();
    }
    data.select(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn se() -> Kernel {
        Kernel::squared_exponential(1.0, 1.0).unwrap()
    }

    fn two_clusters() -> Dataset {
        let mut cov = Vec::new();
        let mut lab = Vec::new();
        for i in 0..6 {
            let t = i as f64 * 0.1;
            cov.push(vec![t, 0.0]);
            lab.push(0);
            cov.push(vec![50.0 + t, 0.0]);
            lab.push(1);
        }
        Dataset::labeled(cov, lab, 2).unwrap()
    }

    #[test]
    fn separated_clusters_have_zero_loo_error() {
        let r = loo_cv(&two_clusters(), &se(), &[0.5]).unwrap();
        assert_eq!(r.table[0].error, 0.0);
        assert_eq!(r.best_length_scale, 0.5);
    }

    #[test]
    fn loo_ties_go_to_larger_length_scale() {
        let r = loo_cv(&two_clusters(), &se(), &[0.3, 1.0, 0.5]).unwrap();
        assert!(r.table.iter().all(|g| g.error == 0.0));
        assert_eq!(r.best_length_scale, 1.0);
    }

    #[test]
    fn conflicting_duplicates_bound_loo_error() {
        // Each location appears twice with different labels; whichever label
        // a held-out copy gets, at least one of the pair can be wrong.
        let mut cov = Vec::new();
        let mut lab = Vec::new();
        for i in 0..5 {
            let x = vec![i as f64 * 10.0];
            cov.push(x.clone());
            lab.push(0);
            cov.push(x);
            lab.push(1);
        }
        let d = Dataset::labeled(cov, lab, 2).unwrap();
        let r = loo_cv(&d, &se(), &[0.5, 2.0]).unwrap();
        for g in &r.table {
            assert!(g.error >= 0.5, "{g:?}");
        }
    }

    #[test]
    fn single_class_has_zero_loo_error() {
        // An isolated point has tied activations at small length scales;
        // the tie goes to class 0, so use class 0.
        let d = Dataset::labeled(vec![vec![0.0], vec![1.0], vec![5.0]], vec![0, 0, 0], 2).unwrap();
        let r = loo_cv(&d, &se(), &[0.1, 1.0, 10.0]).unwrap();
        assert!(r.table.iter().all(|g| g.error == 0.0));
    }

    #[test]
    fn loo_input_errors() {
        assert!(loo_cv(&two_clusters(), &se(), &[]).is_err());
        assert!(loo_cv(&two_clusters(), &se(), &[0.0]).is_err());
        let one = Dataset::labeled(vec![vec![0.0]], vec![0], 2).unwrap();
        assert!(loo_cv(&one, &se(), &[1.0]).is_err());
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = fold_assignment(23, 5, 3);
        let mut sizes = [0; 5];
        for &x in &f {
            sizes[x] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert_eq!(f, fold_assignment(23, 5, 3));
        assert_ne!(f, fold_assignment(23, 5, 4));
    }

    #[test]
    fn kfold_basics() {
        let d = two_clusters();
        let unl = vec![vec![0.25, 0.0], vec![50.25, 0.0]];
        let grid = [0.5, 2.0];
        let r = kfold_cv_ssl(&d, &unl, 4, &se(), &grid, 7).unwrap();
        assert_eq!(r, kfold_cv_ssl(&d, &unl, 4, &se(), &grid, 7).unwrap());
        assert!(r.table.iter().all(|g| (0.0..=1.0).contains(&g.error)));
        assert!(grid.contains(&r.best_length_scale));
        // Leave-one-out variant.
        let loo = kfold_cv_ssl(&d, &unl, d.len(), &se(), &grid, 7).unwrap();
        assert_eq!(loo.table.len(), 2);
        assert!(kfold_cv_ssl(&d, &unl, d.len() + 1, &se(), &grid, 7).is_err());
        assert!(kfold_cv_ssl(&d, &unl, 1, &se(), &grid, 7).is_err());
    }

    #[test]
    fn grid_helpers() {
        let g = log_grid(0.01, 100.0, 5);
        let expected = [0.01, 0.1, 1.0, 10.0, 100.0];
        for (a, b) in g.iter().zip(expected) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        let g = default_grid(&pts).unwrap();
        assert_eq!(g.len(), 16);
        // median of {1, 2, 3} is 2
        assert!((g[0] - 0.02).abs() < 1e-12 && (g[15] - 200.0).abs() < 1e-9);
        assert!(default_grid(&pts[..1]).is_err());
    }

    #[test]
    fn subsample_is_seeded() {
        let d = two_clusters();
        let a = subsample(&d, 5, 1);
        assert_eq!(a.len(), 5);
        assert_eq!(a, subsample(&d, 5, 1));
        assert_eq!(subsample(&d, 100, 1).len(), d.len());
    }
}
