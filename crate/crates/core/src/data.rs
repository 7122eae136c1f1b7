//! Datasets, CSV ingestion, stratified partitioning and the synthetic
//! demonstration generators.
//!
//! On disk a dataset is a UTF-8 CSV with a header row: covariate columns in
//! order, then an integer label column holding one-based class indices. An
//! empty label cell marks an unlabelled row. Lines starting with `#` are
//! comments. In memory labels are zero-based.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernels::check_points;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Vec<Vec<f64>>,
    labels: Vec<Option<usize>>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        covariates: Vec<Vec<f64>>,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "need at least two classes, got {num_classes}"
            )));
        }
        if covariates.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} covariate rows but {} labels",
                covariates.len(),
                labels.len()
            )));
        }
        check_points(&covariates)?;
        if let Some((i, l)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&l| l >= num_classes).map(|l| (i, l)))
        {
            return Err(Error::invalid(format!(
                "row {i}: label {l} outside 0..{num_classes}"
            )));
        }
        Ok(Dataset {
            covariates,
            labels,
            num_classes,
        })
    }

    /// A fully labelled dataset.
    pub fn labeled(covariates: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(covariates, labels.into_iter().map(Some).collect(), num_classes)
    }

    /// A dataset with no labels at all.
    pub fn unlabeled(covariates: Vec<Vec<f64>>, num_classes: usize) -> Result<Self> {
        let n = covariates.len();
        Self::new(covariates, vec![None; n], num_classes)
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    /// Covariate dimension, 0 for an empty dataset.
    pub fn dim(&self) -> usize {
        self.covariates.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn covariates(&self) -> &[Vec<f64>] {
        &self.covariates
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Iterates over labelled rows as `(covariates, label)`.
    pub fn labeled_rows(&self) -> impl Iterator<Item = (&[f64], usize)> + Clone + '_ {
        self.covariates
            .iter()
            .zip(&self.labels)
            .filter_map(|(x, y)| y.map(|y| (x.as_slice(), y)))
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().flatten().count()
    }

    /// Indices of rows whose label is missing.
    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i].is_none()).collect()
    }

    /// Number of labelled rows in each class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for l in self.labels.iter().flatten() {
            counts[*l] += 1;
        }
        counts
    }

    /// Keeps the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            covariates: indices.iter().map(|&i| self.covariates[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Splits rows into the labelled subset and the covariates of the
    /// unlabelled rows, returning the original row indices of the latter.
    pub fn split_labeled(&self) -> (Dataset, Vec<Vec<f64>>, Vec<usize>) {
        let labeled_idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i].is_some()).collect();
        let unlabeled_idx = self.unlabeled_indices();
        let unlabeled = unlabeled_idx.iter().map(|&i| self.covariates[i].clone()).collect();
        (self.select(&labeled_idx), unlabeled, unlabeled_idx)
    }

    /// Reads a dataset; `label_column` names the label column and every other
    /// column is a covariate. The class count is the largest observed label
    /// (at least 2) unless `num_classes` is given.
    pub fn load_csv(
        path: impl AsRef<Path>,
        label_column: &str,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let parse_err = |row: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };

        let headers = reader.headers()?.clone();
        let label_idx = headers
            .iter()
            .position(|h| h == label_column)
            .ok_or_else(|| parse_err(0, format!("no `{label_column}` column in header")))?;
        if headers.len() < 2 {
            return Err(parse_err(0, "no covariate columns".into()));
        }

        let mut covariates = Vec::new();
        let mut labels = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record?;
            if record.len() != headers.len() {
                return Err(parse_err(
                    row,
                    format!("expected {} fields, found {}", headers.len(), record.len()),
                ));
            }
            let mut x = Vec::with_capacity(headers.len() - 1);
            for (c, cell) in record.iter().enumerate() {
                if c == label_idx {
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| {
                    parse_err(row, format!("column `{}`: `{cell}` is not a number", &headers[c]))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(row, format!("column `{}` is not finite", &headers[c])));
                }
                x.push(v);
            }
            let cell = &record[label_idx];
            let label = if cell.is_empty() {
                None
            } else {
                let l: usize = cell
                    .parse()
                    .map_err(|_| parse_err(row, format!("label `{cell}` is not a positive integer")))?;
                if l == 0 {
                    return Err(parse_err(row, "labels are one-based; found 0".into()));
                }
                if let Some(q) = num_classes {
                    if l > q {
                        return Err(parse_err(row, format!("label {l} outside 1..={q}")));
                    }
                }
                Some(l - 1)
            };
            covariates.push(x);
            labels.push(label);
        }

        let observed = labels.iter().flatten().max().map_or(0, |l| l + 1);
        let q = num_classes.unwrap_or(observed.max(2));
        Dataset::new(covariates, labels, q)
    }

    /// Writes covariates as `x1..xD` followed by `label`. Floats are written
    /// in shortest round-trip form so a reload is bit-exact.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|d| format!("x{d}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (x, y) in self.covariates.iter().zip(&self.labels) {
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(y.map(|l| (l + 1).to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Points on concentric circles, one class per radius, with isotropic
/// Gaussian noise.
pub fn gen_concentric_circles(
    n_per_class: usize,
    radii: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if radii.len() < 2 {
        return Err(Error::invalid("need at least two radii"));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("radii must be positive"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radii must be strictly increasing"));
    }
    let noise = noise_dist(noise_std)?;
    let mut angles = substream(seed, "circles/angle");
    let mut jitter = substream(seed, "circles/noise");

    let mut covariates = Vec::with_capacity(n_per_class * radii.len());
    let mut labels = Vec::with_capacity(n_per_class * radii.len());
    for (class, &r) in radii.iter().enumerate() {
        for _ in 0..n_per_class {
            let theta = angles.random_range(0.0..2.0 * PI);
            let mut p = vec![r * theta.cos(), r * theta.sin()];
            if let Some(noise) = &noise {
                for v in &mut p {
                    *v += noise.sample(&mut jitter);
                }
            }
            covariates.push(p);
            labels.push(class);
        }
    }
    Dataset::labeled(covariates, labels, radii.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelixParams {
    pub radius: f64,
    /// Rise per full turn.
    pub pitch: f64,
    pub turns: f64,
    pub noise_std: f64,
}

impl Default for HelixParams {
    fn default() -> Self {
        HelixParams {
            radius: 1.0,
            pitch: 1.0,
            turns: 2.0,
            noise_std: 0.1,
        }
    }
}

/// Two interleaved 3-D helices with a phase offset of pi; the class is the
/// helix index.
pub fn gen_double_helix(n_per_class: usize, params: HelixParams, seed: u64) -> Result<Dataset> {
    let HelixParams {
        radius,
        pitch,
        turns,
        noise_std,
    } = params;
    for (name, v) in [("radius", radius), ("pitch", pitch), ("turns", turns)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("helix {name} must be positive, got {v}")));
        }
    }
    let noise = noise_dist(noise_std)?;
    let mut phases = substream(seed, "helix/phase");
    let mut jitter = substream(seed, "helix/noise");

    let span = turns * 2.0 * PI;
    let mut covariates = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        let offset = class as f64 * PI;
        for _ in 0..n_per_class {
            let t = phases.random_range(0.0..span);
            let mut p = vec![
                radius * (t + offset).cos(),
                radius * (t + offset).sin(),
                pitch * t / (2.0 * PI),
            ];
            if let Some(noise) = &noise {
                for v in &mut p {
                    *v += noise.sample(&mut jitter);
                }
            }
            covariates.push(p);
            labels.push(class);
        }
    }
    Dataset::labeled(covariates, labels, 2)
}

fn noise_dist(noise_std: f64) -> Result<Option<Normal<f64>>> {
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::invalid(format!("noise_std must be >= 0, got {noise_std}")));
    }
    if noise_std == 0.0 {
        return Ok(None);
    }
    Ok(Some(Normal::new(0.0, noise_std).expect("positive finite std")))
}

/// A stratified labelled/unlabelled split of a fully labelled dataset.
#[derive(Debug, Clone)]
pub struct Partition {
    pub labeled: Dataset,
    /// Same rows as `unlabeled_indices`, labels removed.
    pub unlabeled: Dataset,
    /// True labels of the unlabelled rows, for scoring.
    pub withheld: Vec<usize>,
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
}

impl Partition {
    /// Labelled rows followed by unlabelled rows, as one semi-supervised
    /// dataset.
    pub fn combined(&self) -> Dataset {
        let mut covariates = self.labeled.covariates.clone();
        covariates.extend(self.unlabeled.covariates.iter().cloned());
        let mut labels = self.labeled.labels.clone();
        labels.extend(std::iter::repeat_n(None, self.unlabeled.len()));
        Dataset {
            covariates,
            labels,
            num_classes: self.labeled.num_classes,
        }
    }
}

/// Chooses `n_labeled_per_class` rows of each class uniformly at random to
/// stay labelled; the rest are withheld.
pub fn partition(dataset: &Dataset, n_labeled_per_class: usize, seed: u64) -> Result<Partition> {
    if dataset.labels.iter().any(Option::is_none) {
        return Err(Error::invalid("partition requires a fully labelled dataset"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, l) in dataset.labels.iter().enumerate() {
        by_class[l.expect("checked")].push(i);
    }
    let mut rng = substream(seed, "partition");
    let mut labeled_indices = Vec::new();
    let mut unlabeled_indices = Vec::new();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        if rows.len() < n_labeled_per_class {
            return Err(Error::invalid(format!(
                "class {} has {} points, fewer than {n_labeled_per_class}",
                class + 1,
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        labeled_indices.extend_from_slice(&rows[..n_labeled_per_class]);
        unlabeled_indices.extend_from_slice(&rows[n_labeled_per_class..]);
    }
    labeled_indices.sort_unstable();
    unlabeled_indices.sort_unstable();

    let labeled = dataset.select(&labeled_indices);
    let withheld = unlabeled_indices
        .iter()
        .map(|&i| dataset.labels[i].expect("checked"))
        .collect();
    let unlabeled = Dataset::unlabeled(
        unlabeled_indices
            .iter()
            .map(|&i| dataset.covariates[i].clone())
            .collect(),
        dataset.num_classes,
    )?;
    Ok(Partition {
        labeled,
        unlabeled,
        withheld,
        labeled_indices,
        unlabeled_indices,
    })
}

/// Fraction of positions where `predicted` and `truth` differ.
pub fn zero_one_error(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "length mismatch");
    if truth.is_empty() {
        return 0.0;
    }
    let wrong = predicted.iter().zip(truth).filter(|(a, b)| a != b).count();
    wrong as f64 / truth.len() as f64
}
