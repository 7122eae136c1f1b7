//! The conditional Potts random field over labels and its energies.
//!
//! Conditioned on covariates, the joint label distribution is
//!
//! ```text
//! Pr(y)[x] = exp{ sum_j mu_{y_j} + 1/2 sum_{j,k} delta(y_j, y_k) C_{y_j}(x_j - x_k) } / M(x)
//! ```
//!
//! For semi-supervised inference the labels of the unlabelled points are the
//! unknowns and `E(y*) = -log` of the numerator, split into unary terms, one
//! pairwise table per pair of unlabelled sites and a constant. Since every
//! kernel is non-negative the pairwise tables satisfy
//! `E(a,a) + E(b,c) <= E(a,c) + E(b,a)`, so expansion moves are min-cut
//! solvable.
//!
//! The exhaustive oracles at the bottom are for small instances only.

use std::fmt;

use serde::Serialize;

use crate::classify::ClassModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::check_points;
use crate::simulate::log_product_density_unchecked;

/// Pairwise entries whose magnitude is below this are dropped.
pub const PAIR_CUTOFF: f64 = 1e-12;

/// Absolute slack in the representability inequality.
pub const REPRESENTABILITY_TOL: f64 = 1e-9;

/// Largest number of labelings the exhaustive oracles will enumerate.
pub const MAX_ENUMERATION: u64 = 2_000_000;

/// A class assignment for each site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Labeling(Vec<usize>);

impl Labeling {
    pub fn new(labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        if let Some(l) = labels.iter().find(|&&l| l >= num_labels) {
            return Err(Error::invalid(format!("label {l} outside 0..{num_labels}")));
        }
        Ok(Labeling(labels))
    }

    /// Every site gets `label`.
    pub fn uniform(num_sites: usize, label: usize) -> Self {
        Labeling(vec![label; num_sites])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl std::ops::Index<usize> for Labeling {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Energy table `E_{j,k}(a, b)` for sites `j < k`, row-major in the label of `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTerm {
    pub j: usize,
    pub k: usize,
    table: Vec<f64>,
}

impl PairTerm {
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn get(&self, num_labels: usize, a: usize, b: usize) -> f64 {
        self.table[a * num_labels + b]
    }
}

/// A first violating `(j, k, a, b, c)` of the representability inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub j: usize,
    pub k: usize,
    pub a: usize,
    pub b: usize,
    pub c: usize,
    /// `E(a,a) + E(b,c)`
    pub lhs: f64,
    /// `E(a,c) + E(b,a)`
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sites ({}, {}), labels a={} b={} c={}: E(a,a)+E(b,c) = {} > E(a,c)+E(b,a) = {}",
            self.j, self.k, self.a, self.b, self.c, self.lhs, self.rhs
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Representability {
    Representable,
    Violated(Violation),
}

impl Representability {
    pub fn is_representable(&self) -> bool {
        matches!(self, Representability::Representable)
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Representability::Representable => None,
            Representability::Violated(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyGraph {
    num_sites: usize,
    num_labels: usize,
    /// `num_sites * num_labels`, row-major by site.
    unary: Vec<f64>,
    pairs: Vec<PairTerm>,
    constant: f64,
}

impl EnergyGraph {
    /// Builds an energy from explicit tables. `unary[s][a]` is the cost of
    /// label `a` at site `s`; each pair is `(j, k, table)` with `table[a][b]`
    /// the cost of `(y_j, y_k) = (a, b)`. Pairs with `j > k` are transposed.
    pub fn new(
        num_labels: usize,
        unary: Vec<Vec<f64>>,
        pairs: Vec<(usize, usize, Vec<Vec<f64>>)>,
        constant: f64,
    ) -> Result<Self> {
        if num_labels < 2 {
            return Err(Error::invalid("need at least two labels"));
        }
        let num_sites = unary.len();
        let mut flat = Vec::with_capacity(num_sites * num_labels);
        for (s, row) in unary.into_iter().enumerate() {
            if row.len() != num_labels {
                return Err(Error::invalid(format!("unary row {s} has {} entries", row.len())));
            }
            flat.extend(row);
        }
        let mut terms = Vec::with_capacity(pairs.len());
        let mut seen = std::collections::HashSet::new();
        for (j, k, table) in pairs {
            if j == k || j >= num_sites || k >= num_sites {
                return Err(Error::invalid(format!("invalid site pair ({j}, {k})")));
            }
            if table.len() != num_labels || table.iter().any(|r| r.len() != num_labels) {
                return Err(Error::invalid(format!("pair ({j}, {k}) table is not {num_labels}x{num_labels}")));
            }
            let (lo, hi) = (j.min(k), j.max(k));
            if !seen.insert((lo, hi)) {
                return Err(Error::invalid(format!("duplicate pair ({lo}, {hi})")));
            }
            let mut t = vec![0.0; num_labels * num_labels];
            for a in 0..num_labels {
                for b in 0..num_labels {
                    let v = if j < k { table[a][b] } else { table[b][a] };
                    t[a * num_labels + b] = v;
                }
            }
            terms.push(PairTerm { j: lo, k: hi, table: t });
        }
        let g = EnergyGraph {
            num_sites,
            num_labels,
            unary: flat,
            pairs: terms,
            constant,
        };
        if !g.all_finite() {
            return Err(Error::invalid("energy entries must be finite"));
        }
        Ok(g)
    }

    fn all_finite(&self) -> bool {
        self.constant.is_finite()
            && self.unary.iter().all(|v| v.is_finite())
            && self.pairs.iter().all(|p| p.table.iter().all(|v| v.is_finite()))
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn unary(&self, site: usize, label: usize) -> f64 {
        self.unary[site * self.num_labels + label]
    }

    pub fn unary_row(&self, site: usize) -> &[f64] {
        &self.unary[site * self.num_labels..(site + 1) * self.num_labels]
    }

    pub fn pairs(&self) -> &[PairTerm] {
        &self.pairs
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    /// Largest absolute unary or pairwise entry (the constant is excluded).
    pub fn max_abs_entry(&self) -> f64 {
        self.unary
            .iter()
            .chain(self.pairs.iter().flat_map(|p| p.table.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// For each site, `(pair index, site is the first of the pair)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, bool)>> {
        let mut adj = vec![Vec::new(); self.num_sites];
        for (i, p) in self.pairs.iter().enumerate() {
            adj[p.j].push((i, true));
            adj[p.k].push((i, false));
        }
        adj
    }

    pub(crate) fn energy_unchecked(&self, labels: &[usize]) -> f64 {
        let q = self.num_labels;
        let mut e = self.constant;
        for (s, &l) in labels.iter().enumerate() {
            e += self.unary[s * q + l];
        }
        for p in &self.pairs {
            e += p.table[labels[p.j] * q + labels[p.k]];
        }
        e
    }
}

fn check_models(models: &[ClassModel], num_classes: usize) -> Result<()> {
    if models.len() != num_classes {
        return Err(Error::invalid(format!(
            "{} class models for {num_classes} classes",
            models.len()
        )));
    }
    if let Some(m) = models.iter().find(|m| !m.kernel.family().is_non_negative()) {
        return Err(Error::invalid(format!(
            "kernel family {} is not non-negative",
            m.kernel.family()
        )));
    }
    if models.iter().any(|m| !m.mean.is_finite()) {
        return Err(Error::invalid("class means must be finite"));
    }
    Ok(())
}

/// Energy over the labels of `unlabeled` given the labelled data:
///
/// - `unary(k, a) = -[mu_a + C_a(0)/2 + sum_{labelled j with y_j = a} C_a(x_j - x*_k)]`
/// - `pair(j, k)(a, b) = -delta(a, b) C_a(x*_j - x*_k)`, pairs below
///   [`PAIR_CUTOFF`] dropped
/// - `constant = -(labelled-only part of the log joint)`
///
/// so that `energy_of(y*) = -joint_unnormalized_log_prob(y, y*)`. Unlabelled
/// rows of `labeled` are ignored.
pub fn build_energy(
    models: &[ClassModel],
    labeled: &Dataset,
    unlabeled: &[Vec<f64>],
) -> Result<EnergyGraph> {
    let q = labeled.num_classes();
    check_models(models, q)?;
    let dim = check_points(unlabeled)?;
    if !unlabeled.is_empty() && labeled.labeled_count() > 0 && dim != labeled.dim() {
        return Err(Error::invalid(format!(
            "unlabelled points have dimension {dim}, labelled data {}",
            labeled.dim()
        )));
    }

    let u = unlabeled.len();
    let mut unary = vec![0.0; u * q];
    for (k, xk) in unlabeled.iter().enumerate() {
        let row = &mut unary[k * q..(k + 1) * q];
        for (a, m) in models.iter().enumerate() {
            row[a] = m.mean + 0.5 * m.kernel.at_zero();
        }
        for (xj, y) in labeled.labeled_rows() {
            row[y] += models[y].kernel.between(xj, xk);
        }
        for v in row.iter_mut() {
            *v = -*v;
        }
    }

    let mut pairs = Vec::new();
    for k in 1..u {
        for j in 0..k {
            let mut table = vec![0.0; q * q];
            let mut keep = false;
            for (a, m) in models.iter().enumerate() {
                let c = m.kernel.between(&unlabeled[j], &unlabeled[k]);
                if c.abs() >= PAIR_CUTOFF {
                    keep = true;
                    table[a * q + a] = -c;
                }
            }
            if keep {
                pairs.push(PairTerm { j, k, table });
            }
        }
    }

    let mut constant = 0.0;
    for (i, m) in models.iter().enumerate() {
        let members = labeled.labeled_rows().filter(|&(_, y)| y == i).map(|(x, _)| x);
        if members.clone().next().is_some() {
            constant -= log_product_density_unchecked(m, members);
        }
    }

    Ok(EnergyGraph {
        num_sites: u,
        num_labels: q,
        unary,
        pairs,
        constant,
    })
}

/// The exponent of the unnormalised joint label probability of a fully
/// labelled dataset, `sum_j mu_{y_j} + 1/2 sum_{j,k} delta(y_j, y_k) C_{y_j}(x_j - x_k)`.
pub fn joint_unnormalized_log_prob(models: &[ClassModel], data: &Dataset) -> Result<f64> {
    check_models(models, data.num_classes())?;
    if data.labeled_count() != data.len() {
        return Err(Error::invalid("every point must be labelled"));
    }
    let xs = data.covariates();
    let ys: Vec<usize> = data.labels().iter().map(|l| l.expect("checked")).collect();
    let mut total = 0.0;
    for j in 0..xs.len() {
        let m = &models[ys[j]];
        total += m.mean;
        for k in 0..xs.len() {
            if ys[j] == ys[k] {
                total += 0.5 * m.kernel.between(&xs[j], &xs[k]);
            }
        }
    }
    Ok(total)
}

pub fn energy_of(energy: &EnergyGraph, labeling: &Labeling) -> Result<f64> {
    if labeling.len() != energy.num_sites {
        return Err(Error::invalid(format!(
            "labeling has {} sites, energy {}",
            labeling.len(),
            energy.num_sites
        )));
    }
    if let Some(l) = labeling.0.iter().find(|&&l| l >= energy.num_labels) {
        return Err(Error::invalid(format!("label {l} outside 0..{}", energy.num_labels)));
    }
    Ok(energy.energy_unchecked(&labeling.0))
}

/// Checks `E(a,a) + E(b,c) <= E(a,c) + E(b,a) + tol` for every pair table and
/// every label triple, reporting the first violation in (pair, a, b, c) order.
pub fn check_pairwise_representable(energy: &EnergyGraph) -> Representability {
    let q = energy.num_labels;
    for p in &energy.pairs {
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    let lhs = p.get(q, a, a) + p.get(q, b, c);
                    let rhs = p.get(q, a, c) + p.get(q, b, a);
                    if lhs > rhs + REPRESENTABILITY_TOL {
                        return Representability::Violated(Violation {
                            j: p.j,
                            k: p.k,
                            a,
                            b,
                            c,
                            lhs,
                            rhs,
                        });
                    }
                }
            }
        }
    }
    Representability::Representable
}

fn enumeration_size(energy: &EnergyGraph) -> Result<u64> {
    let too_large = || Error::TooLarge {
        labels: energy.num_labels,
        sites: energy.num_sites,
        limit: MAX_ENUMERATION,
    };
    let total = u32::try_from(energy.num_sites)
        .ok()
        .and_then(|s| (energy.num_labels as u64).checked_pow(s))
        .ok_or_else(too_large)?;
    if total > MAX_ENUMERATION {
        return Err(too_large());
    }
    Ok(total)
}

/// Visits every labeling in lexicographic order (site 0 most significant),
/// passing the energy maintained incrementally alongside the labels.
fn enumerate(energy: &EnergyGraph, mut visit: impl FnMut(&[usize], f64)) -> Result<()> {
    let total = enumeration_size(energy)?;
    let q = energy.num_labels;
    let u = energy.num_sites;
    let adj = energy.adjacency();
    let mut labels = vec![0usize; u];
    let mut e = energy.energy_unchecked(&labels);

    let change = |labels: &mut [usize], site: usize, new: usize, e: &mut f64| {
        let old = labels[site];
        let mut delta = energy.unary(site, new) - energy.unary(site, old);
        for &(pi, first) in &adj[site] {
            let p = &energy.pairs[pi];
            if first {
                let other = labels[p.k];
                delta += p.get(q, new, other) - p.get(q, old, other);
            } else {
                let other = labels[p.j];
                delta += p.get(q, other, new) - p.get(q, other, old);
            }
        }
        labels[site] = new;
        *e += delta;
    };

    for step in 0..total {
        visit(&labels, e);
        if step + 1 == total {
            break;
        }
        // Odometer increment, last site fastest.
        let mut site = u;
        loop {
            site -= 1;
            if labels[site] + 1 < q {
                let next = labels[site] + 1;
                change(&mut labels, site, next, &mut e);
                break;
            }
            change(&mut labels, site, 0, &mut e);
        }
    }
    Ok(())
}

/// Exhaustive MAP. Among equal minima the lexicographically first labeling
/// wins.
pub fn brute_force_map(energy: &EnergyGraph) -> Result<(Labeling, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    enumerate(energy, |labels, running| {
        // The running value drifts slightly; confirm candidates exactly.
        let candidate = match &best {
            None => true,
            Some((_, b)) => running <= b + 1e-7 * (1.0 + b.abs()),
        };
        if candidate {
            let exact = energy.energy_unchecked(labels);
            if best.as_ref().is_none_or(|(_, b)| exact < *b) {
                best = Some((labels.to_vec(), exact));
            }
        }
    })?;
    let (labels, e) = best.expect("at least one labeling");
    Ok((Labeling(labels), e))
}

/// `log sum_{y*} exp(-E(y*))` by exhaustive enumeration.
pub fn brute_force_log_partition(energy: &EnergyGraph) -> Result<f64> {
    let mut max = f64::NEG_INFINITY;
    let mut acc = 0.0;
    enumerate(energy, |_, e| {
        let x = -e;
        if x <= max {
            acc += (x - max).exp();
        } else {
            acc = acc * (max - x).exp() + 1.0;
            max = x;
        }
    })?;
    Ok(max + acc.ln())
}

/// `log sum_{y*} Pr(y, y*)[x ∪ x*]`: the log probability of the observed
/// labels when the extra points `extra` are present with unknown labels.
/// With `extra` empty this is `log Pr(y)[x]`. Exhaustive over all labelings of
/// `x ∪ x*`.
pub fn log_marginal_label_probability(
    models: &[ClassModel],
    labeled: &Dataset,
    extra: &[Vec<f64>],
) -> Result<f64> {
    if labeled.labeled_count() != labeled.len() {
        return Err(Error::invalid("observed points must all be labelled"));
    }
    let numerator = brute_force_log_partition(&build_energy(models, labeled, extra)?)?;
    let mut all = labeled.covariates().to_vec();
    all.extend(extra.iter().cloned());
    let nobody = Dataset::labeled(vec![], vec![], labeled.num_classes())?;
    let normalizer = brute_force_log_partition(&build_energy(models, &nobody, &all)?)?;
    Ok(numerator - normalizer)
}
