//! Multiclass MAP by alpha-expansion, and the semi-supervised driver.
//!
//! An expansion move on label `a` lets every site either keep its current
//! label or switch to `a`. For a pairwise graph-representable energy that
//! binary choice is solved exactly by [`crate::mincut::binary_map`]. Labels
//! are visited in ascending order and the loop stops after a full sweep that
//! accepts no move.

use crate::classify::{predict_proba_batch, ClassModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mincut::solve_binary;
use crate::mrf::{build_energy, check_pairwise_representable, energy_of, EnergyGraph, Labeling, Representability};

/// A move must lower the energy by more than this to be accepted.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ExpansionResult {
    pub labeling: Labeling,
    pub energy: f64,
    /// Energy of the initial labeling followed by the energy after each
    /// accepted move.
    pub accepted_energies: Vec<f64>,
    pub sweeps: usize,
}

/// The binary energy of an expansion move: variable 0 keeps the current
/// label, 1 switches to `alpha`.
pub fn expansion_subproblem(energy: &EnergyGraph, current: &Labeling, alpha: usize) -> Result<EnergyGraph> {
    let q = energy.num_labels();
    let cur = current.as_slice();
    let unary = (0..energy.num_sites())
        .map(|s| vec![energy.unary(s, cur[s]), energy.unary(s, alpha)])
        .collect();
    let pairs = energy
        .pairs()
        .iter()
        .map(|p| {
            let opts_j = [cur[p.j], alpha];
            let opts_k = [cur[p.k], alpha];
            let table = opts_j
                .iter()
                .map(|&a| opts_k.iter().map(|&b| p.get(q, a, b)).collect())
                .collect();
            (p.j, p.k, table)
        })
        .collect();
    EnergyGraph::new(2, unary, pairs, energy.constant())
}

/// The optimal expansion move on `alpha` from `current`, with its energy.
pub fn expansion_move(energy: &EnergyGraph, current: &Labeling, alpha: usize) -> Result<(Labeling, f64)> {
    if alpha >= energy.num_labels() {
        return Err(Error::invalid(format!("label {alpha} outside 0..{}", energy.num_labels())));
    }
    let sub = expansion_subproblem(energy, current, alpha)?;
    let switch = solve_binary(&sub)?.labeling;
    let next: Vec<usize> = current
        .as_slice()
        .iter()
        .zip(switch.as_slice())
        .map(|(&c, &s)| if s == 1 { alpha } else { c })
        .collect();
    let next = Labeling::new(next, energy.num_labels())?;
    let e = energy_of(energy, &next)?;
    Ok((next, e))
}

fn check_start(energy: &EnergyGraph, init: &Labeling) -> Result<f64> {
    if let Representability::Violated(v) = check_pairwise_representable(energy) {
        return Err(Error::NotRepresentable(v));
    }
    energy_of(energy, init)
}

pub fn alpha_expansion(energy: &EnergyGraph, init: &Labeling) -> Result<ExpansionResult> {
    let mut e = check_start(energy, init)?;
    let mut current = init.clone();
    let mut accepted_energies = vec![e];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut improved = false;
        for alpha in 0..energy.num_labels() {
            let (next, next_e) = expansion_move(energy, &current, alpha)?;
            if next_e < e - MIN_IMPROVEMENT {
                current = next;
                e = next_e;
                accepted_energies.push(e);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(ExpansionResult {
        labeling: current,
        energy: e,
        accepted_energies,
        sweeps,
    })
}

/// Re-tests every label and returns the first expansion move that lowers the
/// energy by more than [`MIN_IMPROVEMENT`], if any.
pub fn find_improving_move(energy: &EnergyGraph, labeling: &Labeling) -> Result<Option<(usize, Labeling, f64)>> {
    let e = check_start(energy, labeling)?;
    for alpha in 0..energy.num_labels() {
        let (next, next_e) = expansion_move(energy, labeling, alpha)?;
        if next_e < e - MIN_IMPROVEMENT {
            return Ok(Some((alpha, next, next_e)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub struct SslSolution {
    /// One label per unlabelled point, in input order.
    pub labeling: Labeling,
    pub energy: f64,
    /// `true` for a binary problem (global MAP); `false` for a multiclass
    /// local optimum.
    pub exact: bool,
}

/// MAP labels of `unlabeled` given the labelled data. Binary problems are
/// solved exactly by min-cut; multiclass ones by alpha-expansion started from
/// the supervised predictions.
pub fn ssl_solve(models: &[ClassModel], labeled: &Dataset, unlabeled: &[Vec<f64>]) -> Result<SslSolution> {
    if labeled.labeled_count() == 0 {
        return Err(Error::invalid("semi-supervised solve needs labelled points"));
    }
    if unlabeled.is_empty() {
        return Err(Error::invalid("semi-supervised solve needs unlabelled points"));
    }
    let energy = build_energy(models, labeled, unlabeled)?;
    if energy.num_labels() == 2 {
        let s = solve_binary(&energy)?;
        return Ok(SslSolution {
            labeling: s.labeling,
            energy: s.energy,
            exact: true,
        });
    }
    let init: Vec<usize> = predict_proba_batch(models, labeled, unlabeled)?
        .iter()
        .map(|p| p.label())
        .collect();
    let init = Labeling::new(init, energy.num_labels())?;
    let r = alpha_expansion(&energy, &init)?;
    Ok(SslSolution {
        labeling: r.labeling,
        energy: r.energy,
        exact: false,
    })
}
