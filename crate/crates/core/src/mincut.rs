//! Exact binary MAP by min-cut.
//!
//! A binary energy whose pairwise tables satisfy
//! `E(0,0) + E(1,1) <= E(0,1) + E(1,0)` is turned into a flow network with
//! one node per site plus a source and a sink (Kolmogorov-Zabih). A site on
//! the source side of the cut takes label 0, on the sink side label 1, and the
//! cut capacity equals the energy of that labeling up to a constant offset.
//!
//! Energies are quantized to integers so the flow is exact: every entry is
//! multiplied by `2^32 / max|entry|` and rounded. Labelings read off the cut
//! are re-scored with the unquantized energy.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mrf::{check_pairwise_representable, EnergyGraph, Labeling, Representability};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Arc {
    to: usize,
    capacity: i64,
    residual: i64,
}

/// A capacitated directed graph. Arcs are stored in pairs: arc `2i` is the
/// real arc and `2i + 1` its zero-capacity reverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowNetwork {
    source: usize,
    sink: usize,
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxFlow {
    pub value: i64,
    /// `true` for nodes reachable from the source in the final residual
    /// graph.
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= num_nodes || sink >= num_nodes || source == sink {
            return Err(Error::invalid(format!(
                "bad terminals {source}, {sink} for {num_nodes} nodes"
            )));
        }
        Ok(FlowNetwork {
            source,
            sink,
            arcs: Vec::new(),
            adjacency: vec![Vec::new(); num_nodes],
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len() / 2
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: i64) -> Result<()> {
        if from >= self.num_nodes() || to >= self.num_nodes() {
            return Err(Error::invalid(format!("arc {from} -> {to} out of range")));
        }
        if capacity < 0 {
            return Err(Error::invalid(format!("negative capacity {capacity}")));
        }
        let id = self.arcs.len();
        self.arcs.push(Arc {
            to,
            capacity,
            residual: capacity,
        });
        self.arcs.push(Arc {
            to: from,
            capacity: 0,
            residual: 0,
        });
        self.adjacency[from].push(id);
        self.adjacency[to].push(id + 1);
        Ok(())
    }

    /// Iterates over real arcs as `(from, to, capacity, flow)`.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, i64, i64)> + '_ {
        self.arcs.chunks(2).map(|pair| {
            let (fwd, rev) = (pair[0], pair[1]);
            (rev.to, fwd.to, fwd.capacity, fwd.capacity - fwd.residual)
        })
    }

    /// Total capacity of real arcs leaving the node set `side`.
    pub fn cut_capacity(&self, side: &[bool]) -> i64 {
        self.arcs()
            .filter(|&(from, to, _, _)| side[from] && !side[to])
            .map(|(_, _, cap, _)| cap)
            .sum()
    }

    /// Outflow minus inflow at `node` under the current flow.
    pub fn net_outflow(&self, node: usize) -> i64 {
        self.arcs()
            .map(|(from, to, _, flow)| {
                if from == node && to != node {
                    flow
                } else if to == node && from != node {
                    -flow
                } else {
                    0
                }
            })
            .sum()
    }

    /// Non-terminal nodes whose inflow differs from their outflow, and real
    /// arcs whose flow leaves `[0, capacity]`.
    pub fn conservation_violations(&self) -> Vec<usize> {
        let mut balance = vec![0i64; self.num_nodes()];
        let mut bad = Vec::new();
        for (from, to, cap, flow) in self.arcs() {
            if flow < 0 || flow > cap {
                bad.push(from);
            }
            balance[from] += flow;
            balance[to] -= flow;
        }
        bad.extend((0..self.num_nodes()).filter(|&v| v != self.source && v != self.sink && balance[v] != 0));
        bad.sort_unstable();
        bad.dedup();
        bad
    }

    fn levels(&self) -> Option<Vec<usize>> {
        let mut level = vec![usize::MAX; self.num_nodes()];
        level[self.source] = 0;
        let mut queue = VecDeque::from([self.source]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adjacency[v] {
                let a = self.arcs[e];
                if a.residual > 0 && level[a.to] == usize::MAX {
                    level[a.to] = level[v] + 1;
                    queue.push_back(a.to);
                }
            }
        }
        (level[self.sink] != usize::MAX).then_some(level)
    }

    fn augment(&mut self, v: usize, pushed: i64, level: &[usize], next: &mut [usize]) -> i64 {
        if v == self.sink {
            return pushed;
        }
        while next[v] < self.adjacency[v].len() {
            let e = self.adjacency[v][next[v]];
            let a = self.arcs[e];
            if a.residual > 0 && level[a.to] == level[v] + 1 {
                let d = self.augment(a.to, pushed.min(a.residual), level, next);
                if d > 0 {
                    self.arcs[e].residual -= d;
                    self.arcs[e ^ 1].residual += d;
                    return d;
                }
            }
            next[v] += 1;
        }
        0
    }

    /// Shortest augmenting paths in level-graph phases with current-arc
    /// pointers (Dinic). Resets any previous flow first.
    pub fn max_flow(&mut self) -> MaxFlow {
        for a in &mut self.arcs {
            a.residual = a.capacity;
        }
        let mut value = 0i64;
        while let Some(level) = self.levels() {
            let mut next = vec![0usize; self.num_nodes()];
            loop {
                let f = self.augment(self.source, i64::MAX, &level, &mut next);
                if f == 0 {
                    break;
                }
                value += f;
            }
        }
        let source_side = self.residual_reachable_from_source();
        MaxFlow { value, source_side }
    }

    fn residual_reachable_from_source(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_nodes()];
        seen[self.source] = true;
        let mut stack = vec![self.source];
        while let Some(v) = stack.pop() {
            for &e in &self.adjacency[v] {
                let a = self.arcs[e];
                if a.residual > 0 && !seen[a.to] {
                    seen[a.to] = true;
                    stack.push(a.to);
                }
            }
        }
        seen
    }

    /// The complement of the nodes that can still reach the sink in the
    /// residual graph; the largest minimum-cut source set.
    fn not_reaching_sink(&self) -> Vec<bool> {
        // Walk residual arcs backwards from the sink: u reaches v if the arc
        // u -> v has residual capacity, i.e. the reverse of an arc out of v.
        let mut reaches = vec![false; self.num_nodes()];
        reaches[self.sink] = true;
        let mut stack = vec![self.sink];
        while let Some(v) = stack.pop() {
            for &e in &self.adjacency[v] {
                let u = self.arcs[e].to;
                if self.arcs[e ^ 1].residual > 0 && !reaches[u] {
                    reaches[u] = true;
                    stack.push(u);
                }
            }
        }
        reaches.into_iter().map(|r| !r).collect()
    }
}

/// A flow network built from a binary energy, with its quantization.
#[derive(Debug, Clone)]
pub struct QuantizedNetwork {
    pub network: FlowNetwork,
    /// Integer energy units per unit of energy.
    pub scale: f64,
    /// Quantized energy of a labeling equals `offset + cut capacity`
    /// (excluding the energy's constant term).
    pub offset: i64,
    /// Whether any pairwise arc capacity rounded below zero and was clamped.
    pub clamped: bool,
}

impl QuantizedNetwork {
    pub fn num_sites(&self) -> usize {
        self.network.num_nodes() - 2
    }

    /// Cut capacity of the labeling (label 0 on the source side).
    pub fn cut_cost(&self, labeling: &Labeling) -> i64 {
        let mut side: Vec<bool> = labeling.as_slice().iter().map(|&l| l == 0).collect();
        side.push(true);
        side.push(false);
        self.network.cut_capacity(&side)
    }
}

fn quantize(v: f64, scale: f64) -> i64 {
    (v * scale).round() as i64
}

/// Quantization scale for an energy: `2^32 / max|entry|`.
pub fn quantization_scale(energy: &EnergyGraph) -> f64 {
    // Floor keeps the scale finite for vanishing energies.
    let max = energy.max_abs_entry().max(1e-290);
    2f64.powi(32) / max
}

/// Sum of individually rounded entries; the integer energy that the network
/// represents.
pub fn quantized_energy(energy: &EnergyGraph, labeling: &Labeling, scale: f64) -> i64 {
    let q = energy.num_labels();
    let y = labeling.as_slice();
    let mut total = 0i64;
    for (s, &l) in y.iter().enumerate() {
        total += quantize(energy.unary(s, l), scale);
    }
    for p in energy.pairs() {
        total += quantize(p.get(q, y[p.j], y[p.k]), scale);
    }
    total
}

fn require_binary(energy: &EnergyGraph) -> Result<()> {
    if energy.num_labels() != 2 {
        return Err(Error::invalid(format!(
            "min-cut needs a binary energy, got {} labels",
            energy.num_labels()
        )));
    }
    if let Representability::Violated(v) = check_pairwise_representable(energy) {
        return Err(Error::NotRepresentable(v));
    }
    Ok(())
}

/// Kolmogorov-Zabih reduction of a representable binary energy.
pub fn build_flow_network(energy: &EnergyGraph) -> Result<QuantizedNetwork> {
    require_binary(energy)?;
    let u = energy.num_sites();
    let (source, sink) = (u, u + 1);
    let scale = quantization_scale(energy);

    let mut cost0: Vec<i64> = (0..u).map(|s| quantize(energy.unary(s, 0), scale)).collect();
    let mut cost1: Vec<i64> = (0..u).map(|s| quantize(energy.unary(s, 1), scale)).collect();
    let mut offset = 0i64;
    let mut clamped = false;
    let mut network = FlowNetwork::new(u + 2, source, sink)?;

    // E(a, b) = A + (C - A)[y_j = 1] + (D - C)[y_k = 1] + (B + C - A - D)[y_j = 0, y_k = 1]
    for p in energy.pairs() {
        let a = quantize(p.get(2, 0, 0), scale);
        let b = quantize(p.get(2, 0, 1), scale);
        let c = quantize(p.get(2, 1, 0), scale);
        let d = quantize(p.get(2, 1, 1), scale);
        offset += a;
        cost1[p.j] += c - a;
        cost1[p.k] += d - c;
        let w = b + c - a - d;
        if w < 0 {
            clamped = true;
        } else if w > 0 {
            network.add_arc(p.j, p.k, w)?;
        }
    }
    for s in 0..u {
        let m = cost0[s].min(cost1[s]);
        offset += m;
        cost0[s] -= m;
        cost1[s] -= m;
        // Sink side (label 1) cuts source -> s; source side cuts s -> sink.
        if cost1[s] > 0 {
            network.add_arc(source, s, cost1[s])?;
        }
        if cost0[s] > 0 {
            network.add_arc(s, sink, cost0[s])?;
        }
    }
    Ok(QuantizedNetwork {
        network,
        scale,
        offset,
        clamped,
    })
}

/// Full record of a binary min-cut solve.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub labeling: Labeling,
    /// Unquantized energy of `labeling`, including the constant.
    pub energy: f64,
    pub flow: MaxFlow,
    /// The solved network (flows retained for inspection).
    pub network: QuantizedNetwork,
}

pub fn solve_binary(energy: &EnergyGraph) -> Result<BinarySolution> {
    let mut qn = build_flow_network(energy)?;
    let flow = qn.network.max_flow();
    let u = energy.num_sites();
    let to_labeling = |side: &[bool]| Labeling::new(side[..u].iter().map(|&s| usize::from(!s)).collect(), 2);

    let mut best = to_labeling(&flow.source_side)?;
    let mut best_energy = energy.energy_unchecked(best.as_slice());
    let alt = to_labeling(&qn.network.not_reaching_sink())?;
    if alt != best {
        let e = energy.energy_unchecked(alt.as_slice());
        if e < best_energy {
            best = alt;
            best_energy = e;
        }
    }
    Ok(BinarySolution {
        labeling: best,
        energy: best_energy,
        flow,
        network: qn,
    })
}

/// Exact MAP labeling of a binary, representable energy.
pub fn binary_map(energy: &EnergyGraph) -> Result<Labeling> {
    Ok(solve_binary(energy)?.labeling)
}
