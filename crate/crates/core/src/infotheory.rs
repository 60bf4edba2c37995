//! Plug-in information measures over discrete traces and the relay analysis
//! built on them.
//!
//! A trace holds one column per variable: column 0 is the concept label
//! (`X_in`), column 1 the network's classification of it (`X_out`), and the
//! remaining columns the discretized hidden nodes. Relay information of a node
//! set `Y_R` given the complementary set `Y_0` is the conditioned
//! co-information
//!
//! ```text
//! I(X_in; X_out; Y_R | Y_0) = I(X_in; X_out | Y_0) - I(X_in; X_out | Y_R ∪ Y_0)
//! ```
//!
//! which may be negative when nodes encode the concept synergistically.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recnet::{TraceTensor, HIDDEN};
use crate::taskgen::{Concept, ConceptLabels};

pub const X_IN: usize = 0;
pub const X_OUT: usize = 1;

/// Ties within this margin are broken by node index in the greedy search.
const TIE_EPS: f64 = 1e-12;

/// Column of variable `var` is `columns[var]`; every symbol is below its arity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteTrace {
    samples: usize,
    columns: Vec<Vec<u32>>,
    arity: Vec<u32>,
}

impl DiscreteTrace {
    pub fn new(columns: Vec<Vec<u32>>, arity: Vec<u32>) -> Result<Self> {
        if columns.len() != arity.len() {
            return Err(Error::invalid("one arity per variable required"));
        }
        if columns.len() < 2 {
            return Err(Error::invalid("a trace needs at least X_in and X_out"));
        }
        let samples = columns[0].len();
        if samples == 0 {
            return Err(Error::invalid("a trace needs at least one sample"));
        }
        for (v, (col, &a)) in columns.iter().zip(&arity).enumerate() {
            if col.len() != samples {
                return Err(Error::invalid(format!("variable {v} has {} samples, expected {samples}", col.len())));
            }
            if a == 0 || col.iter().any(|&s| s >= a) {
                return Err(Error::invalid(format!("variable {v} has a symbol outside its arity {a}")));
            }
        }
        Ok(DiscreteTrace { samples, columns, arity })
    }

    /// All-binary trace with `x_in`, `x_out` and node columns.
    pub fn binary(x_in: Vec<u32>, x_out: Vec<u32>, nodes: Vec<Vec<u32>>) -> Result<Self> {
        let mut columns = vec![x_in, x_out];
        columns.extend(nodes);
        let arity = vec![2; columns.len()];
        Self::new(columns, arity)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.columns.len() - 2
    }

    /// Variable index of hidden node `i`.
    pub fn node(i: usize) -> usize {
        i + 2
    }

    pub fn column(&self, var: usize) -> &[u32] {
        &self.columns[var]
    }

    pub fn arity(&self, var: usize) -> u32 {
        self.arity[var]
    }
}

fn sorted_union(sets: &[&[usize]]) -> Vec<usize> {
    let mut all: Vec<usize> = sets.iter().flat_map(|s| s.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Plug-in Shannon entropy (bits) of the empirical joint distribution of `vars`.
/// The empty set has zero entropy.
pub fn entropy(trace: &DiscreteTrace, vars: &[usize]) -> f64 {
    let vars = sorted_union(&[vars]);
    if vars.is_empty() {
        return 0.0;
    }
    let n = trace.samples as f64;
    let mut capacity: Option<u64> = Some(1);
    for &v in &vars {
        capacity = capacity.and_then(|c| c.checked_mul(u64::from(trace.arity[v])));
    }
    let counts: Vec<usize> = match capacity {
        Some(_) => {
            let mut keys = vec![0u64; trace.samples];
            for &v in &vars {
                let a = u64::from(trace.arity[v]);
                for (k, &s) in keys.iter_mut().zip(&trace.columns[v]) {
                    *k = *k * a + u64::from(s);
                }
            }
            keys.sort_unstable();
            let mut counts = Vec::new();
            let mut run = 1;
            for w in keys.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                } else {
                    counts.push(run);
                    run = 1;
                }
            }
            counts.push(run);
            counts
        }
        None => {
            let mut map: HashMap<Vec<u32>, usize> = HashMap::new();
            for i in 0..trace.samples {
                let key: Vec<u32> = vars.iter().map(|&v| trace.columns[v][i]).collect();
                *map.entry(key).or_default() += 1;
            }
            map.into_values().collect()
        }
    };
    let sum_clogc: f64 = counts.iter().map(|&c| c as f64 * (c as f64).log2()).sum();
    (n.log2() - sum_clogc / n).max(0.0)
}

/// `I(A; B | C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)`, in bits.
pub fn conditional_mi(trace: &DiscreteTrace, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
    entropy(trace, &sorted_union(&[a, c])) + entropy(trace, &sorted_union(&[b, c]))
        - entropy(trace, &sorted_union(&[a, b, c]))
        - entropy(trace, c)
}

fn node_vars(nodes: &[usize]) -> Vec<usize> {
    nodes.iter().map(|&n| DiscreteTrace::node(n)).collect()
}

fn relay_given(trace: &DiscreteTrace, y0_vars: &[usize], full_term: f64) -> f64 {
    conditional_mi(trace, &[X_IN], &[X_OUT], y0_vars) - full_term
}

/// Signed relay information of `y_r` given `y_0`; the two node sets must
/// partition all nodes of the trace.
pub fn relay_information(trace: &DiscreteTrace, y_r: &[usize], y_0: &[usize]) -> Result<f64> {
    let n = trace.n_nodes();
    let mut seen = vec![false; n];
    for &node in y_r.iter().chain(y_0) {
        if node >= n {
            return Err(Error::invalid(format!("node {node} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[node], true) {
            return Err(Error::invalid(format!("node {node} appears twice in the partition")));
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::invalid("relaying and non-relaying sets must cover every node"));
    }
    let all = node_vars(&(0..n).collect::<Vec<_>>());
    let full_term = conditional_mi(trace, &[X_IN], &[X_OUT], &all);
    Ok(relay_given(trace, &node_vars(y_0), full_term))
}

/// Greedy removal sequence from least to most relaying node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeOrdering {
    /// Permutation of the nodes; the first entry relays least.
    pub removal_order: Vec<usize>,
    /// Relay information of the set still in `Y_R` before each removal.
    pub residual_info: Vec<f64>,
    /// Indexed by node: drop in relay information when that node is removed.
    /// The last survivor's loss is its own residual. Unclamped.
    pub per_node_loss: Vec<f64>,
}

impl NodeOrdering {
    /// The `k` most relaying nodes (suffix of the removal order).
    pub fn most_relaying(&self, k: usize) -> &[usize] {
        let n = self.removal_order.len();
        &self.removal_order[n - k.min(n)..]
    }

    /// The `m` least relaying nodes (prefix of the removal order).
    pub fn least_relaying(&self, m: usize) -> &[usize] {
        &self.removal_order[..m.min(self.removal_order.len())]
    }

    pub fn full_relay(&self) -> f64 {
        self.residual_info.first().copied().unwrap_or(0.0)
    }

    /// Whether residuals never increase by more than `tol` along the sequence.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.residual_info.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// CSV `rank,node,residual_bits,loss_bits`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "node", "residual_bits", "loss_bits"])?;
        for (rank, &node) in self.removal_order.iter().enumerate() {
            w.write_record([
                rank.to_string(),
                node.to_string(),
                self.residual_info[rank].to_string(),
                self.per_node_loss[node].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<ordering csv>", e))?;
        Ok(())
    }
}

/// Starting from all nodes relaying, repeatedly moves to `Y_0` the node whose
/// removal leaves the most relay information, until one node is left.
pub fn greedy_ordering(trace: &DiscreteTrace) -> NodeOrdering {
    let n = trace.n_nodes();
    let all = node_vars(&(0..n).collect::<Vec<_>>());
    let full_term = conditional_mi(trace, &[X_IN], &[X_OUT], &all);

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut removed_vars: Vec<usize> = Vec::with_capacity(n);
    let mut removal_order = Vec::with_capacity(n);
    let mut residual_info = Vec::with_capacity(n);
    if n > 0 {
        residual_info.push(relay_given(trace, &[], full_term));
    }
    while remaining.len() > 1 {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &node) in remaining.iter().enumerate() {
            removed_vars.push(DiscreteTrace::node(node));
            let value = relay_given(trace, &removed_vars, full_term);
            removed_vars.pop();
            if best.is_none_or(|(_, b)| value > b + TIE_EPS) {
                best = Some((pos, value));
            }
        }
        let (pos, value) = best.expect("non-empty candidate set");
        let node = remaining.remove(pos);
        removed_vars.push(DiscreteTrace::node(node));
        removal_order.push(node);
        residual_info.push(value);
    }
    removal_order.extend(remaining);

    let mut per_node_loss = vec![0.0; n];
    for (rank, &node) in removal_order.iter().enumerate() {
        let after = residual_info.get(rank + 1).copied().unwrap_or(0.0);
        per_node_loss[node] = residual_info[rank] - after;
    }
    NodeOrdering {
        removal_order,
        residual_info,
        per_node_loss,
    }
}

/// Median split: values at or above the median map to 1. A constant column
/// maps to all zeros.
pub fn binarize_median(values: &[f64]) -> Vec<u32> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return vec![0; values.len()];
    }
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    values.iter().map(|&v| u32::from(v >= median)).collect()
}

/// Which recorded state the node variables are read from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateSource {
    #[default]
    Hidden,
    /// LSTM cell state; falls back to hidden state for other architectures.
    Cell,
}

/// Discrete trace for one concept at step `time`: median-split nodes, the
/// concept label as `X_in`, the sign of the matching output as `X_out`.
pub fn discretize(
    trace: &TraceTensor,
    time: usize,
    labels: &[ConceptLabels],
    concept: Concept,
) -> Result<DiscreteTrace> {
    discretize_from(trace, time, labels, concept, StateSource::Hidden)
}

pub fn discretize_from(
    trace: &TraceTensor,
    time: usize,
    labels: &[ConceptLabels],
    concept: Concept,
    source: StateSource,
) -> Result<DiscreteTrace> {
    if time >= trace.steps {
        return Err(Error::invalid(format!("time {time} outside trace of length {}", trace.steps)));
    }
    if labels.len() != trace.episodes {
        return Err(Error::invalid("one label set per traced episode required"));
    }
    let c = concept.index();
    let x_in = labels.iter().map(|l| u32::from(l.get(concept) > 0)).collect();
    let x_out = trace.outputs.iter().map(|y| u32::from(y[c] > 0.0)).collect();
    let nodes = (0..HIDDEN)
        .map(|node| {
            let column: Vec<f64> = (0..trace.episodes)
                .map(|e| match (source, trace.cell_at(e, time)) {
                    (StateSource::Cell, Some(cell)) => cell[node],
                    _ => trace.hidden_at(e, time)[node],
                })
                .collect();
            binarize_median(&column)
        })
        .collect();
    DiscreteTrace::binary(x_in, x_out, nodes)
}

/// Concepts × nodes grid of per-node relay information (bits), clamped at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelayMatrix {
    pub time: usize,
    pub nodes: usize,
    /// `3 × nodes`, row-major by concept.
    pub values: Vec<f64>,
}

impl RelayMatrix {
    pub fn get(&self, concept: Concept, node: usize) -> f64 {
        self.values[concept.index() * self.nodes + node]
    }

    pub fn row(&self, concept: Concept) -> &[f64] {
        let i = concept.index();
        &self.values[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn row_sum(&self, concept: Concept) -> f64 {
        self.row(concept).iter().sum()
    }

    /// Builds a matrix from per-concept orderings, clamping losses at 0.
    pub fn from_orderings(orderings: &[NodeOrdering; 3], time: usize) -> Self {
        let nodes = orderings[0].per_node_loss.len();
        let values = orderings
            .iter()
            .flat_map(|o| o.per_node_loss.iter().map(|&v| v.max(0.0)))
            .collect();
        RelayMatrix { time, nodes, values }
    }

    /// Appends `concept,node,bits,time` rows (no header).
    pub fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for concept in Concept::ALL {
            for node in 0..self.nodes {
                w.write_record([
                    concept.to_string(),
                    node.to_string(),
                    self.get(concept, node).to_string(),
                    self.time.to_string(),
                ])?;
            }
        }
        Ok(())
    }

    /// CSV `concept,node,bits,time`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["concept", "node", "bits", "time"])?;
        self.write_rows(&mut w)?;
        w.flush().map_err(|e| Error::io("<relay csv>", e))?;
        Ok(())
    }
}

/// Greedy orderings for all three concepts at step `time`.
pub fn concept_orderings(
    trace: &TraceTensor,
    labels: &[ConceptLabels],
    time: usize,
    source: StateSource,
) -> Result<[NodeOrdering; 3]> {
    let orderings = Concept::ALL
        .par_iter()
        .map(|&c| discretize_from(trace, time, labels, c, source).map(|d| greedy_ordering(&d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(orderings.try_into().expect("three concepts"))
}

pub fn relay_matrix(trace: &TraceTensor, labels: &[ConceptLabels], time: usize) -> Result<RelayMatrix> {
    let orderings = concept_orderings(trace, labels, time, StateSource::Hidden)?;
    Ok(RelayMatrix::from_orderings(&orderings, time))
}
