//! Relay matrices over time and their stability statistics.
//!
//! `r` (cross-time correlation) is the Pearson correlation of consecutive
//! flattened relay matrices; overlap is the Jaccard index of consecutive
//! k-means-binarized node sets. Both are concrete stand-ins for the loosely
//! defined "correlation" and "information overlap" statistics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{concept_orderings, RelayMatrix, StateSource};
use crate::recnet::{record_traces, NetworkParams, TraceTensor};
use crate::taskgen::{Concept, ConceptLabels, Episode};

/// Relay matrix at every step of the trace. `X_out` is always the final output.
pub fn relay_over_time_from_trace(
    trace: &TraceTensor,
    labels: &[ConceptLabels],
    source: StateSource,
) -> Result<Vec<RelayMatrix>> {
    (0..trace.steps)
        .into_par_iter()
        .map(|t| concept_orderings(trace, labels, t, source).map(|o| RelayMatrix::from_orderings(&o, t)))
        .collect()
}

pub fn relay_over_time(params: &NetworkParams, dataset: &[Episode]) -> Result<Vec<RelayMatrix>> {
    let trace = record_traces(params, dataset)?;
    let labels: Vec<ConceptLabels> = dataset.iter().map(|e| e.labels).collect();
    relay_over_time_from_trace(&trace, &labels, StateSource::Hidden)
}

/// 0/1 membership of each (concept, node) in the high-information cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryRelay {
    pub time: usize,
    pub nodes: usize,
    pub values: Vec<u8>,
}

impl BinaryRelay {
    pub fn get(&self, concept: Concept, node: usize) -> u8 {
        self.values[concept.index() * self.nodes + node]
    }

    pub fn node_set(&self, concept: Concept) -> Vec<usize> {
        (0..self.nodes).filter(|&n| self.get(concept, n) == 1).collect()
    }
}

/// Optimal two-cluster split of scalar values: returns `(threshold, sse)`,
/// values `>= threshold` form the upper cluster. `None` if all values are equal.
pub fn optimal_split(values: &[f64]) -> Option<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n < 2 || sorted[0] == sorted[n - 1] {
        return None;
    }
    let total: f64 = sorted.iter().sum();
    let total_sq: f64 = sorted.iter().map(|v| v * v).sum();
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for s in 1..n {
        sum += sorted[s - 1];
        sq += sorted[s - 1] * sorted[s - 1];
        if sorted[s - 1] == sorted[s] {
            continue;
        }
        let (nl, nr) = (s as f64, (n - s) as f64);
        let sse = (sq - sum * sum / nl) + ((total_sq - sq) - (total - sum) * (total - sum) / nr);
        if best.is_none_or(|(_, b)| sse < b) {
            best = Some((sorted[s], sse));
        }
    }
    best
}

/// k-means with k = 2 over all entries; the cluster with the larger centroid
/// maps to 1. An all-equal matrix maps to all zeros.
pub fn kmeans2_binarize(matrix: &RelayMatrix) -> BinaryRelay {
    let values = match optimal_split(&matrix.values) {
        Some((threshold, _)) => matrix.values.iter().map(|&v| u8::from(v >= threshold)).collect(),
        None => vec![0; matrix.values.len()],
    };
    BinaryRelay {
        time: matrix.time,
        nodes: matrix.nodes,
        values,
    }
}

fn window(matrices: &[RelayMatrix], window_start: usize) -> Result<&[RelayMatrix]> {
    let w = matrices.get(window_start..).unwrap_or(&[]);
    if w.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two matrices from step {window_start}, have {}",
            w.len()
        )));
    }
    Ok(w)
}

/// Pearson correlation; `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if x.is_empty() || constant(x) || constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Mean Pearson r between consecutive matrices from `window_start` on.
/// Pairs with a zero-variance matrix are skipped; `None` if every pair is.
pub fn cross_time_correlation(matrices: &[RelayMatrix], window_start: usize) -> Result<Option<f64>> {
    let w = window(matrices, window_start)?;
    let rs: Vec<f64> = w.windows(2).filter_map(|p| pearson(&p[0].values, &p[1].values)).collect();
    Ok((!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64))
}

pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Mean Jaccard index of each concept's binarized node set between
/// consecutive steps from `window_start` on.
pub fn information_overlap(matrices: &[RelayMatrix], window_start: usize) -> Result<f64> {
    let w = window(matrices, window_start)?;
    let bins: Vec<BinaryRelay> = w.iter().map(kmeans2_binarize).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for pair in bins.windows(2) {
        for c in Concept::ALL {
            total += jaccard(&pair[0].node_set(c), &pair[1].node_set(c));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Normalized usage counts from a binarized matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageHistograms {
    /// Fraction of nodes relaying 0, 1, 2 or 3 concepts.
    pub concepts_per_node: [f64; 4],
    /// Fraction of concepts relayed by 0..=12 nodes.
    pub nodes_per_concept: [f64; 13],
}

pub fn usage_histograms(binary: &BinaryRelay) -> Result<UsageHistograms> {
    if binary.nodes > 12 {
        return Err(Error::invalid("usage histograms cover at most 12 nodes"));
    }
    let mut concepts_per_node = [0.0; 4];
    for node in 0..binary.nodes {
        let k: usize = Concept::ALL.iter().map(|&c| usize::from(binary.get(c, node))).sum();
        concepts_per_node[k] += 1.0 / binary.nodes as f64;
    }
    let mut nodes_per_concept = [0.0; 13];
    for c in Concept::ALL {
        nodes_per_concept[binary.node_set(c).len()] += 1.0 / 3.0;
    }
    Ok(UsageHistograms {
        concepts_per_node,
        nodes_per_concept,
    })
}

/// Long-format CSV `t,concept,node,bits,binary`.
pub fn write_temporal_csv<W: Write>(matrices: &[RelayMatrix], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "concept", "node", "bits", "binary"])?;
    for m in matrices {
        let bin = kmeans2_binarize(m);
        for c in Concept::ALL {
            for node in 0..m.nodes {
                w.write_record([
                    m.time.to_string(),
                    c.to_string(),
                    node.to_string(),
                    m.get(c, node).to_string(),
                    bin.get(c, node).to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<temporal csv>", e))?;
    Ok(())
}
