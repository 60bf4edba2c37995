#![allow(dead_code)]

use std::collections::HashMap;

use inforelay::infotheory::{DiscreteTrace, X_IN, X_OUT};
use rand::Rng;

/// Joint probability table of the listed variables, built by direct counting.
pub fn joint(trace: &DiscreteTrace, vars: &[usize]) -> HashMap<Vec<u32>, f64> {
    let n = trace.samples() as f64;
    let mut table = HashMap::new();
    for i in 0..trace.samples() {
        let key: Vec<u32> = vars.iter().map(|&v| trace.column(v)[i]).collect();
        *table.entry(key).or_insert(0.0) += 1.0 / n;
    }
    table
}

/// `I(X_in; X_out | cond)` by summing `p log p(x,y,z)p(z) / p(x,z)p(y,z)` over the table.
pub fn cmi_by_summation(trace: &DiscreteTrace, cond: &[usize]) -> f64 {
    let mut vars = vec![X_IN, X_OUT];
    vars.extend_from_slice(cond);
    let full = joint(trace, &vars);
    let mut pz: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut pxz: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut pyz: HashMap<Vec<u32>, f64> = HashMap::new();
    for (k, &p) in &full {
        let z = k[2..].to_vec();
        *pz.entry(z.clone()).or_insert(0.0) += p;
        let mut xz = vec![k[0]];
        xz.extend_from_slice(&z);
        *pxz.entry(xz).or_insert(0.0) += p;
        let mut yz = vec![k[1]];
        yz.extend_from_slice(&z);
        *pyz.entry(yz).or_insert(0.0) += p;
    }
    full.iter()
        .map(|(k, &p)| {
            let z = &k[2..];
            let mut xz = vec![k[0]];
            xz.extend_from_slice(z);
            let mut yz = vec![k[1]];
            yz.extend_from_slice(z);
            p * (p * pz[z] / (pxz[&xz] * pyz[&yz])).log2()
        })
        .sum()
}

/// Relay information of node set `y_r` given `y_0`, evaluated by direct summation.
pub fn relay_by_summation(trace: &DiscreteTrace, y_r: &[usize], y_0: &[usize]) -> f64 {
    let v0: Vec<usize> = y_0.iter().map(|&n| DiscreteTrace::node(n)).collect();
    let mut vall = v0.clone();
    vall.extend(y_r.iter().map(|&n| DiscreteTrace::node(n)));
    cmi_by_summation(trace, &v0) - cmi_by_summation(trace, &vall)
}

/// Best relay information over all `k`-node relaying sets.
pub fn exhaustive_best(trace: &DiscreteTrace, k: usize) -> (Vec<usize>, f64) {
    let n = trace.n_nodes();
    let mut best: (Vec<usize>, f64) = (Vec::new(), f64::NEG_INFINITY);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let y_r: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let y_0: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
        let v = relay_by_summation(trace, &y_r, &y_0);
        if v > best.1 {
            best = (y_r, v);
        }
    }
    best
}

fn flip<R: Rng>(rng: &mut R, bit: u32, p: f64) -> u32 {
    if rng.gen_bool(p) {
        1 - bit
    } else {
        bit
    }
}

/// A random 5-node binary trace with relay structure: noisy copies of the
/// input, synergistic XOR nodes and pure noise, and a noisy output copy.
pub fn random_relay_trace<R: Rng>(rng: &mut R, samples: usize) -> DiscreteTrace {
    let x: Vec<u32> = (0..samples).map(|_| rng.gen_range(0..2)).collect();
    let out_noise = rng.gen_range(0.0..0.3);
    let y: Vec<u32> = x.iter().map(|&b| flip(rng, b, out_noise)).collect();
    let mut nodes: Vec<Vec<u32>> = Vec::with_capacity(5);
    for _ in 0..5 {
        let kind = rng.gen_range(0..4);
        let col: Vec<u32> = match kind {
            0 | 1 => {
                let q = rng.gen_range(0.0..0.45);
                x.iter().map(|&b| flip(rng, b, q)).collect()
            }
            2 if !nodes.is_empty() => {
                let other = rng.gen_range(0..nodes.len());
                let q = rng.gen_range(0.0..0.2);
                (0..samples).map(|i| flip(rng, x[i] ^ nodes[other][i], q)).collect()
            }
            _ => (0..samples).map(|_| rng.gen_range(0..2)).collect(),
        };
        nodes.push(col);
    }
    DiscreteTrace::binary(x, y, nodes).unwrap()
}
