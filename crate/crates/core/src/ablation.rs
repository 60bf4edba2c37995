//! Knockout experiments: zero chosen hidden nodes at one step and measure how
//! each concept's accuracy suffers.

use std::io::Write;

use rand::{seq::index::sample, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::NodeOrdering;
use crate::recnet::{accuracy_from_outputs, predict_with, Accuracy, Knockout, NetworkParams, HIDDEN, OUTPUTS};
use crate::taskgen::{Concept, Episode};

/// Final readout with `nodes` zeroed right after step `time`.
pub fn forward_with_knockout(
    params: &NetworkParams,
    episode: &Episode,
    nodes: &[usize],
    time: usize,
) -> Result<[f64; OUTPUTS]> {
    let ko = Knockout::new(nodes, time)?;
    predict_with(params, episode, Some(&ko))
}

pub fn knockout_accuracy(
    params: &NetworkParams,
    dataset: &[Episode],
    nodes: &[usize],
    time: usize,
    persistent: bool,
) -> Result<Accuracy> {
    let ko = Knockout::new(nodes, time)?.persistent(persistent);
    let outputs = dataset
        .iter()
        .map(|ep| predict_with(params, ep, Some(&ko)))
        .collect::<Result<Vec<_>>>()?;
    accuracy_from_outputs(&outputs, dataset)
}

/// One line of a knockout sweep: the `set_size` most relaying nodes for
/// `concept` were knocked out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnockoutRow {
    pub concept: Concept,
    pub set_size: usize,
    pub nodes: Vec<usize>,
    pub accuracy: [f64; 3],
    /// Mean accuracy on `concept` over random knockouts of the same size.
    pub baseline: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnockoutSweep {
    pub rows: Vec<KnockoutRow>,
}

impl KnockoutSweep {
    pub fn get(&self, concept: Concept, set_size: usize) -> Option<&KnockoutRow> {
        self.rows.iter().find(|r| r.concept == concept && r.set_size == set_size)
    }

    /// CSV `concept,set_size,acc_a,acc_b,acc_c,baseline`; the baseline is
    /// empty when it was not computed.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["concept", "set_size", "acc_a", "acc_b", "acc_c", "baseline"])?;
        for r in &self.rows {
            w.write_record([
                r.concept.to_string(),
                r.set_size.to_string(),
                r.accuracy[0].to_string(),
                r.accuracy[1].to_string(),
                r.accuracy[2].to_string(),
                r.baseline.map(|b| b.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<knockout csv>", e))?;
        Ok(())
    }
}

/// For each concept and set size `k = 12..=0`, knocks out the concept's `k`
/// most relaying nodes. Set size 0 is the unablated reference.
pub fn knockout_sweep(
    params: &NetworkParams,
    dataset: &[Episode],
    orderings: &[NodeOrdering; 3],
    time: usize,
) -> Result<KnockoutSweep> {
    knockout_sweep_with(params, dataset, orderings, time, false)
}

/// [`knockout_sweep`] with a choice between one-time and held-at-zero knockouts.
pub fn knockout_sweep_with(
    params: &NetworkParams,
    dataset: &[Episode],
    orderings: &[NodeOrdering; 3],
    time: usize,
    persistent: bool,
) -> Result<KnockoutSweep> {
    let jobs: Vec<(Concept, usize)> = Concept::ALL
        .iter()
        .flat_map(|&c| (0..=HIDDEN).rev().map(move |k| (c, k)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(concept, k)| {
            let nodes = orderings[concept.index()].most_relaying(k).to_vec();
            let acc = knockout_accuracy(params, dataset, &nodes, time, persistent)?;
            Ok(KnockoutRow {
                concept,
                set_size: k,
                nodes,
                accuracy: acc.per_concept,
                baseline: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KnockoutSweep { rows })
}

/// Per-concept accuracy averaged over `n_samples` uniformly random `k`-subsets.
pub fn random_knockout_baseline(
    params: &NetworkParams,
    dataset: &[Episode],
    k: usize,
    n_samples: usize,
    time: usize,
    seed: u64,
) -> Result<[f64; 3]> {
    random_knockout_baseline_with(params, dataset, k, n_samples, time, seed, false)
}

pub fn random_knockout_baseline_with(
    params: &NetworkParams,
    dataset: &[Episode],
    k: usize,
    n_samples: usize,
    time: usize,
    seed: u64,
    persistent: bool,
) -> Result<[f64; 3]> {
    if k > HIDDEN {
        return Err(Error::invalid(format!("cannot knock out {k} of {HIDDEN} nodes")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("need at least one random sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets: Vec<Vec<usize>> = (0..n_samples).map(|_| sample(&mut rng, HIDDEN, k).into_vec()).collect();
    let accs = subsets
        .par_iter()
        .map(|nodes| knockout_accuracy(params, dataset, nodes, time, persistent))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = [0.0; 3];
    for a in &accs {
        for (m, v) in mean.iter_mut().zip(a.per_concept) {
            *m += v / n_samples as f64;
        }
    }
    Ok(mean)
}

/// Fills each sweep row's baseline with the random-knockout accuracy for its
/// concept at the same set size.
pub fn attach_random_baseline(
    sweep: &mut KnockoutSweep,
    params: &NetworkParams,
    dataset: &[Episode],
    n_samples: usize,
    time: usize,
    seed: u64,
    persistent: bool,
) -> Result<()> {
    let per_k = (0..=HIDDEN)
        .map(|k| random_knockout_baseline_with(params, dataset, k, n_samples, time, seed.wrapping_add(k as u64), persistent))
        .collect::<Result<Vec<_>>>()?;
    for row in &mut sweep.rows {
        row.baseline = Some(per_k[row.set_size][row.concept.index()]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recnet::{predict, Arch};
    use crate::taskgen::{generate_dataset, DelayRegime, Task};

    fn setup() -> (NetworkParams, Vec<Episode>) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = NetworkParams::init(Arch::Lstm, 3, &mut rng);
        let ds = generate_dataset(Task::Memory, 16, DelayRegime::Fixed(3), 1).unwrap();
        (p, ds)
    }

    #[test]
    fn empty_knockout_is_bit_exact_noop() {
        let (p, ds) = setup();
        for ep in &ds {
            let plain = predict(&p, ep).unwrap();
            let ko = forward_with_knockout(&p, ep, &[], 10).unwrap();
            assert_eq!(plain.map(f64::to_bits), ko.map(f64::to_bits));
        }
    }

    #[test]
    fn knocking_out_a_zero_node_changes_nothing() {
        let (mut p, ds) = setup();
        // node 4 never activates: its input gate and cell candidate are pinned at zero
        for g in [0, 2] {
            let gate = &mut p.gates[g];
            for i in 0..p.input_dim {
                gate.w_in[i * HIDDEN + 4] = 0.0;
            }
            for k in 0..HIDDEN {
                gate.w_rec[k * HIDDEN + 4] = 0.0;
            }
            gate.bias[4] = if g == 0 { -1e9 } else { 0.0 };
        }
        for ep in &ds {
            let tr = crate::recnet::forward(&p, ep).unwrap();
            assert!((0..ep.steps()).all(|t| tr.hidden_at(t)[4] == 0.0));
            assert_eq!(predict(&p, ep).unwrap(), forward_with_knockout(&p, ep, &[4], 10).unwrap());
        }
    }

    #[test]
    fn out_of_range_node_rejected() {
        let (p, ds) = setup();
        assert!(matches!(forward_with_knockout(&p, &ds[0], &[12], 3), Err(Error::InvalidArgument(_))));
        assert!(random_knockout_baseline(&p, &ds, 13, 5, 3, 0).is_err());
    }

    #[test]
    fn baseline_edges_and_determinism() {
        let (p, ds) = setup();
        let plain = crate::recnet::evaluate_accuracy(&p, &ds).unwrap().per_concept;
        assert_eq!(random_knockout_baseline(&p, &ds, 0, 3, 10, 1).unwrap(), plain);
        let all: Vec<usize> = (0..HIDDEN).collect();
        let full = knockout_accuracy(&p, &ds, &all, 10, false).unwrap().per_concept;
        assert_eq!(random_knockout_baseline(&p, &ds, 12, 4, 10, 1).unwrap(), full);
        assert_eq!(
            random_knockout_baseline(&p, &ds, 5, 6, 10, 42).unwrap(),
            random_knockout_baseline(&p, &ds, 5, 6, 10, 42).unwrap()
        );
    }

    #[test]
    fn persistent_knockout_differs_from_one_time() {
        let (p, ds) = setup();
        let one = knockout_accuracy(&p, &ds, &[0, 1, 2, 3], 8, false).unwrap();
        let held = knockout_accuracy(&p, &ds, &[0, 1, 2, 3], 8, true).unwrap();
        // both are valid accuracies; holding at zero is a distinct experiment
        assert!((0.0..=1.0).contains(&one.overall) && (0.0..=1.0).contains(&held.overall));
        let ko = Knockout::new(&[0, 1, 2, 3], 8).unwrap().persistent(true);
        let tr = crate::recnet::forward_with(&p, &ds[0], Some(&ko)).unwrap();
        for t in 8..ds[0].steps() {
            assert!(tr.hidden_at(t)[..4].iter().all(|&v| v == 0.0));
        }
    }
}
