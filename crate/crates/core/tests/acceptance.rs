//! Acceptance criteria 1 to 8. Each test prints one `PASS`/`FAIL` line to
//! stderr (uncaptured) and then asserts.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;

use common::{exhaustive_best, random_relay_trace};
use inforelay::ablation::{forward_with_knockout, knockout_accuracy};
use inforelay::experiment::{
    analysis_dataset, analysis_time, cell_seed, delay_accuracy, derive_seed, window_start, CellKey,
};
use inforelay::infotheory::{
    concept_orderings, conditional_mi, entropy, greedy_ordering, relay_information, DiscreteTrace, NodeOrdering,
    StateSource, X_IN, X_OUT,
};
use inforelay::latent::{
    pca2, random_removal_baseline, removal_curve, shuffled_silhouette, silhouette, state_labels, MAX_REMOVED,
};
use inforelay::recnet::{
    batch_loss, bptt_gradients, evaluate_accuracy, predict, record_traces, train, Arch, Checkpoint, NetworkParams,
    TraceTensor, TrainConfig, TrainReport, HIDDEN,
};
use inforelay::taskgen::{Concept, ConceptLabels, DelayRegime, Episode, Task};
use inforelay::temporal::{
    cross_time_correlation, information_overlap, kmeans2_binarize, relay_over_time_from_trace, usage_histograms,
};
use inforelay::Error;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_SEED: u64 = 1;
const REPLICATES: usize = 5;
const ANALYSIS_EPISODES: usize = 800;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {verdict} {detail}");
}

fn majority(passes: usize) -> bool {
    2 * passes > REPLICATES
}

struct Net {
    key: CellKey,
    seed: u64,
    result: Result<(NetworkParams, TrainReport), String>,
}

impl Net {
    fn params(&self) -> Option<&NetworkParams> {
        self.result.as_ref().ok().map(|(p, _)| p)
    }
}

fn train_cell(task: Task, arch: Arch, regime: DelayRegime, replicate: usize) -> Net {
    let key = CellKey {
        task,
        arch,
        regime,
        replicate,
    };
    let seed = cell_seed(BASE_SEED, &key);
    let result = match train(arch, task, regime, seed, &TrainConfig::default()) {
        Ok(r) => Ok(r),
        Err(Error::TrainingFailed(rep)) => Err(format!("best accuracy {:.3}", rep.final_accuracy)),
        Err(e) => panic!("training {key}: {e}"),
    };
    Net { key, seed, result }
}

type NetTable = BTreeMap<(Task, Arch, DelayRegime), Vec<Net>>;

fn regimes_for(task: Task) -> Vec<DelayRegime> {
    match task {
        Task::Memory => DelayRegime::training_regimes(),
        Task::Block => vec![DelayRegime::RANDOM],
    }
}

/// Memory task under all six regimes and the block task under random delay,
/// five replicates each.
fn nets() -> &'static NetTable {
    static NETS: OnceLock<NetTable> = OnceLock::new();
    NETS.get_or_init(|| {
        let mut table = NetTable::new();
        for task in Task::ALL {
            for regime in regimes_for(task) {
                for arch in Arch::ALL {
                    let reps = (0..REPLICATES).map(|r| train_cell(task, arch, regime, r)).collect();
                    table.insert((task, arch, regime), reps);
                }
            }
        }
        table
    })
}

fn group(task: Task, arch: Arch, regime: DelayRegime) -> &'static [Net] {
    &nets()[&(task, arch, regime)]
}

/// Analysis dataset, labels and traces of a trained network.
struct Probe {
    dataset: Vec<Episode>,
    labels: Vec<ConceptLabels>,
    trace: TraceTensor,
}

fn probe(net: &Net, params: &NetworkParams) -> Probe {
    let dataset = analysis_dataset(
        net.key.task,
        net.key.regime,
        ANALYSIS_EPISODES,
        derive_seed(net.seed, "analysis"),
    )
    .unwrap();
    let labels = dataset.iter().map(|e| e.labels).collect();
    let trace = record_traces(params, &dataset).unwrap();
    Probe { dataset, labels, trace }
}

#[test]
fn criterion_1_training_reproduction() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (task, needed) in [(Task::Memory, 4), (Task::Block, 3)] {
        for arch in Arch::ALL {
            let reps = group(task, arch, DelayRegime::RANDOM);
            let ok = reps
                .iter()
                .filter(|n| n.result.as_ref().is_ok_and(|(_, r)| r.final_accuracy >= 0.98))
                .count();
            pass &= ok >= needed;
            detail.push(format!("{task}/{arch} {ok}/{REPLICATES}"));
        }
    }
    report(1, pass, &format!("(reached 0.98: {})", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_2_delay_generalization() {
    let mut pass = true;
    let mut detail = Vec::new();
    for task in Task::ALL {
        for arch in Arch::ALL {
            let good = group(task, arch, DelayRegime::RANDOM)
                .iter()
                .filter(|n| {
                    n.params().is_some_and(|p| {
                        let acc = delay_accuracy(p, task, ANALYSIS_EPISODES, n.seed).unwrap();
                        (1..=5).all(|d| acc[d].overall >= 0.90)
                    })
                })
                .count();
            pass &= majority(good);
            detail.push(format!("{task}/{arch}/random {good}"));
        }
    }
    for arch in Arch::ALL {
        for k in 1..=5 {
            let good = group(Task::Memory, arch, DelayRegime::Fixed(k))
                .iter()
                .filter(|n| {
                    n.params().is_some_and(|p| {
                        let acc = delay_accuracy(p, Task::Memory, ANALYSIS_EPISODES, n.seed).unwrap();
                        let at_k = acc[k].overall;
                        at_k >= 0.95 && (0..10).any(|d| d != k && at_k - acc[d].overall >= 0.10)
                    })
                })
                .count();
            pass &= majority(good);
            detail.push(format!("memory/{arch}/fixed:{k} {good}"));
        }
    }
    report(2, pass, &format!("(replicates meeting the trend of {REPLICATES}: {})", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_3_estimator_exactness() {
    let mut worst: f64 = 0.0;
    // Bernoulli(1/4), uniform over 3, and (1/2, 1/4, 1/8, 1/8)
    let cases: [(&[u32], u32, f64); 3] = [
        (&[0, 0, 0, 1], 2, 2.0 - 0.75 * 3f64.log2()),
        (&[0, 1, 2, 0, 1, 2], 3, 3f64.log2()),
        (&[0, 0, 0, 0, 1, 1, 2, 3], 4, 1.75),
    ];
    for (col, arity, h) in cases {
        let n = col.len();
        let t = DiscreteTrace::new(vec![col.to_vec(), vec![0; n]], vec![arity, 2]).unwrap();
        worst = worst.max((entropy(&t, &[X_IN]) - h).abs());
    }
    // X_in, X_out copies of one fair bit with an independent fair bit Y
    let t = DiscreteTrace::binary(vec![0, 0, 1, 1], vec![0, 0, 1, 1], vec![vec![0, 1, 0, 1]]).unwrap();
    worst = worst.max((conditional_mi(&t, &[X_IN], &[X_OUT], &[]) - 1.0).abs());
    worst = worst.max((conditional_mi(&t, &[X_IN], &[X_OUT], &[DiscreteTrace::node(0)]) - 1.0).abs());
    worst = worst.max(conditional_mi(&t, &[X_IN], &[DiscreteTrace::node(0)], &[]).abs());

    let xor = DiscreteTrace::binary(vec![0, 0, 1, 1], vec![0, 1, 0, 1], vec![vec![0, 1, 1, 0], vec![0; 4]]).unwrap();
    let co = relay_information(&xor, &[0], &[1]).unwrap();
    let pass = worst <= 1e-9 && co == -1.0;
    report(3, pass, &format!("(max closed-form error {worst:e}, XOR co-information {co})"));
    assert!(pass);
}

#[test]
fn criterion_4_greedy_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut greedy_total, mut best_total) = (0.0, 0.0);
    let mut optimal = 0;
    for _ in 0..100 {
        let t = random_relay_trace(&mut rng, 400);
        let ord = greedy_ordering(&t);
        let pair = ord.most_relaying(2).to_vec();
        let rest: Vec<usize> = (0..t.n_nodes()).filter(|i| !pair.contains(i)).collect();
        let g = relay_information(&t, &pair, &rest).unwrap();
        let (_, best) = exhaustive_best(&t, 2);
        if g >= best - 1e-9 {
            optimal += 1;
        }
        greedy_total += g;
        best_total += best;
    }
    let ratio = greedy_total / best_total;
    let pass = ratio >= 0.95;
    report(
        4,
        pass,
        &format!("(greedy/exhaustive relay {ratio:.4} over 100 traces, {optimal} optimal pairs)"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_knockout_selectivity() {
    let mut pass = true;
    let mut detail = Vec::new();
    let mut worst_full: f64 = 0.0;
    let mut noop_exact = true;
    for arch in Arch::ALL {
        let mut per_concept = [0usize; 3];
        for net in group(Task::Memory, arch, DelayRegime::RANDOM) {
            let Some(params) = net.params() else { continue };
            let pr = probe(net, params);
            let time = analysis_time(Task::Memory);
            let ords = concept_orderings(&pr.trace, &pr.labels, time, StateSource::Hidden).unwrap();
            let base = evaluate_accuracy(params, &pr.dataset).unwrap().per_concept;
            for c in Concept::ALL {
                let acc = knockout_accuracy(params, &pr.dataset, ords[c.index()].most_relaying(3), time, false)
                    .unwrap()
                    .per_concept;
                let drop: Vec<f64> = (0..3).map(|i| base[i] - acc[i]).collect();
                let ci = c.index();
                if (0..3).filter(|&o| o != ci).all(|o| drop[ci] - drop[o] >= 0.05) {
                    per_concept[ci] += 1;
                }
            }
            let all: Vec<usize> = (0..HIDDEN).collect();
            let full = knockout_accuracy(params, &pr.dataset, &all, time, false).unwrap().overall;
            worst_full = worst_full.max((full - 0.5).abs());
            for ep in pr.dataset.iter().take(64) {
                let plain = predict(params, ep).unwrap().map(f64::to_bits);
                let ko = forward_with_knockout(params, ep, &[], time).unwrap().map(f64::to_bits);
                noop_exact &= plain == ko;
            }
        }
        pass &= per_concept.iter().all(|&n| majority(n));
        detail.push(format!(
            "{arch} a:{} b:{} c:{}",
            per_concept[0], per_concept[1], per_concept[2]
        ));
    }
    pass &= worst_full <= 0.05 && noop_exact;
    report(
        5,
        pass,
        &format!(
            "(selective replicates of {REPLICATES}: {}; full knockout max |acc-0.5| {worst_full:.3}; empty knockout bit-exact {noop_exact})",
            detail.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_temporal_localization() {
    let inject = Task::Memory.injection_rows();
    let mut rows_ok = true;
    let (mut max_before, mut min_after) = (0.0f64, f64::INFINITY);
    let mut means: BTreeMap<(DelayRegime, Arch), (f64, f64)> = BTreeMap::new();
    for regime in DelayRegime::training_regimes() {
        for arch in Arch::ALL {
            let (mut rs, mut ovs) = (Vec::new(), Vec::new());
            for net in group(Task::Memory, arch, regime) {
                let Some(params) = net.params() else {
                    if arch == Arch::Lstm {
                        rows_ok = false;
                    }
                    continue;
                };
                let pr = probe(net, params);
                let over_time = relay_over_time_from_trace(&pr.trace, &pr.labels, StateSource::Hidden).unwrap();
                if arch == Arch::Lstm {
                    for m in &over_time {
                        for c in Concept::ALL {
                            let v = m.row_sum(c);
                            if m.time < inject[c.index()] {
                                max_before = max_before.max(v);
                            } else {
                                min_after = min_after.min(v);
                            }
                        }
                    }
                }
                if regime != DelayRegime::RANDOM {
                    let ws = window_start(Task::Memory);
                    if let Some(r) = cross_time_correlation(&over_time, ws).unwrap() {
                        rs.push(r);
                    }
                    ovs.push(information_overlap(&over_time, ws).unwrap());
                }
            }
            if regime != DelayRegime::RANDOM {
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                means.insert((regime, arch), (mean(&rs), mean(&ovs)));
            }
        }
    }
    rows_ok &= max_before < 0.05 && min_after > 0.3;
    let mut contrast_ok = true;
    let mut detail = Vec::new();
    for k in 1..=5 {
        let regime = DelayRegime::Fixed(k);
        let (rnn, gru, lstm) = (
            means[&(regime, Arch::Rnn)],
            means[&(regime, Arch::Gru)],
            means[&(regime, Arch::Lstm)],
        );
        let ok = rnn.0 < gru.0 && rnn.0 < lstm.0 && rnn.1 < gru.1 && rnn.1 < lstm.1;
        contrast_ok &= ok;
        detail.push(format!(
            "fixed:{k} r {:.2}/{:.2}/{:.2} overlap {:.2}/{:.2}/{:.2}",
            rnn.0, gru.0, lstm.0, rnn.1, gru.1, lstm.1
        ));
    }
    let pass = rows_ok && contrast_ok;
    report(
        6,
        pass,
        &format!(
            "(LSTM rows: max before injection {max_before:.3}, min after {min_after:.3}; rnn/gru/lstm means: {})",
            detail.join("; ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_pca_validation() {
    let time = analysis_time(Task::Memory);
    let mut separated = 0;
    let mut targeted_wins = [0usize; 3];
    let mut margins = Vec::new();
    for net in group(Task::Memory, Arch::Rnn, DelayRegime::RANDOM) {
        let Some(params) = net.params() else { continue };
        let pr = probe(net, params);
        let pca = pca2(&pr.trace.states_at(time), HIDDEN).unwrap();
        let states = state_labels(&pr.labels);
        let sil = silhouette(&pca.projected, &states).unwrap();
        let shuffled = shuffled_silhouette(&pca.projected, &states, 100, derive_seed(net.seed, "shuffle")).unwrap();
        margins.push(sil - shuffled);
        if sil >= shuffled + 0.2 {
            separated += 1;
        }
        let ords: [NodeOrdering; 3] = concept_orderings(&pr.trace, &pr.labels, time, StateSource::Hidden).unwrap();
        for c in Concept::ALL {
            let targeted = removal_curve(&pr.trace, time, &pr.labels, &ords[c.index()], c).unwrap();
            let random =
                random_removal_baseline(&pr.trace, time, &pr.labels, c, 50, derive_seed(net.seed, "removal")).unwrap();
            if (4..=MAX_REMOVED).all(|m| targeted[m].scores.silhouette >= random[m].scores.silhouette) {
                targeted_wins[c.index()] += 1;
            }
        }
    }
    let pass = separated == REPLICATES && targeted_wins.iter().all(|&n| majority(n));
    let margins: Vec<String> = margins.iter().map(|m| format!("{m:.2}")).collect();
    report(
        7,
        pass,
        &format!(
            "(state silhouette above shuffled by [{}]; targeted >= random at m=4..10 in a:{} b:{} c:{} of {REPLICATES})",
            margins.join(", "),
            targeted_wins[0],
            targeted_wins[1],
            targeted_wins[2]
        ),
    );
    assert!(pass);
}

fn gradient_error(arch: Arch, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = NetworkParams::init(arch, Task::Memory.input_dim(), &mut rng);
    let data = inforelay::taskgen::generate_dataset(Task::Memory, 8, DelayRegime::RANDOM, seed).unwrap();
    let eps: Vec<&Episode> = data.iter().take(4).collect();
    let targets: Vec<[f64; 3]> = eps.iter().map(|e| e.labels.targets().map(|t| 0.5 * t)).collect();
    let (_, grads) = bptt_gradients(&params, &eps, &targets).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, &a) in grads.values().enumerate() {
        let mut plus = params.clone();
        *plus.values_mut().nth(k).unwrap() += h;
        let mut minus = params.clone();
        *minus.values_mut().nth(k).unwrap() -= h;
        let n = (batch_loss(&plus, &eps, &targets).unwrap() - batch_loss(&minus, &eps, &targets).unwrap()) / (2.0 * h);
        worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
    }
    worst
}

fn orthonormality_error(points: &[f64], dims: usize) -> f64 {
    let p = pca2(points, dims).unwrap();
    let dot = |i: usize, j: usize| (0..dims).map(|r| p.components[r][i] * p.components[r][j]).sum::<f64>();
    (dot(0, 0) - 1.0).abs().max((dot(1, 1) - 1.0).abs()).max(dot(0, 1).abs())
}

fn named<T: std::fmt::Debug>(name: &str, r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| format!("{name}: {e}"))
}

fn invariants_hold() -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 64,
        failure_persistence: None,
        ..Config::default()
    });
    let trace = (4usize..30, 1usize..5).prop_flat_map(|(s, n)| prop::collection::vec(prop::collection::vec(0u32..2, s), n + 2));
    let r = runner.run(&trace, |cols| {
        let t = DiscreteTrace::new(cols.clone(), vec![2; cols.len()]).unwrap();
        let ord = greedy_ordering(&t);
        let full = relay_information(&t, &(0..t.n_nodes()).collect::<Vec<_>>(), &[]).unwrap();
        let sum: f64 = ord.per_node_loss.iter().sum();
        prop_assert!((sum - full).abs() < 1e-9);
        prop_assert!(conditional_mi(&t, &[X_IN], &[X_OUT], &[DiscreteTrace::node(0)]) >= -1e-9);
        Ok(())
    });
    named("relay chain consistency", r)?;

    let matrix = prop::collection::vec(0.0f64..1.0, 36);
    let r = runner.run(&(matrix.clone(), matrix), |(a, b)| {
        let m = |v: Vec<f64>, t| inforelay::infotheory::RelayMatrix {
            time: t,
            nodes: 12,
            values: v,
        };
        let ms = [m(a, 0), m(b, 1)];
        let u = usage_histograms(&kmeans2_binarize(&ms[0])).unwrap();
        prop_assert!((u.concepts_per_node.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ov = information_overlap(&ms, 0).unwrap();
        prop_assert!((0.0..=1.0).contains(&ov));
        if let Some(r) = cross_time_correlation(&ms, 0).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
        Ok(())
    });
    named("temporal bounds", r)?;

    let r = runner.run(&(any::<u64>(), 0usize..3), |(seed, a)| {
        let arch = Arch::ALL[a];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = NetworkParams::init(arch, 3, &mut rng);
        let ck = Checkpoint::new(Task::Memory, DelayRegime::RANDOM, seed, TrainConfig::default(), params, None);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, ck.clone());
        let ep = inforelay::taskgen::generate_dataset(Task::Memory, 8, DelayRegime::RANDOM, seed).unwrap();
        let plain = predict(&ck.params, &ep[0]).unwrap().map(f64::to_bits);
        let ko = forward_with_knockout(&ck.params, &ep[0], &[], 10).unwrap().map(f64::to_bits);
        prop_assert_eq!(plain, ko);
        Ok(())
    });
    named("checkpoint and no-op knockout", r)
}

#[test]
fn criterion_8_numerical_core() {
    let grad = Arch::ALL
        .iter()
        .flat_map(|&a| (0..2).map(move |s| gradient_error(a, 100 + s)))
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ortho: f64 = 0.0;
    for _ in 0..20 {
        let pts: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
        ortho = ortho.max(orthonormality_error(&pts, 5));
    }
    if let Some(params) = group(Task::Memory, Arch::Lstm, DelayRegime::RANDOM)[0].params() {
        let ds = inforelay::taskgen::generate_dataset(Task::Memory, 80, DelayRegime::FixedEval(5), 3).unwrap();
        let trace = record_traces(params, &ds).unwrap();
        ortho = ortho.max(orthonormality_error(&trace.states_at(10), HIDDEN));
    }
    let props = invariants_hold();
    let pass = grad <= 1e-4 && ortho <= 1e-9 && props.is_ok();
    report(
        8,
        pass,
        &format!(
            "(max relative gradient error {grad:e}, max orthonormality error {ortho:e}, invariants {})",
            props.as_ref().map(|_| "ok".to_string()).unwrap_or_else(|e| e.clone())
        ),
    );
    assert!(pass);
}
