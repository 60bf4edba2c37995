use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, AnalysisConfig};
use crate::ablation::{attach_random_baseline, knockout_sweep_with, KnockoutSweep};
use crate::error::{Error, Result};
use crate::infotheory::{concept_orderings, NodeOrdering, RelayMatrix};
use crate::latent::{
    pca2, random_removal_baseline, removal_curve, shuffled_silhouette, silhouette, state_labels, write_points_csv,
    write_removal_rows, Pca2, RemovalRow, REMOVAL_HEADER,
};
use crate::recnet::{evaluate_accuracy, record_traces, Accuracy, NetworkParams, TraceTensor, HIDDEN};
use crate::taskgen::{generate_dataset, Concept, ConceptLabels, DelayRegime, Episode, Task};
use crate::temporal::{
    cross_time_correlation, information_overlap, kmeans2_binarize, relay_over_time_from_trace, usage_histograms,
    write_temporal_csv, UsageHistograms,
};

/// Delays `0..EVAL_DELAYS` used for the generalization table.
pub const EVAL_DELAYS: usize = 10;

/// First step after the last content input.
pub fn analysis_time(task: Task) -> usize {
    task.content_len()
}

/// First step of the window for cross-time statistics: the last content step.
pub fn window_start(task: Task) -> usize {
    task.content_len() - 1
}

/// Delay of the analysis dataset: the training delay, or the longest one for random regimes.
pub fn analysis_delay(regime: DelayRegime) -> usize {
    regime.max_delay()
}

pub fn analysis_dataset(task: Task, regime: DelayRegime, episodes: usize, seed: u64) -> Result<Vec<Episode>> {
    generate_dataset(task, episodes, DelayRegime::FixedEval(analysis_delay(regime)), seed)
}

/// Accuracy at each delay `0..EVAL_DELAYS` on fresh balanced datasets.
pub fn delay_accuracy(params: &NetworkParams, task: Task, episodes: usize, seed: u64) -> Result<Vec<Accuracy>> {
    (0..EVAL_DELAYS)
        .map(|d| {
            let ds = generate_dataset(task, episodes, DelayRegime::FixedEval(d), derive_seed(seed, &format!("delay{d}")))?;
            evaluate_accuracy(params, &ds)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptRemoval {
    pub concept: Concept,
    pub targeted: Vec<RemovalRow>,
    pub random: Vec<RemovalRow>,
}

/// Everything computed for one trained network.
#[derive(Clone, Debug)]
pub struct NetworkAnalysis {
    pub task: Task,
    pub time: usize,
    pub delay_accuracy: Vec<Accuracy>,
    pub labels: Vec<ConceptLabels>,
    pub trace: TraceTensor,
    pub orderings: [NodeOrdering; 3],
    pub relay: RelayMatrix,
    pub knockout: KnockoutSweep,
    pub over_time: Vec<RelayMatrix>,
    pub correlation: Option<f64>,
    pub overlap: f64,
    pub usage: UsageHistograms,
    pub pca: Pca2,
    pub state_silhouette: f64,
    pub shuffled_state_silhouette: f64,
    pub removal: Vec<ConceptRemoval>,
}

pub fn analyze_network(
    params: &NetworkParams,
    task: Task,
    regime: DelayRegime,
    cfg: &AnalysisConfig,
    seed: u64,
) -> Result<NetworkAnalysis> {
    cfg.validate()?;
    if params.input_dim != task.input_dim() {
        return Err(Error::invalid(format!("network input width does not fit the {task} task")));
    }
    let delay_accuracy = delay_accuracy(params, task, cfg.episodes, seed)?;
    let dataset = analysis_dataset(task, regime, cfg.episodes, derive_seed(seed, "analysis"))?;
    let labels: Vec<ConceptLabels> = dataset.iter().map(|e| e.labels).collect();
    let trace = record_traces(params, &dataset)?;
    let time = analysis_time(task);

    let orderings = concept_orderings(&trace, &labels, time, cfg.state_source)?;
    let relay = RelayMatrix::from_orderings(&orderings, time);

    let mut knockout = knockout_sweep_with(params, &dataset, &orderings, time, cfg.persistent_knockout)?;
    attach_random_baseline(
        &mut knockout,
        params,
        &dataset,
        cfg.knockout_samples,
        time,
        derive_seed(seed, "knockout"),
        cfg.persistent_knockout,
    )?;

    let over_time = relay_over_time_from_trace(&trace, &labels, cfg.state_source)?;
    let correlation = cross_time_correlation(&over_time, window_start(task))?;
    let overlap = information_overlap(&over_time, window_start(task))?;
    let usage = usage_histograms(&kmeans2_binarize(&relay))?;

    let pca = pca2(&trace.states_at(time), HIDDEN)?;
    let states = state_labels(&labels);
    let state_silhouette = silhouette(&pca.projected, &states)?;
    let shuffled_state_silhouette = shuffled_silhouette(
        &pca.projected,
        &states,
        cfg.shuffle_permutations,
        derive_seed(seed, "shuffle"),
    )?;
    let removal = Concept::ALL
        .iter()
        .map(|&c| {
            Ok(ConceptRemoval {
                concept: c,
                targeted: removal_curve(&trace, time, &labels, &orderings[c.index()], c)?,
                random: random_removal_baseline(
                    &trace,
                    time,
                    &labels,
                    c,
                    cfg.removal_samples,
                    derive_seed(seed, "removal"),
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(NetworkAnalysis {
        task,
        time,
        delay_accuracy,
        labels,
        trace,
        orderings,
        relay,
        knockout,
        over_time,
        correlation,
        overlap,
        usage,
        pca,
        state_silhouette,
        shuffled_state_silhouette,
        removal,
    })
}

fn to_csv<F>(write: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn flush<W: std::io::Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn write_delay_accuracy_csv<W: std::io::Write>(rows: &[Accuracy], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delay", "overall", "acc_a", "acc_b", "acc_c"])?;
    for (d, a) in rows.iter().enumerate() {
        w.write_record([
            d.to_string(),
            a.overall.to_string(),
            a.per_concept[0].to_string(),
            a.per_concept[1].to_string(),
            a.per_concept[2].to_string(),
        ])?;
    }
    flush(w)
}

pub fn write_usage_csv<W: std::io::Write>(usage: &UsageHistograms, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["histogram", "bin", "fraction"])?;
    for (bin, f) in usage.concepts_per_node.iter().enumerate() {
        w.write_record(["concepts_per_node".to_string(), bin.to_string(), f.to_string()])?;
    }
    for (bin, f) in usage.nodes_per_concept.iter().enumerate() {
        w.write_record(["nodes_per_concept".to_string(), bin.to_string(), f.to_string()])?;
    }
    flush(w)
}

impl NetworkAnalysis {
    /// All output tables as `(file name, contents)`, in a fixed order.
    pub fn tables(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let mut files = vec![
            (
                "delay_accuracy.csv".to_string(),
                to_csv(|b| write_delay_accuracy_csv(&self.delay_accuracy, b))?,
            ),
            ("relay_matrix.csv".to_string(), to_csv(|b| self.relay.write_csv(b))?),
        ];
        for c in Concept::ALL {
            files.push((
                format!("ordering_{c}.csv"),
                to_csv(|b| self.orderings[c.index()].write_csv(b))?,
            ));
        }
        files.push(("knockout.csv".to_string(), to_csv(|b| self.knockout.write_csv(b))?));
        files.push(("temporal.csv".to_string(), to_csv(|b| write_temporal_csv(&self.over_time, b))?));
        files.push(("usage.csv".to_string(), to_csv(|b| write_usage_csv(&self.usage, b))?));
        files.push((
            "latent.csv".to_string(),
            to_csv(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(REMOVAL_HEADER)?;
                for r in &self.removal {
                    write_removal_rows(&mut w, r.concept, "targeted", &r.targeted)?;
                    write_removal_rows(&mut w, r.concept, "random", &r.random)?;
                }
                flush(w)
            })?,
        ));
        files.push((
            "pca_points.csv".to_string(),
            to_csv(|b| write_points_csv(&self.pca, &self.labels, b))?,
        ));
        Ok(files)
    }

    /// Writes every table into `dir` and returns the file names written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::new();
        for (name, bytes) in self.tables()? {
            let path = dir.join(&name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            names.push(name);
        }
        Ok(names)
    }
}
