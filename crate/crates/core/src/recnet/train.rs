use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_update, AdamConfig, AdamState};
use super::backprop::{accumulate_batch, batch_loss, Tape};
use super::forward::{forward, predict};
use super::params::{Arch, NetworkParams, HIDDEN, OUTPUTS};
use crate::error::{Error, Result};
use crate::taskgen::{generate_dataset, DelayRegime, Episode, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub train_size: usize,
    pub eval_size: usize,
    pub max_epochs: usize,
    pub max_restarts: usize,
    pub target_accuracy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            train_size: 800,
            eval_size: 400,
            max_epochs: 2000,
            max_restarts: 5,
            target_accuracy: 0.98,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch size and epoch cap must be positive"));
        }
        if self.train_size == 0 || !self.train_size.is_multiple_of(8) || self.eval_size == 0 || !self.eval_size.is_multiple_of(8) {
            return Err(Error::invalid("dataset sizes must be positive multiples of 8"));
        }
        if !(self.adam.lr.is_finite() && self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::invalid("invalid Adam hyperparameters"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_accuracy: f64,
    /// Epochs run by the returned network (the last attempt).
    pub epochs_used: usize,
    pub restarts: usize,
    /// Training-set loss before the first update.
    pub initial_loss: f64,
    /// Mean training loss of each epoch of the returned network.
    pub loss_curve: Vec<f64>,
}

/// Overall accuracy is the mean of the three per-concept accuracies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    pub per_concept: [f64; 3],
}

/// A concept is classified correctly when the output has the label's sign;
/// an output of exactly zero is always wrong.
pub fn concept_correct(output: &[f64; OUTPUTS], labels: [i8; 3]) -> [bool; 3] {
    let mut ok = [false; 3];
    for i in 0..3 {
        ok[i] = output[i] * f64::from(labels[i]) > 0.0;
    }
    ok
}

pub fn accuracy_from_outputs(outputs: &[[f64; OUTPUTS]], episodes: &[Episode]) -> Result<Accuracy> {
    if episodes.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    let mut hits = [0usize; 3];
    for (y, ep) in outputs.iter().zip(episodes) {
        for (h, ok) in hits.iter_mut().zip(concept_correct(y, ep.labels.as_array())) {
            *h += usize::from(ok);
        }
    }
    let n = episodes.len() as f64;
    let per_concept = hits.map(|h| h as f64 / n);
    Ok(Accuracy {
        overall: per_concept.iter().sum::<f64>() / 3.0,
        per_concept,
    })
}

pub fn evaluate_accuracy(params: &NetworkParams, dataset: &[Episode]) -> Result<Accuracy> {
    let outputs = dataset.iter().map(|ep| predict(params, ep)).collect::<Result<Vec<_>>>()?;
    accuracy_from_outputs(&outputs, dataset)
}

/// Trains one network: restarts from fresh weights whenever the epoch cap is
/// hit, until the held-out accuracy reaches the target or restarts run out.
pub fn train(
    arch: Arch,
    task: Task,
    regime: DelayRegime,
    rng_seed: u64,
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    config.validate()?;
    if !regime.is_training() {
        return Err(Error::invalid(format!("{regime} is an evaluation-only regime")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let train_set = generate_dataset(task, config.train_size, regime, rng.gen())?;
    let eval_set = generate_dataset(task, config.eval_size, regime, rng.gen())?;
    let resample = matches!(regime, DelayRegime::UniformRandom { .. });

    let mut best: Option<TrainReport> = None;
    for attempt in 0..=config.max_restarts {
        let mut params = NetworkParams::init(arch, task.input_dim(), &mut rng);
        let (params, report, reached) =
            train_attempt(&mut params, &train_set, &eval_set, regime, resample, attempt, config, &mut rng)?;
        if reached {
            return Ok((params, report));
        }
        if best.as_ref().is_none_or(|b| report.final_accuracy > b.final_accuracy) {
            best = Some(report);
        }
    }
    let mut best = best.expect("at least one attempt");
    best.restarts = config.max_restarts;
    Err(Error::TrainingFailed(Box::new(best)))
}

#[allow(clippy::too_many_arguments)]
fn train_attempt(
    params: &mut NetworkParams,
    train_set: &[Episode],
    eval_set: &[Episode],
    regime: DelayRegime,
    resample: bool,
    attempt: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(NetworkParams, TrainReport, bool)> {
    let targets: Vec<[f64; OUTPUTS]> = train_set.iter().map(|e| e.labels.targets()).collect();
    let refs: Vec<&Episode> = train_set.iter().collect();
    let initial_loss = batch_loss(params, &refs, &targets)?;

    let mut state = AdamState::new(params.len());
    let mut tape = Tape::default();
    let mut grad = params.zeros_like();
    let mut flat = params.to_flat();
    let mut flat_grad = vec![0.0; flat.len()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_set: Vec<Episode> = train_set.to_vec();
    let mut loss_curve = Vec::new();
    let mut accuracy = 0.0;

    for epoch in 1..=config.max_epochs {
        if resample {
            for (dst, src) in epoch_set.iter_mut().zip(train_set) {
                *dst = src.with_delay(regime.sample(rng));
            }
        }
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Episode> = chunk.iter().map(|&i| &epoch_set[i]).collect();
            let batch_targets: Vec<[f64; OUTPUTS]> = chunk.iter().map(|&i| targets[i]).collect();
            for g in grad.values_mut() {
                *g = 0.0;
            }
            let loss = accumulate_batch(params, &batch, &batch_targets, &mut tape, &mut grad)?;
            epoch_loss += loss * chunk.len() as f64;
            for (dst, &g) in flat_grad.iter_mut().zip(grad.values()) {
                *dst = g;
            }
            adam_update(&mut flat, &flat_grad, &mut state, &config.adam);
            for (dst, &v) in params.values_mut().zip(&flat) {
                *dst = v;
            }
        }
        loss_curve.push(epoch_loss / train_set.len() as f64);
        accuracy = evaluate_accuracy(params, eval_set)?.overall;
        if accuracy >= config.target_accuracy {
            let report = TrainReport {
                final_accuracy: accuracy,
                epochs_used: epoch,
                restarts: attempt,
                initial_loss,
                loss_curve,
            };
            return Ok((params.clone(), report, true));
        }
    }
    let report = TrainReport {
        final_accuracy: accuracy,
        epochs_used: config.max_epochs,
        restarts: attempt,
        initial_loss,
        loss_curve,
    };
    Ok((params.clone(), report, false))
}

/// Recorded states for every episode × step × node, plus final outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTensor {
    pub arch: Arch,
    pub episodes: usize,
    pub steps: usize,
    /// `episodes × steps × 12`.
    pub hidden: Vec<f64>,
    /// Same layout as `hidden`, LSTM only.
    pub cell: Option<Vec<f64>>,
    pub outputs: Vec<[f64; OUTPUTS]>,
}

impl TraceTensor {
    fn offset(&self, episode: usize, t: usize) -> usize {
        (episode * self.steps + t) * HIDDEN
    }

    pub fn hidden_at(&self, episode: usize, t: usize) -> &[f64] {
        let o = self.offset(episode, t);
        &self.hidden[o..o + HIDDEN]
    }

    pub fn cell_at(&self, episode: usize, t: usize) -> Option<&[f64]> {
        let o = self.offset(episode, t);
        self.cell.as_ref().map(|c| &c[o..o + HIDDEN])
    }

    /// One node's hidden value across all episodes at step `t`.
    pub fn node_column(&self, t: usize, node: usize) -> Vec<f64> {
        (0..self.episodes).map(|e| self.hidden_at(e, t)[node]).collect()
    }

    /// `episodes × 12` hidden states at step `t`, row-major.
    pub fn states_at(&self, t: usize) -> Vec<f64> {
        (0..self.episodes).flat_map(|e| self.hidden_at(e, t).iter().copied()).collect()
    }
}

/// Runs every episode forward and keeps all states. Episodes must share a length.
pub fn record_traces(params: &NetworkParams, dataset: &[Episode]) -> Result<TraceTensor> {
    let first = dataset.first().ok_or_else(|| Error::invalid("empty dataset"))?;
    let steps = first.steps();
    if dataset.iter().any(|e| e.steps() != steps) {
        return Err(Error::invalid("all episodes in a trace must have the same length"));
    }
    let lstm = params.arch == Arch::Lstm;
    let mut hidden = Vec::with_capacity(dataset.len() * steps * HIDDEN);
    let mut cell = lstm.then(|| Vec::with_capacity(dataset.len() * steps * HIDDEN));
    let mut outputs = Vec::with_capacity(dataset.len());
    for ep in dataset {
        let tr = forward(params, ep)?;
        hidden.extend_from_slice(&tr.hidden);
        if let (Some(dst), Some(src)) = (cell.as_mut(), tr.cell.as_ref()) {
            dst.extend_from_slice(src);
        }
        outputs.push(tr.output);
    }
    Ok(TraceTensor {
        arch: params.arch,
        episodes: dataset.len(),
        steps,
        hidden,
        cell,
        outputs,
    })
}
