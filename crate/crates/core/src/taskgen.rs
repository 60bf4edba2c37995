//! Synthetic time-series classification tasks.
//!
//! Two tasks, each asking the network to report three binary concepts after a
//! trailing run of all-zero "delay" inputs:
//!
//! * **memory**: three sensor channels, each receiving a single ±1 pulse at a
//!   fixed step (4, 7 and 10, counted from 1). The concept is the sign of the pulse.
//! * **block**: a 16-pixel circular camera watching a block for 10 steps. The
//!   concepts are direction (left/right), size (2/4 px) and brightness
//!   (0.4/1.0 pixel value).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Injection steps of the memory task, counted from 1.
pub const MEMORY_INJECTION_TIMES: [usize; 3] = [4, 7, 10];
pub const MEMORY_CHANNELS: usize = 3;

pub const CAMERA_WIDTH: usize = 16;
pub const BLOCK_OBSERVATION_STEPS: usize = 10;
pub const BLOCK_SMALL: usize = 2;
pub const BLOCK_LARGE: usize = 4;
pub const BLOCK_BRIGHT: f64 = 1.0;
pub const BLOCK_DARK: f64 = 0.4;

/// Number of distinct label combinations (2^3).
pub const N_STATES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Memory,
    Block,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Memory, Task::Block];

    pub fn input_dim(self) -> usize {
        match self {
            Task::Memory => MEMORY_CHANNELS,
            Task::Block => CAMERA_WIDTH,
        }
    }

    /// Number of rows carrying task content, before the delay tail.
    pub fn content_len(self) -> usize {
        match self {
            Task::Memory => MEMORY_INJECTION_TIMES[2],
            Task::Block => BLOCK_OBSERVATION_STEPS,
        }
    }

    /// Step (counted from 0) at which each concept's information is complete.
    pub fn injection_rows(self) -> [usize; 3] {
        match self {
            Task::Memory => MEMORY_INJECTION_TIMES.map(|t| t - 1),
            // direction needs two frames; size and brightness are visible in the first
            Task::Block => [1, 0, 0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Memory => "memory",
            Task::Block => "block",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "memory" => Ok(Task::Memory),
            "block" => Ok(Task::Block),
            other => Err(Error::Parse(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Concept {
    A,
    B,
    C,
}

impl Concept {
    pub const ALL: [Concept; 3] = [Concept::A, Concept::B, Concept::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Concept> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Concept::A => "a",
            Concept::B => "b",
            Concept::C => "c",
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The three binary facts an episode asks for, each exactly -1 or +1.
///
/// For the block task: `a` is direction (-1 left), `b` is size (-1 small),
/// `c` is brightness (-1 dark).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptLabels {
    a: i8,
    b: i8,
    c: i8,
}

impl ConceptLabels {
    pub fn new(a: i8, b: i8, c: i8) -> Result<Self> {
        for v in [a, b, c] {
            if v != -1 && v != 1 {
                return Err(Error::invalid(format!("concept label must be -1 or +1, got {v}")));
            }
        }
        Ok(ConceptLabels { a, b, c })
    }

    /// Label combination from a state index in `0..8`; bit 2 is `a`, bit 0 is `c`.
    pub fn from_state(state: usize) -> Self {
        let bit = |k: usize| if state >> k & 1 == 1 { 1 } else { -1 };
        ConceptLabels {
            a: bit(2),
            b: bit(1),
            c: bit(0),
        }
    }

    pub fn state(&self) -> usize {
        let bit = |v: i8| usize::from(v > 0);
        bit(self.a) << 2 | bit(self.b) << 1 | bit(self.c)
    }

    pub fn get(&self, concept: Concept) -> i8 {
        match concept {
            Concept::A => self.a,
            Concept::B => self.b,
            Concept::C => self.c,
        }
    }

    pub fn as_array(&self) -> [i8; 3] {
        [self.a, self.b, self.c]
    }

    pub fn targets(&self) -> [f64; 3] {
        self.as_array().map(f64::from)
    }
}

/// One input sequence: `steps × channels` row-major inputs plus its labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    inputs: Vec<f64>,
    steps: usize,
    channels: usize,
    pub labels: ConceptLabels,
    pub delay: usize,
    /// Pulse steps (counted from 1), memory task only.
    pub injection_times: Option<[usize; 3]>,
}

impl Episode {
    /// Builds an episode from row-major inputs, checking the zero-tail invariant.
    pub fn from_rows(
        inputs: Vec<f64>,
        channels: usize,
        labels: ConceptLabels,
        delay: usize,
        injection_times: Option<[usize; 3]>,
    ) -> Result<Self> {
        if channels == 0 || !inputs.len().is_multiple_of(channels) {
            return Err(Error::invalid("input length is not a multiple of the channel count"));
        }
        let steps = inputs.len() / channels;
        if delay > steps {
            return Err(Error::invalid(format!("delay {delay} exceeds episode length {steps}")));
        }
        if inputs[(steps - delay) * channels..].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("delay rows must be all zero"));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input value"));
        }
        Ok(Episode {
            inputs,
            steps,
            channels,
            labels,
            delay,
            injection_times,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn content_len(&self) -> usize {
        self.steps - self.delay
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.channels..(t + 1) * self.channels]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Same content with a different zero tail.
    pub fn with_delay(&self, delay: usize) -> Episode {
        let content = self.content_len() * self.channels;
        let mut inputs = self.inputs[..content].to_vec();
        inputs.resize(content + delay * self.channels, 0.0);
        Episode {
            inputs,
            steps: self.content_len() + delay,
            channels: self.channels,
            labels: self.labels,
            delay,
            injection_times: self.injection_times,
        }
    }
}

/// How many zero steps are appended after the content.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DelayRegime {
    /// Training delay `k ∈ 1..=5`.
    Fixed(usize),
    /// Delay drawn uniformly from `lo..=hi` for each episode.
    UniformRandom { lo: usize, hi: usize },
    /// Evaluation-only delay `k ∈ 0..=9`.
    FixedEval(usize),
}

impl DelayRegime {
    pub const RANDOM: DelayRegime = DelayRegime::UniformRandom { lo: 1, hi: 5 };

    /// The six training regimes: fixed 1..5 and uniform random in [1,5].
    pub fn training_regimes() -> Vec<DelayRegime> {
        (1..=5).map(DelayRegime::Fixed).chain([Self::RANDOM]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DelayRegime::Fixed(k) if (1..=5).contains(&k) => Ok(()),
            DelayRegime::UniformRandom { lo, hi } if lo <= hi && hi <= 64 => Ok(()),
            DelayRegime::FixedEval(k) if k <= 9 => Ok(()),
            other => Err(Error::invalid(format!("unsupported delay regime {other}"))),
        }
    }

    pub fn is_training(&self) -> bool {
        !matches!(self, DelayRegime::FixedEval(_))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            DelayRegime::Fixed(k) | DelayRegime::FixedEval(k) => k,
            DelayRegime::UniformRandom { lo, hi } => rng.gen_range(lo..=hi),
        }
    }

    pub fn max_delay(&self) -> usize {
        match *self {
            DelayRegime::Fixed(k) | DelayRegime::FixedEval(k) => k,
            DelayRegime::UniformRandom { hi, .. } => hi,
        }
    }
}

impl fmt::Display for DelayRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DelayRegime::Fixed(k) => write!(f, "fixed:{k}"),
            DelayRegime::UniformRandom { lo: 1, hi: 5 } => f.write_str("random"),
            DelayRegime::UniformRandom { lo, hi } => write!(f, "random:{lo}-{hi}"),
            DelayRegime::FixedEval(k) => write!(f, "eval:{k}"),
        }
    }
}

impl FromStr for DelayRegime {
    type Err = Error;

    /// Accepts `fixed:K`, `random`, `random:LO-HI` and `eval:K`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("invalid delay regime `{s}`"));
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        let regime = match s.split_once(':') {
            None if s == "random" => Self::RANDOM,
            Some(("fixed", k)) => DelayRegime::Fixed(num(k)?),
            Some(("eval", k)) => DelayRegime::FixedEval(num(k)?),
            Some(("random", range)) => {
                let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
                DelayRegime::UniformRandom {
                    lo: num(lo)?,
                    hi: num(hi)?,
                }
            }
            _ => return Err(bad()),
        };
        regime.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(regime)
    }
}

impl TryFrom<String> for DelayRegime {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DelayRegime> for String {
    fn from(r: DelayRegime) -> String {
        r.to_string()
    }
}

/// Memory-task episode: a `labels_i` pulse on channel `i` at step
/// `injection_times[i]` (counted from 1), zeros elsewhere.
pub fn generate_memory_episode(
    labels: ConceptLabels,
    delay: usize,
    injection_times: [usize; 3],
) -> Result<Episode> {
    if injection_times[0] < 1 || injection_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "injection times must be strictly increasing and >= 1, got {injection_times:?}"
        )));
    }
    let steps = injection_times[2] + delay;
    let mut inputs = vec![0.0; steps * MEMORY_CHANNELS];
    for (channel, (&t, v)) in injection_times.iter().zip(labels.targets()).enumerate() {
        inputs[(t - 1) * MEMORY_CHANNELS + channel] = v;
    }
    Ok(Episode {
        inputs,
        steps,
        channels: MEMORY_CHANNELS,
        labels,
        delay,
        injection_times: Some(injection_times),
    })
}

/// Block-task episode with the block starting at pixel `start`.
pub fn block_episode_at(labels: ConceptLabels, delay: usize, start: usize) -> Episode {
    let step: isize = labels.get(Concept::A).into();
    let size = if labels.get(Concept::B) > 0 { BLOCK_LARGE } else { BLOCK_SMALL };
    let value = if labels.get(Concept::C) > 0 { BLOCK_BRIGHT } else { BLOCK_DARK };
    let width = CAMERA_WIDTH as isize;

    let steps = BLOCK_OBSERVATION_STEPS + delay;
    let mut inputs = vec![0.0; steps * CAMERA_WIDTH];
    for frame in 0..BLOCK_OBSERVATION_STEPS {
        let left = start as isize + step * frame as isize;
        for j in 0..size as isize {
            let pixel = (left + j).rem_euclid(width) as usize;
            inputs[frame * CAMERA_WIDTH + pixel] = value;
        }
    }
    Episode {
        inputs,
        steps,
        channels: CAMERA_WIDTH,
        labels,
        delay,
        injection_times: None,
    }
}

/// Block-task episode; the seed only picks the block's starting pixel.
pub fn generate_block_episode(labels: ConceptLabels, delay: usize, rng_seed: u64) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    block_episode_at(labels, delay, rng.gen_range(0..CAMERA_WIDTH))
}

/// A balanced dataset: every label combination appears exactly `n_episodes / 8` times.
pub fn generate_dataset(
    task: Task,
    n_episodes: usize,
    regime: DelayRegime,
    rng_seed: u64,
) -> Result<Vec<Episode>> {
    if n_episodes == 0 || !n_episodes.is_multiple_of(N_STATES) {
        return Err(Error::invalid(format!(
            "episode count must be a positive multiple of {N_STATES}, got {n_episodes}"
        )));
    }
    regime.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut states: Vec<usize> = (0..n_episodes).map(|i| i % N_STATES).collect();
    states.shuffle(&mut rng);

    states
        .into_iter()
        .map(|state| {
            let labels = ConceptLabels::from_state(state);
            let delay = regime.sample(&mut rng);
            match task {
                Task::Memory => generate_memory_episode(labels, delay, MEMORY_INJECTION_TIMES),
                Task::Block => Ok(block_episode_at(labels, delay, rng.gen_range(0..CAMERA_WIDTH))),
            }
        })
        .collect()
}

/// Writes the long-format dataset CSV:
/// `episode_id,t,ch0..chD-1,label_a,label_b,label_c,delay`.
pub fn write_dataset_csv<W: Write>(episodes: &[Episode], out: W) -> Result<()> {
    let channels = episodes.first().map_or(0, Episode::channels);
    if episodes.iter().any(|e| e.channels() != channels) {
        return Err(Error::invalid("episodes disagree on channel count"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["episode_id".to_string(), "t".to_string()];
    header.extend((0..channels).map(|c| format!("ch{c}")));
    header.extend(["label_a", "label_b", "label_c", "delay"].map(String::from));
    w.write_record(&header)?;

    let mut record = Vec::with_capacity(header.len());
    for (id, ep) in episodes.iter().enumerate() {
        for t in 0..ep.steps() {
            record.clear();
            record.push(id.to_string());
            record.push(t.to_string());
            record.extend(ep.row(t).iter().map(f64::to_string));
            record.extend(ep.labels.as_array().iter().map(i8::to_string));
            record.push(ep.delay.to_string());
            w.write_record(&record)?;
        }
    }
    w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
    Ok(())
}

/// Parses a dataset CSV written by [`write_dataset_csv`].
///
/// Rows must be ordered by `(episode_id, t)` with ids and steps contiguous from 0.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<Vec<Episode>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let n = header.len();
    if n < 7 || &header[0] != "episode_id" || &header[1] != "t" {
        return Err(Error::Parse("missing episode_id,t header".into()));
    }
    let channels = n - 6;
    for c in 0..channels {
        if header[2 + c] != *format!("ch{c}") {
            return Err(Error::Parse(format!("expected column ch{c}, got `{}`", &header[2 + c])));
        }
    }
    if header.iter().skip(2 + channels).ne(["label_a", "label_b", "label_c", "delay"]) {
        return Err(Error::Parse("expected label_a,label_b,label_c,delay columns".into()));
    }

    struct Pending {
        rows: Vec<f64>,
        labels: [i8; 3],
        delay: usize,
        steps: usize,
    }

    fn finish(p: Pending, channels: usize) -> Result<Episode> {
        let labels = ConceptLabels::new(p.labels[0], p.labels[1], p.labels[2])?;
        Episode::from_rows(p.rows, channels, labels, p.delay, None)
    }

    let field = |rec: &csv::StringRecord, i: usize| -> Result<String> {
        rec.get(i).map(str::to_owned).ok_or_else(|| Error::Parse("short record".into()))
    };
    let parse_err = |what: &str, v: &str| Error::Parse(format!("invalid {what} `{v}`"));

    let mut episodes = Vec::new();
    let mut current: Option<Pending> = None;
    for rec in r.records() {
        let rec = rec?;
        let id_s = field(&rec, 0)?;
        let t_s = field(&rec, 1)?;
        let id: usize = id_s.parse().map_err(|_| parse_err("episode_id", &id_s))?;
        let t: usize = t_s.parse().map_err(|_| parse_err("t", &t_s))?;
        let mut labels = [0i8; 3];
        for (k, label) in labels.iter_mut().enumerate() {
            let s = field(&rec, 2 + channels + k)?;
            *label = s.parse().map_err(|_| parse_err("label", &s))?;
        }
        let delay_s = field(&rec, 5 + channels)?;
        let delay: usize = delay_s.parse().map_err(|_| parse_err("delay", &delay_s))?;

        let starts_new = match &current {
            None => true,
            Some(_) if id == episodes.len() + 1 => true,
            Some(_) if id == episodes.len() => false,
            Some(_) => return Err(Error::Parse(format!("episode ids out of order at {id}"))),
        };
        if starts_new {
            if let Some(done) = current.take() {
                episodes.push(finish(done, channels)?);
            }
            if id != episodes.len() {
                return Err(Error::Parse(format!("episode ids out of order at {id}")));
            }
            current = Some(Pending {
                rows: Vec::new(),
                labels,
                delay,
                steps: 0,
            });
        }
        let p = current.as_mut().expect("pending episode");
        if t != p.steps {
            return Err(Error::Parse(format!("episode {id}: expected t={}, got {t}", p.steps)));
        }
        if labels != p.labels || delay != p.delay {
            return Err(Error::Parse(format!("episode {id}: labels or delay change mid-episode")));
        }
        for c in 0..channels {
            let s = field(&rec, 2 + c)?;
            p.rows.push(s.trim().parse().map_err(|_| parse_err("input value", &s))?);
        }
        p.steps += 1;
    }
    if let Some(done) = current.take() {
        episodes.push(finish(done, channels)?);
    }
    Ok(episodes)
}
