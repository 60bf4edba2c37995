use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::infotheory::StateSource;
use crate::recnet::{Arch, TrainConfig};
use crate::taskgen::{DelayRegime, Task, N_STATES};

/// Settings for the post-training analyses of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Balanced episodes in the analysis dataset and in each per-delay evaluation set.
    pub episodes: usize,
    /// Random node subsets per set size in the knockout baseline.
    pub knockout_samples: usize,
    /// Random removal orders in the PCA baseline.
    pub removal_samples: usize,
    /// Label permutations for the shuffled silhouette.
    pub shuffle_permutations: usize,
    /// Hold knocked-out nodes at zero for the rest of the episode.
    pub persistent_knockout: bool,
    pub state_source: StateSource,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            episodes: 800,
            knockout_samples: 50,
            removal_samples: 50,
            shuffle_permutations: 100,
            persistent_knockout: false,
            state_source: StateSource::Hidden,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || !self.episodes.is_multiple_of(N_STATES) {
            return Err(Error::invalid(format!(
                "analysis episodes must be a positive multiple of {N_STATES}"
            )));
        }
        if self.knockout_samples == 0 || self.removal_samples == 0 || self.shuffle_permutations == 0 {
            return Err(Error::invalid("baseline sample counts must be positive"));
        }
        Ok(())
    }
}

/// A full sweep: every combination of task, architecture, regime and replicate.
///
/// Loadable from TOML:
///
/// ```toml
/// tasks = ["memory"]
/// archs = ["rnn", "lstm"]
/// regimes = ["fixed:2", "random"]
/// replicates = 5
/// base_seed = 7
/// output_dir = "runs/desk"
/// workers = 2
///
/// [train]
/// max_epochs = 2000
///
/// [analysis]
/// episodes = 800
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    pub archs: Vec<Arch>,
    pub regimes: Vec<DelayRegime>,
    pub replicates: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses one per available core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tasks: Task::ALL.to_vec(),
            archs: Arch::ALL.to_vec(),
            regimes: DelayRegime::training_regimes(),
            replicates: 5,
            base_seed: 1,
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
            output_dir: PathBuf::from("runs"),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if self.tasks.is_empty() || self.archs.is_empty() || self.regimes.is_empty() {
            return Err(Error::invalid("tasks, archs and regimes must be non-empty"));
        }
        for r in &self.regimes {
            r.validate()?;
            if !r.is_training() {
                return Err(Error::invalid(format!("{r} is an evaluation-only regime")));
            }
        }
        self.train.validate()?;
        self.analysis.validate()
    }

    /// Every requested cell, sorted and without duplicates.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut cells = Vec::new();
        for &task in &self.tasks {
            for &arch in &self.archs {
                for &regime in &self.regimes {
                    for replicate in 0..self.replicates {
                        cells.push(CellKey {
                            task,
                            arch,
                            regime,
                            replicate,
                        });
                    }
                }
            }
        }
        cells.sort();
        cells.dedup();
        cells
    }
}

/// Coordinates of one trained network in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub task: Task,
    pub arch: Arch,
    pub regime: DelayRegime,
    pub replicate: usize,
}

impl CellKey {
    /// Output directory relative to the sweep root, e.g. `memory/lstm/fixed3/rep02`.
    pub fn dir(&self) -> String {
        format!("{}/{}/{}/rep{:02}", self.task, self.arch, regime_slug(self.regime), self.replicate)
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} #{}", self.task, self.arch, self.regime, self.replicate)
    }
}

/// File-system friendly regime name.
pub fn regime_slug(regime: DelayRegime) -> String {
    match regime {
        DelayRegime::Fixed(k) => format!("fixed{k}"),
        DelayRegime::UniformRandom { lo, hi } => format!("random{lo}-{hi}"),
        DelayRegime::FixedEval(k) => format!("eval{k}"),
    }
}

fn hash_to_u64(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Seed of a cell: a SHA-256 hash of the base seed and the cell coordinates.
pub fn cell_seed(base_seed: u64, key: &CellKey) -> u64 {
    hash_to_u64(&format!(
        "cell|{base_seed}|{}|{}|{}|{}",
        key.task, key.arch, key.regime, key.replicate
    ))
}

/// Independent sub-seed for one named random stream of a cell.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    hash_to_u64(&format!("stream|{seed}|{stream}"))
}
