//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! saved network reloads bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::NetworkParams;
use super::train::{TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::taskgen::{DelayRegime, Task};

pub const CHECKPOINT_FORMAT: &str = "inforelay-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub task: Task,
    pub regime: DelayRegime,
    pub seed: u64,
    pub config: TrainConfig,
    pub params: NetworkParams,
    pub report: Option<TrainReport>,
}

impl Checkpoint {
    pub fn new(
        task: Task,
        regime: DelayRegime,
        seed: u64,
        config: TrainConfig,
        params: NetworkParams,
        report: Option<TrainReport>,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            task,
            regime,
            seed,
            config,
            params,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("unsupported checkpoint format `{}`", ck.format)));
        }
        ck.params.validate().map_err(|e| Error::Parse(e.to_string()))?;
        if ck.params.input_dim != ck.task.input_dim() {
            return Err(Error::Parse(format!(
                "{} task needs input width {}, checkpoint has {}",
                ck.task,
                ck.task.input_dim(),
                ck.params.input_dim
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recnet::Arch;
    use proptest::prelude::*;
    use rand::SeedableRng;

    proptest! {
        #[test]
        fn round_trips_bit_exactly(seed in any::<u64>(), scale in -30i32..30) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut params = NetworkParams::init(Arch::Lstm, 3, &mut rng);
            for v in params.values_mut() {
                *v *= 2f64.powi(scale);
            }
            let ck = Checkpoint::new(Task::Memory, DelayRegime::RANDOM, seed, TrainConfig::default(), params, None);
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            let a: Vec<u64> = ck.params.values().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.params.values().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back, ck);
        }
    }

    #[test]
    fn rejects_mismatched_task_width() {
        let params = NetworkParams::zeros(Arch::Rnn, 3);
        let ck = Checkpoint::new(Task::Block, DelayRegime::Fixed(2), 0, TrainConfig::default(), params, None);
        assert!(Checkpoint::from_json(&ck.to_json().unwrap()).is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_json("{}").is_err());
        assert!(Checkpoint::from_json("not json").is_err());
    }
}
