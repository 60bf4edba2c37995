use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HIDDEN: usize = 12;
pub const OUTPUTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Rnn,
    Gru,
    Lstm,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Rnn, Arch::Gru, Arch::Lstm];

    /// Gate order: RNN `[h]`, GRU `[reset, update, candidate]`,
    /// LSTM `[input, forget, cell, output]`.
    pub fn n_gates(self) -> usize {
        match self {
            Arch::Rnn => 1,
            Arch::Gru => 3,
            Arch::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Rnn => "rnn",
            Arch::Gru => "gru",
            Arch::Lstm => "lstm",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rnn" => Ok(Arch::Rnn),
            "gru" => Ok(Arch::Gru),
            "lstm" => Ok(Arch::Lstm),
            other => Err(Error::Parse(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Weights of one gate. `w_in` is `input_dim × HIDDEN`, `w_rec` is
/// `HIDDEN × HIDDEN`, both row-major with the source unit as the row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w_in: Vec<f64>,
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GateParams {
    fn zeros(input_dim: usize) -> Self {
        GateParams {
            w_in: vec![0.0; input_dim * HIDDEN],
            w_rec: vec![0.0; HIDDEN * HIDDEN],
            bias: vec![0.0; HIDDEN],
        }
    }
}

/// All weights of a single-layer recurrent network with a 12→3 readout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Arch,
    pub input_dim: usize,
    pub gates: Vec<GateParams>,
    /// `HIDDEN × OUTPUTS`, row-major.
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(arch: Arch, input_dim: usize) -> Self {
        NetworkParams {
            arch,
            input_dim,
            gates: (0..arch.n_gates()).map(|_| GateParams::zeros(input_dim)).collect(),
            w_out: vec![0.0; HIDDEN * OUTPUTS],
            b_out: vec![0.0; OUTPUTS],
        }
    }

    /// Uniform init in `±1/sqrt(fan_in)`; fan-in is `HIDDEN` for recurrent
    /// gates and the readout.
    pub fn init<R: Rng + ?Sized>(arch: Arch, input_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, input_dim);
        let bound = 1.0 / (HIDDEN as f64).sqrt();
        for v in p.values_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch, self.input_dim)
    }

    pub fn len(&self) -> usize {
        self.arch.n_gates() * (self.input_dim * HIDDEN + HIDDEN * HIDDEN + HIDDEN)
            + HIDDEN * OUTPUTS
            + OUTPUTS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Every parameter in canonical order: per gate `w_in, w_rec, bias`, then `w_out, b_out`.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.gates
            .iter()
            .flat_map(|g| g.w_in.iter().chain(&g.w_rec).chain(&g.bias))
            .chain(&self.w_out)
            .chain(&self.b_out)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.gates
            .iter_mut()
            .flat_map(|g| g.w_in.iter_mut().chain(&mut g.w_rec).chain(&mut g.bias))
            .chain(&mut self.w_out)
            .chain(&mut self.b_out)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    /// Checks dimensions and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input width must be positive"));
        }
        if self.gates.len() != self.arch.n_gates() {
            return Err(Error::invalid(format!(
                "{} expects {} gates, found {}",
                self.arch,
                self.arch.n_gates(),
                self.gates.len()
            )));
        }
        for (i, g) in self.gates.iter().enumerate() {
            if g.w_in.len() != self.input_dim * HIDDEN
                || g.w_rec.len() != HIDDEN * HIDDEN
                || g.bias.len() != HIDDEN
            {
                return Err(Error::invalid(format!("gate {i} has wrong dimensions")));
            }
        }
        if self.w_out.len() != HIDDEN * OUTPUTS || self.b_out.len() != OUTPUTS {
            return Err(Error::invalid("readout has wrong dimensions"));
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(())
    }
}
