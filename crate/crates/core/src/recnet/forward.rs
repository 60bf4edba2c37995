use super::params::{Arch, GateParams, NetworkParams, HIDDEN, OUTPUTS};
use crate::error::{Error, Result};
use crate::taskgen::Episode;

pub type State = [f64; HIDDEN];

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = bias + x·w_in + h·w_rec`.
#[inline]
fn affine(g: &GateParams, x: &[f64], h: &State, out: &mut [f64]) {
    out.copy_from_slice(&g.bias);
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            let row = &g.w_in[i * HIDDEN..(i + 1) * HIDDEN];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
    rec_acc(&g.w_rec, h, out);
}

#[inline]
fn rec_acc(w_rec: &[f64], h: &State, out: &mut [f64]) {
    for (k, &hk) in h.iter().enumerate() {
        if hk != 0.0 {
            let row = &w_rec[k * HIDDEN..(k + 1) * HIDDEN];
            for (o, w) in out.iter_mut().zip(row) {
                *o += hk * w;
            }
        }
    }
}

/// Width of the per-step activation record for an architecture.
pub(crate) fn record_width(arch: Arch) -> usize {
    match arch {
        Arch::Rnn => HIDDEN,
        // reset, update, candidate, and the recurrent candidate term
        Arch::Gru => 4 * HIDDEN,
        Arch::Lstm => 4 * HIDDEN,
    }
}

/// One recurrent update. `gates` receives the post-nonlinearity gate values
/// (see [`record_width`]) for use by backpropagation.
pub(crate) fn step(
    params: &NetworkParams,
    x: &[f64],
    h_prev: &State,
    c_prev: &State,
    h: &mut State,
    c: &mut State,
    gates: &mut [f64],
) {
    match params.arch {
        Arch::Rnn => {
            affine(&params.gates[0], x, h_prev, &mut gates[..HIDDEN]);
            for j in 0..HIDDEN {
                gates[j] = gates[j].tanh();
                h[j] = gates[j];
            }
            *c = [0.0; HIDDEN];
        }
        Arch::Gru => {
            let (r, rest) = gates.split_at_mut(HIDDEN);
            let (z, rest) = rest.split_at_mut(HIDDEN);
            let (n, u) = rest.split_at_mut(HIDDEN);
            affine(&params.gates[0], x, h_prev, r);
            affine(&params.gates[1], x, h_prev, z);
            let cand = &params.gates[2];
            u.fill(0.0);
            rec_acc(&cand.w_rec, h_prev, u);
            n.copy_from_slice(&cand.bias);
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    for (o, w) in n.iter_mut().zip(&cand.w_in[i * HIDDEN..(i + 1) * HIDDEN]) {
                        *o += xi * w;
                    }
                }
            }
            for j in 0..HIDDEN {
                r[j] = sigmoid(r[j]);
                z[j] = sigmoid(z[j]);
                n[j] = (n[j] + r[j] * u[j]).tanh();
                h[j] = (1.0 - z[j]) * n[j] + z[j] * h_prev[j];
            }
            *c = [0.0; HIDDEN];
        }
        Arch::Lstm => {
            let (i_g, rest) = gates.split_at_mut(HIDDEN);
            let (f_g, rest) = rest.split_at_mut(HIDDEN);
            let (g_g, o_g) = rest.split_at_mut(HIDDEN);
            affine(&params.gates[0], x, h_prev, i_g);
            affine(&params.gates[1], x, h_prev, f_g);
            affine(&params.gates[2], x, h_prev, g_g);
            affine(&params.gates[3], x, h_prev, o_g);
            for j in 0..HIDDEN {
                i_g[j] = sigmoid(i_g[j]);
                f_g[j] = sigmoid(f_g[j]);
                g_g[j] = g_g[j].tanh();
                o_g[j] = sigmoid(o_g[j]);
                c[j] = f_g[j] * c_prev[j] + i_g[j] * g_g[j];
                h[j] = o_g[j] * c[j].tanh();
            }
        }
    }
}

/// `tanh(h·w_out + b_out)`.
pub fn readout(params: &NetworkParams, h: &State) -> [f64; OUTPUTS] {
    let mut y = [0.0; OUTPUTS];
    for (m, ym) in y.iter_mut().enumerate() {
        let mut acc = params.b_out[m];
        for (k, &hk) in h.iter().enumerate() {
            acc += hk * params.w_out[k * OUTPUTS + m];
        }
        *ym = acc.tanh();
    }
    y
}

/// Node knockout: hidden (and LSTM cell) entries listed in `nodes` are set to
/// 0.0 right after the update at step `time`. With `persistent`, they are
/// zeroed again after every later step too.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Knockout {
    mask: [bool; HIDDEN],
    pub time: usize,
    pub persistent: bool,
}

impl Knockout {
    pub fn new(nodes: &[usize], time: usize) -> Result<Self> {
        let mut mask = [false; HIDDEN];
        for &n in nodes {
            if n >= HIDDEN {
                return Err(Error::invalid(format!("node index {n} out of range 0..{HIDDEN}")));
            }
            mask[n] = true;
        }
        Ok(Knockout {
            mask,
            time,
            persistent: false,
        })
    }

    pub fn persistent(mut self, persistent: bool) -> Self {
        self.persistent = persistent;
        self
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    fn applies_at(&self, t: usize) -> bool {
        t == self.time || (self.persistent && t > self.time)
    }

    fn apply(&self, h: &mut State, c: &mut State) {
        for j in 0..HIDDEN {
            if self.mask[j] {
                h[j] = 0.0;
                c[j] = 0.0;
            }
        }
    }
}

/// Hidden trace (`T × 12`), cell trace for LSTM, and the final readout.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub hidden: Vec<f64>,
    pub cell: Option<Vec<f64>>,
    pub output: [f64; OUTPUTS],
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.hidden.len() / HIDDEN
    }

    pub fn hidden_at(&self, t: usize) -> &[f64] {
        &self.hidden[t * HIDDEN..(t + 1) * HIDDEN]
    }
}

pub(crate) fn check_input(params: &NetworkParams, episode: &Episode) -> Result<()> {
    if episode.channels() != params.input_dim {
        return Err(Error::invalid(format!(
            "episode has {} channels, network expects {}",
            episode.channels(),
            params.input_dim
        )));
    }
    Ok(())
}

/// Runs the network over an episode from `h_0 = c_0 = 0`, recording every state.
pub fn forward(params: &NetworkParams, episode: &Episode) -> Result<ForwardTrace> {
    forward_with(params, episode, None)
}

pub fn forward_with(
    params: &NetworkParams,
    episode: &Episode,
    knockout: Option<&Knockout>,
) -> Result<ForwardTrace> {
    check_input(params, episode)?;
    if let Some(ko) = knockout {
        if ko.time >= episode.steps() {
            return Err(Error::invalid(format!(
                "knockout time {} outside episode of length {}",
                ko.time,
                episode.steps()
            )));
        }
    }
    let steps = episode.steps();
    let lstm = params.arch == Arch::Lstm;
    let mut hidden = Vec::with_capacity(steps * HIDDEN);
    let mut cell = lstm.then(|| Vec::with_capacity(steps * HIDDEN));
    let mut gates = vec![0.0; record_width(params.arch)];
    let (mut h, mut c) = ([0.0; HIDDEN], [0.0; HIDDEN]);
    let (mut h_next, mut c_next) = ([0.0; HIDDEN], [0.0; HIDDEN]);
    for t in 0..steps {
        step(params, episode.row(t), &h, &c, &mut h_next, &mut c_next, &mut gates);
        if let Some(ko) = knockout.filter(|ko| ko.applies_at(t)) {
            ko.apply(&mut h_next, &mut c_next);
        }
        std::mem::swap(&mut h, &mut h_next);
        std::mem::swap(&mut c, &mut c_next);
        hidden.extend_from_slice(&h);
        if let Some(cell) = cell.as_mut() {
            cell.extend_from_slice(&c);
        }
    }
    Ok(ForwardTrace {
        hidden,
        cell,
        output: readout(params, &h),
    })
}

/// Final readout only.
pub fn predict(params: &NetworkParams, episode: &Episode) -> Result<[f64; OUTPUTS]> {
    predict_with(params, episode, None)
}

pub fn predict_with(
    params: &NetworkParams,
    episode: &Episode,
    knockout: Option<&Knockout>,
) -> Result<[f64; OUTPUTS]> {
    check_input(params, episode)?;
    if let Some(ko) = knockout {
        if ko.time >= episode.steps() {
            return Err(Error::invalid(format!(
                "knockout time {} outside episode of length {}",
                ko.time,
                episode.steps()
            )));
        }
    }
    let mut gates = vec![0.0; record_width(params.arch)];
    let (mut h, mut c) = ([0.0; HIDDEN], [0.0; HIDDEN]);
    let (mut h_next, mut c_next) = ([0.0; HIDDEN], [0.0; HIDDEN]);
    for t in 0..episode.steps() {
        step(params, episode.row(t), &h, &c, &mut h_next, &mut c_next, &mut gates);
        if let Some(ko) = knockout.filter(|ko| ko.applies_at(t)) {
            ko.apply(&mut h_next, &mut c_next);
        }
        std::mem::swap(&mut h, &mut h_next);
        std::mem::swap(&mut c, &mut c_next);
    }
    Ok(readout(params, &h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate_memory_episode, ConceptLabels, MEMORY_INJECTION_TIMES};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(delay: usize) -> Episode {
        generate_memory_episode(ConceptLabels::from_state(6), delay, MEMORY_INJECTION_TIMES).unwrap()
    }

    #[test]
    fn zero_rnn_stays_zero() {
        let p = NetworkParams::zeros(Arch::Rnn, 3);
        let tr = forward(&p, &episode(3)).unwrap();
        assert!(tr.hidden.iter().all(|&v| v == 0.0));
        assert_eq!(tr.output, [0.0; 3]);
        assert!(tr.cell.is_none());
    }

    #[test]
    fn lstm_with_nothing_written_keeps_cell_zero() {
        let mut p = NetworkParams::zeros(Arch::Lstm, 3);
        p.gates[1].bias = vec![10.0; HIDDEN];
        let zeros = Episode::from_rows(vec![0.0; 8 * 3], 3, ConceptLabels::from_state(0), 0, None).unwrap();
        let tr = forward(&p, &zeros).unwrap();
        assert!(tr.cell.unwrap().iter().all(|&v| v == 0.0));
    }

    /// Scalar re-implementation of the GRU equations, unit by unit.
    fn gru_reference(p: &NetworkParams, ep: &Episode) -> Vec<f64> {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let d = p.input_dim;
        let mut h = vec![0.0; HIDDEN];
        let mut out = Vec::new();
        for t in 0..ep.steps() {
            let x = ep.row(t);
            let pre = |g: usize, j: usize, hv: &[f64]| {
                let gp = &p.gates[g];
                let mut a = gp.bias[j];
                for i in 0..d {
                    a += x[i] * gp.w_in[i * HIDDEN + j];
                }
                for k in 0..HIDDEN {
                    a += hv[k] * gp.w_rec[k * HIDDEN + j];
                }
                a
            };
            let mut next = vec![0.0; HIDDEN];
            for j in 0..HIDDEN {
                let r = sig(pre(0, j, &h));
                let z = sig(pre(1, j, &h));
                let gp = &p.gates[2];
                let mut xin = gp.bias[j];
                for i in 0..d {
                    xin += x[i] * gp.w_in[i * HIDDEN + j];
                }
                let mut rec = 0.0;
                for k in 0..HIDDEN {
                    rec += h[k] * gp.w_rec[k * HIDDEN + j];
                }
                let n = (xin + r * rec).tanh();
                next[j] = (1.0 - z) * n + z * h[j];
            }
            h = next;
            out.extend_from_slice(&h);
        }
        out
    }

    #[test]
    fn gru_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = NetworkParams::init(Arch::Gru, 3, &mut rng);
        let mut inputs = vec![0.0; 9];
        for v in inputs.iter_mut() {
            *v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
        }
        let ep = Episode::from_rows(inputs, 3, ConceptLabels::from_state(1), 0, None).unwrap();
        let tr = forward(&p, &ep).unwrap();
        let reference = gru_reference(&p, &ep);
        for (a, b) in tr.hidden.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = NetworkParams::zeros(Arch::Rnn, 16);
        assert!(matches!(forward(&p, &episode(1)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn predict_matches_forward_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for arch in Arch::ALL {
            let p = NetworkParams::init(arch, 3, &mut rng);
            let ep = episode(4);
            assert_eq!(predict(&p, &ep).unwrap(), forward(&p, &ep).unwrap().output);
        }
    }

    #[test]
    fn rnn_and_gru_hidden_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for arch in [Arch::Rnn, Arch::Gru] {
            let mut p = NetworkParams::init(arch, 3, &mut rng);
            for v in p.values_mut() {
                *v *= 4.0;
            }
            let tr = forward(&p, &episode(5)).unwrap();
            assert!(tr.hidden.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
