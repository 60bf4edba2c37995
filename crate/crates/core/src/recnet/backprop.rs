//! Backpropagation through time for the final-step mean-squared-error loss.

use super::forward::{check_input, readout, record_width, step, State};
use super::params::{Arch, GateParams, NetworkParams, HIDDEN, OUTPUTS};
use crate::error::{Error, Result};
use crate::taskgen::Episode;

/// Reusable per-episode activation record.
#[derive(Default)]
pub(crate) struct Tape {
    hidden: Vec<f64>,
    cell: Vec<f64>,
    gates: Vec<f64>,
}

impl Tape {
    fn run(&mut self, params: &NetworkParams, ep: &Episode) -> [f64; OUTPUTS] {
        let steps = ep.steps();
        let width = record_width(params.arch);
        self.hidden.clear();
        self.cell.clear();
        self.gates.clear();
        self.gates.resize(steps * width, 0.0);
        let (mut h, mut c) = ([0.0; HIDDEN], [0.0; HIDDEN]);
        let (mut h_next, mut c_next) = ([0.0; HIDDEN], [0.0; HIDDEN]);
        for t in 0..steps {
            let g = &mut self.gates[t * width..(t + 1) * width];
            step(params, ep.row(t), &h, &c, &mut h_next, &mut c_next, g);
            std::mem::swap(&mut h, &mut h_next);
            std::mem::swap(&mut c, &mut c_next);
            self.hidden.extend_from_slice(&h);
            self.cell.extend_from_slice(&c);
        }
        readout(params, &h)
    }

    fn state(buf: &[f64], t: usize) -> State {
        let mut s = [0.0; HIDDEN];
        s.copy_from_slice(&buf[t * HIDDEN..(t + 1) * HIDDEN]);
        s
    }

    fn prev(buf: &[f64], t: usize) -> State {
        if t == 0 {
            [0.0; HIDDEN]
        } else {
            Self::state(buf, t - 1)
        }
    }
}

/// Accumulates a gate's parameter gradients for pre-activation gradient `d`
/// and adds `w_rec · d` into `dh_prev`.
#[inline]
fn accumulate_gate(
    grad: &mut GateParams,
    gate: &GateParams,
    x: &[f64],
    h_prev: &State,
    d: &[f64],
    dh_prev: &mut State,
) {
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (g, &dj) in grad.w_in[i * HIDDEN..(i + 1) * HIDDEN].iter_mut().zip(d) {
                *g += xi * dj;
            }
        }
    }
    for k in 0..HIDDEN {
        let row = k * HIDDEN..(k + 1) * HIDDEN;
        let hk = h_prev[k];
        let mut back = 0.0;
        for ((g, &w), &dj) in grad.w_rec[row.clone()].iter_mut().zip(&gate.w_rec[row]).zip(d) {
            *g += hk * dj;
            back += w * dj;
        }
        dh_prev[k] += back;
    }
    for (g, &dj) in grad.bias.iter_mut().zip(d) {
        *g += dj;
    }
}

/// Backward pass for one episode given `dL/dy`; adds into `grad`.
fn backward(params: &NetworkParams, ep: &Episode, tape: &Tape, y: &[f64; OUTPUTS], dy: &[f64; OUTPUTS], grad: &mut NetworkParams) {
    let steps = ep.steps();
    let width = record_width(params.arch);
    let h_last = Tape::state(&tape.hidden, steps - 1);

    let mut dpre_out = [0.0; OUTPUTS];
    for m in 0..OUTPUTS {
        dpre_out[m] = dy[m] * (1.0 - y[m] * y[m]);
        grad.b_out[m] += dpre_out[m];
    }
    let mut dh = [0.0; HIDDEN];
    for k in 0..HIDDEN {
        for m in 0..OUTPUTS {
            grad.w_out[k * OUTPUTS + m] += h_last[k] * dpre_out[m];
            dh[k] += params.w_out[k * OUTPUTS + m] * dpre_out[m];
        }
    }
    let mut dc = [0.0; HIDDEN];
    let mut d = [[0.0; HIDDEN]; 4];

    for t in (0..steps).rev() {
        let x = ep.row(t);
        let gates = &tape.gates[t * width..(t + 1) * width];
        let h_prev = Tape::prev(&tape.hidden, t);
        let mut dh_prev = [0.0; HIDDEN];
        match params.arch {
            Arch::Rnn => {
                for j in 0..HIDDEN {
                    d[0][j] = dh[j] * (1.0 - gates[j] * gates[j]);
                }
                accumulate_gate(&mut grad.gates[0], &params.gates[0], x, &h_prev, &d[0], &mut dh_prev);
            }
            Arch::Gru => {
                let (r, rest) = gates.split_at(HIDDEN);
                let (z, rest) = rest.split_at(HIDDEN);
                let (n, u) = rest.split_at(HIDDEN);
                let mut du = [0.0; HIDDEN];
                for j in 0..HIDDEN {
                    let dn = dh[j] * (1.0 - z[j]);
                    let dz = dh[j] * (h_prev[j] - n[j]);
                    dh_prev[j] += dh[j] * z[j];
                    let dn_pre = dn * (1.0 - n[j] * n[j]);
                    let dr = dn_pre * u[j];
                    du[j] = dn_pre * r[j];
                    d[0][j] = dr * r[j] * (1.0 - r[j]);
                    d[1][j] = dz * z[j] * (1.0 - z[j]);
                    d[2][j] = dn_pre;
                }
                accumulate_gate(&mut grad.gates[0], &params.gates[0], x, &h_prev, &d[0], &mut dh_prev);
                accumulate_gate(&mut grad.gates[1], &params.gates[1], x, &h_prev, &d[1], &mut dh_prev);
                // candidate: input weights and bias see dn_pre, recurrent weights see du
                let cand_grad = &mut grad.gates[2];
                let cand = &params.gates[2];
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        for (g, &dj) in cand_grad.w_in[i * HIDDEN..(i + 1) * HIDDEN].iter_mut().zip(&d[2]) {
                            *g += xi * dj;
                        }
                    }
                }
                for j in 0..HIDDEN {
                    cand_grad.bias[j] += d[2][j];
                }
                for k in 0..HIDDEN {
                    let row = k * HIDDEN..(k + 1) * HIDDEN;
                    let mut back = 0.0;
                    for ((g, &w), &dj) in cand_grad.w_rec[row.clone()].iter_mut().zip(&cand.w_rec[row]).zip(&du) {
                        *g += h_prev[k] * dj;
                        back += w * dj;
                    }
                    dh_prev[k] += back;
                }
            }
            Arch::Lstm => {
                let (i_g, rest) = gates.split_at(HIDDEN);
                let (f_g, rest) = rest.split_at(HIDDEN);
                let (g_g, o_g) = rest.split_at(HIDDEN);
                let c_t = Tape::state(&tape.cell, t);
                let c_prev = Tape::prev(&tape.cell, t);
                for j in 0..HIDDEN {
                    let tc = c_t[j].tanh();
                    let dct = dc[j] + dh[j] * o_g[j] * (1.0 - tc * tc);
                    let d_o = dh[j] * tc;
                    d[0][j] = dct * g_g[j] * i_g[j] * (1.0 - i_g[j]);
                    d[1][j] = dct * c_prev[j] * f_g[j] * (1.0 - f_g[j]);
                    d[2][j] = dct * i_g[j] * (1.0 - g_g[j] * g_g[j]);
                    d[3][j] = d_o * o_g[j] * (1.0 - o_g[j]);
                    dc[j] = dct * f_g[j];
                }
                for g in 0..4 {
                    accumulate_gate(&mut grad.gates[g], &params.gates[g], x, &h_prev, &d[g], &mut dh_prev);
                }
            }
        }
        dh = dh_prev;
    }
}

/// Mean-squared-error loss over `episodes × 3` final outputs, and its exact
/// gradient with respect to every parameter.
pub fn bptt_gradients(
    params: &NetworkParams,
    episodes: &[&Episode],
    targets: &[[f64; OUTPUTS]],
) -> Result<(f64, NetworkParams)> {
    if episodes.len() != targets.len() {
        return Err(Error::invalid("episode and target counts differ"));
    }
    if episodes.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grad = params.zeros_like();
    let mut tape = Tape::default();
    let loss = accumulate_batch(params, episodes, targets, &mut tape, &mut grad)?;
    Ok((loss, grad))
}

pub(crate) fn accumulate_batch(
    params: &NetworkParams,
    episodes: &[&Episode],
    targets: &[[f64; OUTPUTS]],
    tape: &mut Tape,
    grad: &mut NetworkParams,
) -> Result<f64> {
    let scale = 1.0 / (episodes.len() * OUTPUTS) as f64;
    let mut loss = 0.0;
    for (ep, target) in episodes.iter().zip(targets) {
        check_input(params, ep)?;
        if ep.steps() == 0 {
            return Err(Error::invalid("empty episode"));
        }
        let y = tape.run(params, ep);
        let mut dy = [0.0; OUTPUTS];
        for m in 0..OUTPUTS {
            let e = y[m] - target[m];
            loss += e * e * scale;
            dy[m] = 2.0 * e * scale;
        }
        backward(params, ep, tape, &y, &dy, grad);
    }
    Ok(loss)
}

/// Loss only, for finite-difference checks.
pub fn batch_loss(params: &NetworkParams, episodes: &[&Episode], targets: &[[f64; OUTPUTS]]) -> Result<f64> {
    let mut tape = Tape::default();
    let scale = 1.0 / (episodes.len() * OUTPUTS) as f64;
    let mut loss = 0.0;
    for (ep, target) in episodes.iter().zip(targets) {
        check_input(params, ep)?;
        let y = tape.run(params, ep);
        loss += y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * scale;
    }
    Ok(loss)
}
