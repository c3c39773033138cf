use rand::Rng;

use super::tape::{NodeId, Tape};
use super::tensor::{ParamId, ParamStore};
use crate::{Error, Result};

/// Single-layer LSTM cell.
///
/// The four gates share one stacked weight of shape `[4H, D + H]` applied to
/// `[input; h_prev]`, with rows ordered input, forget, cell candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub input_size: usize,
    pub state_size: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl LstmCell {
    /// Glorot-uniform weights, zero biases except the forget gate at 1.0.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        state_size: usize,
        rng: &mut R,
    ) -> Self {
        let cols = input_size + state_size;
        let bound = (6.0 / (cols + state_size) as f64).sqrt();
        let weight = store.uniform(
            format!("{name}.weight"),
            &[4 * state_size, cols],
            bound,
            rng,
        );
        let bias = store.zeros(format!("{name}.bias"), &[4 * state_size]);
        let cell = LstmCell {
            input_size,
            state_size,
            weight,
            bias,
        };
        cell.gate_bias_mut(store, Gate::Forget).fill(1.0);
        cell
    }

    pub fn gate_bias_mut<'a>(&self, store: &'a mut ParamStore, gate: Gate) -> &'a mut [f64] {
        let h = self.state_size;
        let g = gate as usize;
        &mut store.data_mut(self.bias)[g * h..(g + 1) * h]
    }

    /// Rows of the stacked weight belonging to `gate`.
    pub fn gate_weight_mut<'a>(&self, store: &'a mut ParamStore, gate: Gate) -> &'a mut [f64] {
        let h = self.state_size;
        let cols = self.input_size + h;
        let g = gate as usize;
        &mut store.data_mut(self.weight)[g * h * cols..(g + 1) * h * cols]
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    /// Record one step on the tape; returns `(h, c)`.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: NodeId,
        h_prev: NodeId,
        c_prev: NodeId,
    ) -> (NodeId, NodeId) {
        let h = self.state_size;
        let xh = tape.concat(&[input, h_prev]);
        let pre = tape.affine(store, self.weight, Some(self.bias), xh);
        let i_pre = tape.slice(pre, 0, h);
        let f_pre = tape.slice(pre, h, h);
        let g_pre = tape.slice(pre, 2 * h, h);
        let o_pre = tape.slice(pre, 3 * h, h);
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let kept = tape.mul(f, c_prev);
        let written = tape.mul(i, g);
        let c = tape.add(kept, written);
        let c_act = tape.tanh(c);
        let h_out = tape.mul(o, c_act);
        (h_out, c)
    }

    /// Run over a sequence of input nodes from zero state; returns every hidden state.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, inputs: &[NodeId]) -> Vec<NodeId> {
        let mut h = tape.zeros(self.state_size);
        let mut c = tape.zeros(self.state_size);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let (h2, c2) = self.step(tape, store, x, h, c);
            h = h2;
            c = c2;
            out.push(h);
        }
        out
    }
}

/// One LSTM step on plain vectors.
pub fn lstm_step(
    cell: &LstmCell,
    store: &ParamStore,
    input: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if input.len() != cell.input_size {
        return Err(Error::Shape(format!(
            "lstm input has {} elements, cell expects {}",
            input.len(),
            cell.input_size
        )));
    }
    if h_prev.len() != cell.state_size || c_prev.len() != cell.state_size {
        return Err(Error::Shape(format!(
            "lstm state lengths ({}, {}) do not match state size {}",
            h_prev.len(),
            c_prev.len(),
            cell.state_size
        )));
    }
    let mut tape = Tape::new();
    let x = tape.input(input.to_vec());
    let h = tape.input(h_prev.to_vec());
    let c = tape.input(c_prev.to_vec());
    let (h, c) = cell.step(&mut tape, store, x, h, c);
    Ok((tape.value(h).to_vec(), tape.value(c).to_vec()))
}
