use rand::Rng;

use super::tape::{NodeId, Tape};
use super::tensor::{ParamId, ParamStore};
use crate::{Error, Result};

/// `m = t * relu(W_H n + b_H) + (1 - t) * n` with transform gate
/// `t = sigmoid(W_T n + b_T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HighwayUnit {
    pub dim: usize,
    pub w_h: ParamId,
    pub b_h: ParamId,
    pub w_t: ParamId,
    pub b_t: ParamId,
}

impl HighwayUnit {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        HighwayUnit {
            dim,
            w_h: store.glorot(format!("{name}.w_h"), dim, dim, rng),
            b_h: store.zeros(format!("{name}.b_h"), &[dim]),
            w_t: store.glorot(format!("{name}.w_t"), dim, dim, rng),
            b_t: store.zeros(format!("{name}.b_t"), &[dim]),
        }
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w_h, self.b_h, self.w_t, self.b_t]
    }

    pub fn param_count(dim: usize) -> usize {
        2 * (dim * dim + dim)
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, n: NodeId) -> NodeId {
        let gate_pre = tape.affine(store, self.w_t, Some(self.b_t), n);
        let t = tape.sigmoid(gate_pre);
        let h_pre = tape.affine(store, self.w_h, Some(self.b_h), n);
        let h = tape.relu(h_pre);
        let transformed = tape.mul(t, h);
        let carry = tape.one_minus(t);
        let carried = tape.mul(carry, n);
        tape.add(transformed, carried)
    }
}

/// Apply a highway unit to a plain vector.
pub fn highway_apply(unit: &HighwayUnit, store: &ParamStore, n: &[f64]) -> Result<Vec<f64>> {
    if n.len() != unit.dim {
        return Err(Error::Shape(format!(
            "highway input has {} elements, unit dimension is {}",
            n.len(),
            unit.dim
        )));
    }
    let mut tape = Tape::new();
    let x = tape.input(n.to_vec());
    let m = unit.apply(&mut tape, store, x);
    Ok(tape.value(m).to_vec())
}
