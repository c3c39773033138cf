//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! Every node holds a dense vector value. Matrices never live on the tape: they
//! are parameters in a [`ParamStore`] and enter through [`Tape::affine`] or
//! [`Tape::param_slice`], so backward writes their gradients straight into the
//! store. A tape is built per example (or batch), consumed by
//! [`Tape::backward`], and dropped.

use rand::Rng;

use super::ops::{log_sum_exp_unchecked, sigmoid, Mode};
use super::tensor::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation with a hand-written backward pass.
pub trait CustomOp {
    /// Gradients with respect to each input, given the inputs' values, the
    /// op's output value and the gradient flowing into that output.
    fn backward(&self, inputs: &[&[f64]], output: &[f64], grad_out: &[f64]) -> Vec<Vec<f64>>;
}

enum Op {
    Input,
    ParamSlice { param: ParamId, offset: usize },
    Affine { w: ParamId, b: Option<ParamId>, x: NodeId },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    OneMinus(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Concat(Vec<NodeId>),
    Slice { src: NodeId, start: usize },
    Mask { src: NodeId, mask: Vec<f64> },
    Scale { src: NodeId, factor: f64 },
    Sum(Vec<NodeId>),
    SoftmaxNll { logits: NodeId, target: usize },
    Custom { inputs: Vec<NodeId>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Scalar value of a length-1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1);
        v[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.input(vec![0.0; len])
    }

    /// `len` contiguous elements of a parameter starting at `offset`
    /// (an embedding row, or a whole bias vector).
    pub fn param_slice(
        &mut self,
        store: &ParamStore,
        param: ParamId,
        offset: usize,
        len: usize,
    ) -> NodeId {
        let value = store.data(param)[offset..offset + len].to_vec();
        self.push(value, Op::ParamSlice { param, offset })
    }

    /// Row `row` of a 2-D parameter.
    pub fn param_row(&mut self, store: &ParamStore, param: ParamId, row: usize) -> NodeId {
        let cols = store.shape(param)[1];
        self.param_slice(store, param, row * cols, cols)
    }

    /// `W x (+ b)` where `W` is a parameter viewed as `[rows, len(x)]`.
    pub fn affine(
        &mut self,
        store: &ParamStore,
        w: ParamId,
        b: Option<ParamId>,
        x: NodeId,
    ) -> NodeId {
        let wd = store.data(w);
        let xv = &self.nodes[x.0].value;
        let cols = xv.len();
        assert_eq!(wd.len() % cols, 0, "affine: weight not divisible by input");
        let rows = wd.len() / cols;
        let mut out = match b {
            Some(b) => {
                let bd = store.data(b);
                assert_eq!(bd.len(), rows, "affine: bias length");
                bd.to_vec()
            }
            None => vec![0.0; rows],
        };
        for (o, row) in out.iter_mut().zip(wd.chunks_exact(cols)) {
            *o += dot(row, xv);
        }
        self.push(out, Op::Affine { w, b, x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).iter().map(|v| 1.0 - v).collect();
        self.push(value, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).iter().map(|&v| sigmoid(v)).collect();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).iter().map(|v| v.tanh()).collect();
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).iter().map(|&v| v.max(0.0)).collect();
        self.push(value, Op::Relu(a))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let total = parts.iter().map(|p| self.value(*p).len()).sum();
        let mut value = Vec::with_capacity(total);
        for p in parts {
            value.extend_from_slice(self.value(*p));
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let value = self.value(src)[start..start + len].to_vec();
        self.push(value, Op::Slice { src, start })
    }

    pub fn scale(&mut self, src: NodeId, factor: f64) -> NodeId {
        let value = self.value(src).iter().map(|v| v * factor).collect();
        self.push(value, Op::Scale { src, factor })
    }

    /// Elementwise sum of equal-length nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "sum of nothing");
        let mut value = self.value(parts[0]).to_vec();
        for p in &parts[1..] {
            let v = self.value(*p);
            assert_eq!(v.len(), value.len(), "sum: length mismatch");
            value.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        self.push(value, Op::Sum(parts.to_vec()))
    }

    /// Inverted dropout. Identity (no new node) in eval mode or at rate 0.
    pub fn dropout<R: Rng>(&mut self, src: NodeId, rate: f64, mode: Mode, rng: &mut R) -> NodeId {
        if mode == Mode::Eval || rate == 0.0 {
            return src;
        }
        let mask = super::ops::dropout_mask(self.value(src).len(), rate, rng);
        let value = zip_map(self.value(src), &mask, |x, m| x * m);
        self.push(value, Op::Mask { src, mask })
    }

    /// `-log softmax(logits)[target]`, as a length-1 node.
    pub fn softmax_nll(&mut self, logits: NodeId, target: usize) -> NodeId {
        let l = self.value(logits);
        assert!(target < l.len(), "softmax_nll: target out of range");
        let value = log_sum_exp_unchecked(l) - l[target];
        self.push(vec![value], Op::SoftmaxNll { logits, target })
    }

    pub fn custom(&mut self, inputs: &[NodeId], value: Vec<f64>, op: Box<dyn CustomOp>) -> NodeId {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        )
    }

    /// Backpropagate from a scalar root with seed gradient 1.
    pub fn backward(&self, root: NodeId, store: &mut ParamStore) {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        self.backward_with_seed(root, &[1.0], store);
    }

    /// Backpropagate from `root`, accumulating into parameter gradients.
    pub fn backward_with_seed(&self, root: NodeId, seed: &[f64], store: &mut ParamStore) {
        assert_eq!(seed.len(), self.value(root).len());
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(seed.to_vec());

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::ParamSlice { param, offset } => {
                    let p = &mut store.get_mut(*param).tensor;
                    if let Some(pg) = p.grad_mut() {
                        add_into(&mut pg[*offset..offset + g.len()], &g);
                    }
                }
                Op::Affine { w, b, x } => {
                    let xv = &self.nodes[x.0].value;
                    let cols = xv.len();
                    let mut dx = vec![0.0; cols];
                    {
                        let (wd, mut wg) = store.get_mut(*w).tensor.data_and_grad_mut();
                        for (r, (&gr, row)) in g.iter().zip(wd.chunks_exact(cols)).enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            axpy(&mut dx, gr, row);
                            if let Some(wg) = wg.as_deref_mut().map(|s| &mut s[r * cols..(r + 1) * cols]) {
                                axpy(wg, gr, xv);
                            }
                        }
                    }
                    if let Some(b) = b {
                        if let Some(bg) = store.get_mut(*b).tensor.grad_mut() {
                            add_into(bg, &g);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&g, self.value(*b), |g, y| g * y);
                    let db = zip_map(&g, self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::OneMinus(a) => {
                    accumulate(&mut grads, *a, g.iter().map(|v| -v).collect());
                }
                Op::Sigmoid(a) => {
                    let d = zip_map(&g, &node.value, |g, s| g * s * (1.0 - s));
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = zip_map(&g, &node.value, |g, t| g * (1.0 - t * t));
                    accumulate(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let d = zip_map(&g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *a, d);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        accumulate(&mut grads, *p, g[start..start + len].to_vec());
                        start += len;
                    }
                }
                Op::Slice { src, start } => {
                    let mut d = vec![0.0; self.value(*src).len()];
                    d[*start..start + g.len()].copy_from_slice(&g);
                    accumulate(&mut grads, *src, d);
                }
                Op::Mask { src, mask } => {
                    accumulate(&mut grads, *src, zip_map(&g, mask, |g, m| g * m));
                }
                Op::Scale { src, factor } => {
                    accumulate(&mut grads, *src, g.iter().map(|v| v * factor).collect());
                }
                Op::Sum(parts) => {
                    for p in parts {
                        accumulate(&mut grads, *p, g.clone());
                    }
                }
                Op::SoftmaxNll { logits, target } => {
                    let l = self.value(*logits);
                    let lse = log_sum_exp_unchecked(l);
                    let mut d: Vec<f64> = l.iter().map(|v| g[0] * (v - lse).exp()).collect();
                    d[*target] -= g[0];
                    accumulate(&mut grads, *logits, d);
                }
                Op::Custom { inputs, op } => {
                    let vals: Vec<&[f64]> = inputs.iter().map(|n| self.value(*n)).collect();
                    let ds = op.backward(&vals, &node.value, &g);
                    debug_assert_eq!(ds.len(), inputs.len());
                    for (n, d) in inputs.iter().zip(ds) {
                        accumulate(&mut grads, *n, d);
                    }
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, d: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => add_into(existing, &d),
        slot @ None => *slot = Some(d),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

#[inline]
fn add_into(y: &mut [f64], x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    y.iter_mut().zip(x).for_each(|(y, x)| *y += x);
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "elementwise op: length mismatch");
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
