//! Linear-chain CRF over word features.
//!
//! The log-potential of moving from label `y'` to label `y` at word `j` is
//! `W[y', y] . z_j + b[y', y]`. The predecessor index runs over the `L` real
//! labels plus one synthetic start row (index `L`) used only at `j = 0`.
//! There is no end transition.

use crate::nn_core::{log_sum_exp, CustomOp, NodeId, ParamId, ParamStore, Rng, Tape};
use crate::{Error, Result};

/// Cap on `L^n` for exhaustive enumeration.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct CrfLayer {
    pub num_labels: usize,
    pub feat_dim: usize,
    /// Shape `[L + 1, L, Z]`.
    pub weight: ParamId,
    /// Shape `[L + 1, L]`.
    pub bias: ParamId,
}

/// Per-word log-potentials, each a row-major `(L + 1) x L` table.
#[derive(Clone, Debug, PartialEq)]
pub struct Potentials {
    pub num_labels: usize,
    pub tables: Vec<Vec<f64>>,
}

impl Potentials {
    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn start(&self) -> usize {
        self.num_labels
    }

    #[inline]
    pub fn get(&self, j: usize, prev: usize, label: usize) -> f64 {
        self.tables[j][prev * self.num_labels + label]
    }

    /// Forbid transitions where `allowed[prev * L + label]` is false.
    pub fn mask(&mut self, allowed: &[bool]) {
        for t in &mut self.tables {
            for (v, ok) in t.iter_mut().zip(allowed) {
                if !ok {
                    *v = f64::NEG_INFINITY;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    pub log_partition: f64,
    pub best: Vec<usize>,
    pub best_score: f64,
    /// Number of sequences enumerated.
    pub count: usize,
}

impl CrfLayer {
    pub fn new(store: &mut ParamStore, name: &str, num_labels: usize, feat_dim: usize, rng: &mut Rng) -> Self {
        let rows = (num_labels + 1) * num_labels;
        let bound = (6.0 / (rows + feat_dim) as f64).sqrt();
        let weight = store.uniform(
            format!("{name}.weight"),
            &[num_labels + 1, num_labels, feat_dim],
            bound,
            rng,
        );
        let bias = store.zeros(format!("{name}.bias"), &[num_labels + 1, num_labels]);
        CrfLayer {
            num_labels,
            feat_dim,
            weight,
            bias,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }

    fn check_features(&self, z: &[Vec<f64>]) -> Result<()> {
        if z.is_empty() {
            return Err(Error::Domain("CRF input has no words".into()));
        }
        if let Some(row) = z.iter().find(|r| r.len() != self.feat_dim) {
            return Err(Error::Shape(format!(
                "CRF feature has {} elements, layer expects {}",
                row.len(),
                self.feat_dim
            )));
        }
        Ok(())
    }

    fn check_labels(&self, y: &[usize], n: usize) -> Result<()> {
        if y.len() != n {
            return Err(Error::Shape(format!("{} labels for {n} words", y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= self.num_labels) {
            return Err(Error::Index(format!(
                "label id {bad} outside 0..{}",
                self.num_labels
            )));
        }
        Ok(())
    }

    /// Log-potential tables for features `z`.
    pub fn potentials(&self, store: &ParamStore, z: &[Vec<f64>]) -> Result<Potentials> {
        self.check_features(z)?;
        let w = store.data(self.weight);
        let b = store.data(self.bias);
        let tables = z
            .iter()
            .map(|zj| {
                b.iter()
                    .zip(w.chunks_exact(self.feat_dim))
                    .map(|(bias, row)| bias + row.iter().zip(zj).map(|(a, c)| a * c).sum::<f64>())
                    .collect()
            })
            .collect();
        Ok(Potentials {
            num_labels: self.num_labels,
            tables,
        })
    }

    pub fn sequence_score(&self, store: &ParamStore, z: &[Vec<f64>], y: &[usize]) -> Result<f64> {
        self.check_labels(y, z.len())?;
        Ok(sequence_score(&self.potentials(store, z)?, y))
    }

    pub fn log_partition(&self, store: &ParamStore, z: &[Vec<f64>]) -> Result<f64> {
        Ok(log_partition(&self.potentials(store, z)?))
    }

    /// `log Z - score(y)`.
    pub fn nll(&self, store: &ParamStore, z: &[Vec<f64>], y: &[usize]) -> Result<f64> {
        self.check_labels(y, z.len())?;
        let p = self.potentials(store, z)?;
        Ok(log_partition(&p) - sequence_score(&p, y))
    }

    pub fn viterbi_decode(&self, store: &ParamStore, z: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
        Ok(viterbi(&self.potentials(store, z)?))
    }

    pub fn brute_force_oracle(&self, store: &ParamStore, z: &[Vec<f64>]) -> Result<BruteForce> {
        brute_force(&self.potentials(store, z)?)
    }

    /// Record potential tables for feature nodes on the tape.
    pub fn potential_nodes(&self, tape: &mut Tape, store: &ParamStore, z: &[NodeId]) -> Vec<NodeId> {
        z.iter()
            .map(|&zj| tape.affine(store, self.weight, Some(self.bias), zj))
            .collect()
    }

    /// Record the negative log-likelihood of `gold` on the tape.
    pub fn nll_node(&self, tape: &mut Tape, store: &ParamStore, z: &[NodeId], gold: &[usize]) -> Result<NodeId> {
        if z.is_empty() {
            return Err(Error::Domain("CRF input has no words".into()));
        }
        self.check_labels(gold, z.len())?;
        let nodes = self.potential_nodes(tape, store, z);
        let p = Potentials {
            num_labels: self.num_labels,
            tables: nodes.iter().map(|&n| tape.value(n).to_vec()).collect(),
        };
        let value = log_partition(&p) - sequence_score(&p, gold);
        let op = NllOp {
            num_labels: self.num_labels,
            gold: gold.to_vec(),
        };
        Ok(tape.custom(&nodes, vec![value], Box::new(op)))
    }
}

/// Sum of log-potentials along `y`, starting from the start row.
pub fn sequence_score(p: &Potentials, y: &[usize]) -> f64 {
    let mut prev = p.start();
    let mut score = 0.0;
    for (j, &label) in y.iter().enumerate() {
        score += p.get(j, prev, label);
        prev = label;
    }
    score
}

fn forward_scores(p: &Potentials) -> Vec<Vec<f64>> {
    let l = p.num_labels;
    let mut alpha = Vec::with_capacity(p.len());
    alpha.push((0..l).map(|y| p.get(0, p.start(), y)).collect::<Vec<f64>>());
    let mut scratch = vec![0.0; l];
    for j in 1..p.len() {
        let prev: &Vec<f64> = &alpha[j - 1];
        let next = (0..l)
            .map(|y| {
                for (yp, s) in scratch.iter_mut().enumerate() {
                    *s = prev[yp] + p.get(j, yp, y);
                }
                log_sum_exp(&scratch).expect("non-empty")
            })
            .collect();
        alpha.push(next);
    }
    alpha
}

fn backward_scores(p: &Potentials) -> Vec<Vec<f64>> {
    let l = p.num_labels;
    let n = p.len();
    let mut beta = vec![vec![0.0; l]; n];
    let mut scratch = vec![0.0; l];
    for j in (0..n.saturating_sub(1)).rev() {
        for yp in 0..l {
            for (y, s) in scratch.iter_mut().enumerate() {
                *s = p.get(j + 1, yp, y) + beta[j + 1][y];
            }
            beta[j][yp] = log_sum_exp(&scratch).expect("non-empty");
        }
    }
    beta
}

/// Log-sum over all label sequences, by the forward recursion.
pub fn log_partition(p: &Potentials) -> f64 {
    let alpha = forward_scores(p);
    log_sum_exp(alpha.last().expect("non-empty")).expect("non-empty")
}

/// Highest-scoring sequence and its score. Ties go to the lowest label id at
/// each backtracking step.
pub fn viterbi(p: &Potentials) -> (Vec<usize>, f64) {
    let l = p.num_labels;
    let n = p.len();
    let mut delta: Vec<f64> = (0..l).map(|y| p.get(0, p.start(), y)).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    for j in 1..n {
        let mut next = vec![f64::NEG_INFINITY; l];
        let mut ptr = vec![0; l];
        for y in 0..l {
            for yp in 0..l {
                let s = delta[yp] + p.get(j, yp, y);
                if s > next[y] {
                    next[y] = s;
                    ptr[y] = yp;
                }
            }
        }
        delta = next;
        back.push(ptr);
    }
    let (mut best, mut score) = (0, f64::NEG_INFINITY);
    for (y, &s) in delta.iter().enumerate() {
        if s > score {
            best = y;
            score = s;
        }
    }
    let mut labels = vec![best; n];
    for j in (1..n).rev() {
        labels[j - 1] = back[j - 1][labels[j]];
    }
    (labels, score)
}

/// Enumerate every sequence. The best sequence follows the Viterbi tie rule:
/// among equal scores, prefer the lowest last label, then the lowest
/// second-to-last, and so on.
pub fn brute_force(p: &Potentials) -> Result<BruteForce> {
    let l = p.num_labels;
    let n = p.len();
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(l).filter(|&v| v <= BRUTE_FORCE_LIMIT));
    let Some(total) = total else {
        return Err(Error::Domain(format!(
            "{l}^{n} sequences exceed the enumeration limit of {BRUTE_FORCE_LIMIT}"
        )));
    };
    let mut scores = Vec::with_capacity(total);
    let mut best = vec![0; n];
    let mut best_score = f64::NEG_INFINITY;
    // Counter with the last position as the most significant digit, so
    // enumeration order matches the tie rule and the first maximum wins.
    let mut y = vec![0; n];
    for _ in 0..total {
        let s = sequence_score(p, &y);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&y);
        }
        scores.push(s);
        for d in y.iter_mut() {
            *d += 1;
            if *d < l {
                break;
            }
            *d = 0;
        }
    }
    Ok(BruteForce {
        log_partition: log_sum_exp(&scores)?,
        best,
        best_score,
        count: total,
    })
}

/// Gradient of the NLL with respect to every potential table: edge marginals
/// minus the gold indicator.
struct NllOp {
    num_labels: usize,
    gold: Vec<usize>,
}

impl CustomOp for NllOp {
    fn backward(&self, inputs: &[&[f64]], _output: &[f64], grad_out: &[f64]) -> Vec<Vec<f64>> {
        let l = self.num_labels;
        let p = Potentials {
            num_labels: l,
            tables: inputs.iter().map(|t| t.to_vec()).collect(),
        };
        let alpha = forward_scores(&p);
        let beta = backward_scores(&p);
        let log_z = log_sum_exp(alpha.last().expect("non-empty")).expect("non-empty");
        let g = grad_out[0];
        let mut grads = Vec::with_capacity(p.len());
        for j in 0..p.len() {
            let mut d = vec![0.0; (l + 1) * l];
            if j == 0 {
                for y in 0..l {
                    let idx = l * l + y;
                    d[idx] = g * (p.tables[0][idx] + beta[0][y] - log_z).exp();
                }
            } else {
                for yp in 0..l {
                    for y in 0..l {
                        let idx = yp * l + y;
                        d[idx] = g * (alpha[j - 1][yp] + p.tables[j][idx] + beta[j][y] - log_z).exp();
                    }
                }
            }
            let prev = if j == 0 { l } else { self.gold[j - 1] };
            d[prev * l + self.gold[j]] -= g;
            grads.push(d);
        }
        grads
    }
}

/// Allowed BIOES transitions as a `(L + 1) x L` mask; the last row is the start.
/// Labels without a span prefix are unconstrained.
pub fn bioes_transition_mask<S: AsRef<str>>(labels: &[S]) -> Vec<bool> {
    let l = labels.len();
    let parse = |s: &str| -> Option<(char, String)> {
        let (p, t) = s.split_once('-')?;
        let c = p.chars().next().filter(|_| p.len() == 1)?;
        "BIES".contains(c).then(|| (c, t.to_string()))
    };
    let parsed: Vec<Option<(char, String)>> = labels.iter().map(|s| parse(s.as_ref())).collect();
    let is_o = |i: usize| labels[i].as_ref() == "O";
    let mut mask = vec![true; (l + 1) * l];
    for prev in 0..=l {
        for next in 0..l {
            let from_open = prev < l && matches!(&parsed[prev], Some((c, _)) if *c == 'B' || *c == 'I');
            let ok = match &parsed[next] {
                Some(('I' | 'E', t)) => {
                    prev < l && matches!(&parsed[prev], Some((pc, pt)) if (*pc == 'B' || *pc == 'I') && pt == t)
                }
                Some(_) => !from_open,
                None if is_o(next) => !from_open,
                None => true,
            };
            mask[prev * l + next] = ok;
        }
    }
    mask
}
