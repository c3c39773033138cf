//! Character-level bidirectional LSTM with word-level language-model heads.
//!
//! The forward LSTM reads the character stream left to right and its state at
//! the space after word `i` is `f[i]`; the backward LSTM reads right to left
//! and its state at the same space is `r[i]`. Each direction feeds two highway
//! routes, one toward the tagger (`*_sl`) and one toward the language model
//! (`*_lm`). The LM predicts word `i` from `f_lm[i - 1]` and from `r_lm[i]`.

use rand::SeedableRng;

use crate::corpus::CharStream;
use crate::nn_core::{init, HighwayUnit, LstmCell, Mode, NodeId, ParamId, ParamStore, Rng, Tape};
use crate::{Error, Result};

/// A stack of highway units; empty means identity.
#[derive(Clone, Debug, PartialEq)]
pub struct HighwayRoute {
    pub units: Vec<HighwayUnit>,
}

impl HighwayRoute {
    fn new(store: &mut ParamStore, name: &str, dim: usize, depth: usize, rng: &mut Rng) -> Self {
        HighwayRoute {
            units: (0..depth)
                .map(|d| HighwayUnit::new(store, &format!("{name}.{d}"), dim, rng))
                .collect(),
        }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, mut x: NodeId) -> NodeId {
        for u in &self.units {
            x = u.apply(tape, store, x);
        }
        x
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.units.iter().flat_map(|u| u.param_ids()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    ForwardToLm,
    ForwardToSl,
    BackwardToLm,
    BackwardToSl,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharBiLM {
    pub char_dim: usize,
    pub state: usize,
    pub word_vocab: usize,
    pub char_emb: ParamId,
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub fwd_lm: HighwayRoute,
    pub fwd_sl: HighwayRoute,
    pub bwd_lm: HighwayRoute,
    pub bwd_sl: HighwayRoute,
    /// `[V, state]` output weights predicting the next word.
    pub lm_forward_out: ParamId,
    /// `[V, state]` output weights predicting the previous word.
    pub lm_backward_out: ParamId,
}

/// Per-boundary states of the four routes, each `n + 1` vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutedStates {
    pub fwd_lm: Vec<Vec<f64>>,
    pub fwd_sl: Vec<Vec<f64>>,
    pub bwd_lm: Vec<Vec<f64>>,
    pub bwd_sl: Vec<Vec<f64>>,
}

impl CharBiLM {
    /// `highway_depth = 0` gives identity routes with no parameters.
    pub fn new(
        store: &mut ParamStore,
        num_chars: usize,
        word_vocab: usize,
        char_dim: usize,
        state: usize,
        highway_depth: usize,
        rng: &mut Rng,
    ) -> Self {
        let char_emb = store.uniform(
            "char.embedding",
            &[num_chars, char_dim],
            init::embedding_bound(char_dim),
            rng,
        );
        let forward = LstmCell::new(store, "char.lstm.forward", char_dim, state, rng);
        let backward = LstmCell::new(store, "char.lstm.backward", char_dim, state, rng);
        let fwd_lm = HighwayRoute::new(store, "char.highway.forward_to_lm", state, highway_depth, rng);
        let fwd_sl = HighwayRoute::new(store, "char.highway.forward_to_sl", state, highway_depth, rng);
        let bwd_lm = HighwayRoute::new(store, "char.highway.backward_to_lm", state, highway_depth, rng);
        let bwd_sl = HighwayRoute::new(store, "char.highway.backward_to_sl", state, highway_depth, rng);
        let lm_forward_out = store.glorot("lm.forward.out", word_vocab, state, rng);
        let lm_backward_out = store.glorot("lm.backward.out", word_vocab, state, rng);
        CharBiLM {
            char_dim,
            state,
            word_vocab,
            char_emb,
            forward,
            backward,
            fwd_lm,
            fwd_sl,
            bwd_lm,
            bwd_sl,
            lm_forward_out,
            lm_backward_out,
        }
    }

    pub fn route(&self, route: Route) -> &HighwayRoute {
        match route {
            Route::ForwardToLm => &self.fwd_lm,
            Route::ForwardToSl => &self.fwd_sl,
            Route::BackwardToLm => &self.bwd_lm,
            Route::BackwardToSl => &self.bwd_sl,
        }
    }

    pub fn highway_param_ids(&self) -> Vec<ParamId> {
        [&self.fwd_lm, &self.fwd_sl, &self.bwd_lm, &self.bwd_sl]
            .into_iter()
            .flat_map(|r| r.param_ids())
            .collect()
    }

    pub fn lstm_param_ids(&self) -> Vec<ParamId> {
        self.forward
            .param_ids()
            .into_iter()
            .chain(self.backward.param_ids())
            .collect()
    }

    pub fn lm_head_param_ids(&self) -> [ParamId; 2] {
        [self.lm_forward_out, self.lm_backward_out]
    }

    /// Record both character LSTMs; returns `(f, r)` boundary states, `n + 1` each.
    pub fn record_char_level(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        stream: &CharStream,
    ) -> (Vec<NodeId>, Vec<NodeId>) {
        let mut unused = Rng::seed_from_u64(0);
        self.record_char_level_dropout(tape, store, stream, 0.0, Mode::Eval, &mut unused)
    }

    /// [`Self::record_char_level`] with dropout on the character embeddings.
    pub fn record_char_level_dropout(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        stream: &CharStream,
        rate: f64,
        mode: Mode,
        rng: &mut Rng,
    ) -> (Vec<NodeId>, Vec<NodeId>) {
        let emb: Vec<NodeId> = stream
            .char_ids
            .iter()
            .map(|&c| {
                let e = tape.param_row(store, self.char_emb, c);
                tape.dropout(e, rate, mode, rng)
            })
            .collect();
        let fwd = self.forward.run(tape, store, &emb);
        let reversed: Vec<NodeId> = emb.iter().rev().copied().collect();
        let bwd = self.backward.run(tape, store, &reversed);
        let last = stream.len() - 1;
        let f = stream.boundaries.iter().map(|&b| fwd[b]).collect();
        let r = stream.boundaries.iter().map(|&b| bwd[last - b]).collect();
        (f, r)
    }

    /// Record the summed negative log-likelihood of both LM directions.
    ///
    /// `fwd_lm[k]` predicts `targets[k]` (states at boundaries `0..n`), and
    /// `bwd_lm[k]` predicts `targets[k]` (states at boundaries `1..=n`).
    pub fn record_lm_loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        fwd_lm: &[NodeId],
        bwd_lm: &[NodeId],
        targets: &[usize],
    ) -> Result<(NodeId, NodeId)> {
        if fwd_lm.len() != targets.len() || bwd_lm.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} forward / {} backward states",
                targets.len(),
                fwd_lm.len(),
                bwd_lm.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= self.word_vocab) {
            return Err(Error::Index(format!(
                "target word id {bad} outside vocabulary of {}",
                self.word_vocab
            )));
        }
        let mut direction = |out: ParamId, states: &[NodeId]| {
            let terms: Vec<NodeId> = states
                .iter()
                .zip(targets)
                .map(|(&s, &t)| {
                    let logits = tape.affine(store, out, None, s);
                    tape.softmax_nll(logits, t)
                })
                .collect();
            tape.sum(&terms)
        };
        let f = direction(self.lm_forward_out, fwd_lm);
        let b = direction(self.lm_backward_out, bwd_lm);
        Ok((f, b))
    }

    /// Character-level pass on plain values; `(f, r)` with `n + 1` rows each.
    pub fn run_char_level(&self, store: &ParamStore, stream: &CharStream) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let (f, r) = self.record_char_level(&mut tape, store, stream);
        (values(&tape, &f), values(&tape, &r))
    }

    /// Apply all four routes at every boundary.
    pub fn route_highway(&self, store: &ParamStore, f: &[Vec<f64>], r: &[Vec<f64>]) -> Result<RoutedStates> {
        if let Some(v) = f.iter().chain(r).find(|v| v.len() != self.state) {
            return Err(Error::Shape(format!(
                "boundary state has {} elements, expected {}",
                v.len(),
                self.state
            )));
        }
        let mut tape = Tape::new();
        let mut run = |route: &HighwayRoute, xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
            xs.iter()
                .map(|x| {
                    let n = tape.input(x.clone());
                    let m = route.apply(&mut tape, store, n);
                    tape.value(m).to_vec()
                })
                .collect()
        };
        Ok(RoutedStates {
            fwd_lm: run(&self.fwd_lm, f),
            fwd_sl: run(&self.fwd_sl, f),
            bwd_lm: run(&self.bwd_lm, r),
            bwd_sl: run(&self.bwd_sl, r),
        })
    }

    /// Forward and backward LM negative log-likelihoods from full `n + 1`
    /// boundary arrays.
    pub fn lm_direction_nll(
        &self,
        store: &ParamStore,
        fwd_lm: &[Vec<f64>],
        bwd_lm: &[Vec<f64>],
        targets: &[usize],
    ) -> Result<(f64, f64)> {
        let n = targets.len();
        if fwd_lm.len() != n + 1 || bwd_lm.len() != n + 1 {
            return Err(Error::Shape(format!(
                "expected {} boundary states for {n} words",
                n + 1
            )));
        }
        let mut tape = Tape::new();
        let f: Vec<NodeId> = fwd_lm[..n].iter().map(|v| tape.input(v.clone())).collect();
        let b: Vec<NodeId> = bwd_lm[1..].iter().map(|v| tape.input(v.clone())).collect();
        let (fl, bl) = self.record_lm_loss(&mut tape, store, &f, &b, targets)?;
        Ok((tape.scalar(fl), tape.scalar(bl)))
    }

    /// Sum of both LM directions' negative log-likelihoods.
    pub fn lm_loss(
        &self,
        store: &ParamStore,
        fwd_lm: &[Vec<f64>],
        bwd_lm: &[Vec<f64>],
        targets: &[usize],
    ) -> Result<f64> {
        let (f, b) = self.lm_direction_nll(store, fwd_lm, bwd_lm, targets)?;
        Ok(f + b)
    }
}

fn values(tape: &Tape, ids: &[NodeId]) -> Vec<Vec<f64>> {
    ids.iter().map(|&i| tape.value(i).to_vec()).collect()
}

/// `exp(nll / count)`.
pub fn perplexity(nll: f64, count: usize) -> Result<f64> {
    if count == 0 {
        return Err(Error::Domain("perplexity over zero words".into()));
    }
    Ok((nll / count as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, LabeledSentence, Vocabs};
    use rand::{Rng as _, SeedableRng};

    fn setup(words: &[&str], state: usize, depth: usize) -> (ParamStore, CharBiLM, Vocabs) {
        let s = LabeledSentence::new(
            words.iter().map(|w| w.to_string()).collect(),
            vec!["O".into(); words.len()],
        )
        .unwrap();
        let v = build_vocab(&[s], 1).unwrap();
        let mut store = ParamStore::new();
        let mut rng = Rng::seed_from_u64(17);
        let lm = CharBiLM::new(&mut store, v.chars.len(), v.words.len(), 4, state, depth, &mut rng);
        for id in lm.highway_param_ids() {
            for x in store.data_mut(id) {
                *x += rng.gen_range(-0.3..0.3);
            }
        }
        (store, lm, v)
    }

    #[test]
    fn zero_parameters_zero_states() {
        let (mut store, lm, v) = setup(&["ab", "c"], 5, 1);
        for id in store.ids().collect::<Vec<_>>() {
            store.data_mut(id).fill(0.0);
        }
        let (f, r) = lm.run_char_level(&store, &v.encode_words(&["ab", "c"]).chars);
        assert!(f.iter().chain(&r).flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn one_word_gives_two_boundaries() {
        let (store, lm, v) = setup(&["x"], 3, 1);
        let (f, r) = lm.run_char_level(&store, &v.encode_words(&["x"]).chars);
        assert_eq!((f.len(), r.len()), (2, 2));
    }

    #[test]
    fn boundary_alignment_follows_reading_order() {
        // f[1] is the forward state after "␣ab␣"; r[1] is the backward state
        // after reading "␣c" reversed plus the space before it.
        let (store, lm, v) = setup(&["ab", "c"], 3, 1);
        let s = v.encode_words(&["ab", "c"]).chars;
        let (f, r) = lm.run_char_level(&store, &s);
        let emb = |c: usize| store.data(lm.char_emb)[c * 4..(c + 1) * 4].to_vec();
        let mut tape = Tape::new();
        let mut run = |cell: &LstmCell, ids: &[usize]| {
            let xs: Vec<_> = ids.iter().map(|&c| tape.input(emb(c))).collect();
            let hs = cell.run(&mut tape, &store, &xs);
            tape.value(*hs.last().unwrap()).to_vec()
        };
        assert_eq!(f[1], run(&lm.forward, &s.char_ids[..4]));
        let rev: Vec<usize> = s.char_ids[3..].iter().rev().copied().collect();
        assert_eq!(r[1], run(&lm.backward, &rev));
    }

    #[test]
    fn closed_gates_make_routes_identity() {
        let (mut store, lm, v) = setup(&["ab", "c"], 5, 1);
        let s = v.encode_words(&["ab", "c"]).chars;
        let (f, r) = lm.run_char_level(&store, &s);
        for u in [&lm.fwd_lm, &lm.fwd_sl, &lm.bwd_lm, &lm.bwd_sl].iter().flat_map(|r| &r.units) {
            store.data_mut(u.b_t).fill(-50.0);
        }
        let routed = lm.route_highway(&store, &f, &r).unwrap();
        for (a, b) in routed.fwd_lm.iter().chain(&routed.fwd_sl).flatten().zip(f.iter().chain(&f).flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in routed.bwd_lm.iter().chain(&routed.bwd_sl).flatten().zip(r.iter().chain(&r).flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn distinct_routes_differ() {
        let (store, lm, v) = setup(&["ab", "c"], 5, 1);
        let s = v.encode_words(&["ab", "c"]).chars;
        let (f, r) = lm.run_char_level(&store, &s);
        let routed = lm.route_highway(&store, &f, &r).unwrap();
        assert!(routed.fwd_lm.iter().flatten().zip(routed.fwd_sl.iter().flatten()).any(|(a, b)| a != b));
        assert!(routed.fwd_lm.iter().all(|v| v.len() == 5));
    }

    #[test]
    fn depth_zero_is_identity() {
        let (store, lm, v) = setup(&["ab", "c"], 5, 0);
        let s = v.encode_words(&["ab", "c"]).chars;
        let (f, r) = lm.run_char_level(&store, &s);
        let routed = lm.route_highway(&store, &f, &r).unwrap();
        assert_eq!(routed.fwd_lm, f);
        assert_eq!(routed.bwd_sl, r);
        assert!(lm.highway_param_ids().is_empty());
    }

    #[test]
    fn uniform_lm_loss() {
        let (mut store, lm, v) = setup(&["ab", "c", "ab"], 5, 1);
        store.data_mut(lm.lm_forward_out).fill(0.0);
        store.data_mut(lm.lm_backward_out).fill(0.0);
        let e = v.encode_words(&["ab", "c", "ab"]);
        let (f, r) = lm.run_char_level(&store, &e.chars);
        let routed = lm.route_highway(&store, &f, &r).unwrap();
        let loss = lm.lm_loss(&store, &routed.fwd_lm, &routed.bwd_lm, &e.word_ids).unwrap();
        let vocab = v.words.len() as f64;
        assert!((loss - 2.0 * 3.0 * vocab.ln()).abs() < 1e-12);
        let (a, b) = lm.lm_direction_nll(&store, &routed.fwd_lm, &routed.bwd_lm, &e.word_ids).unwrap();
        assert_eq!(a + b, loss);
        assert!((perplexity(a, 3).unwrap() - vocab).abs() < 1e-9);
    }

    #[test]
    fn lm_rows_are_distributions() {
        let (store, lm, _) = setup(&["ab"], 5, 1);
        let mut rng = Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let x = tape.input((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let logits = tape.affine(&store, lm.lm_forward_out, None, x);
        let l = tape.value(logits);
        let lse = crate::nn_core::log_sum_exp(l).unwrap();
        let total: f64 = l.iter().map(|v| (v - lse).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_target_is_index_error() {
        let (store, lm, v) = setup(&["ab"], 3, 1);
        let e = v.encode_words(&["ab"]);
        let (f, r) = lm.run_char_level(&store, &e.chars);
        assert!(matches!(
            lm.lm_loss(&store, &f, &r, &[99]),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn perplexity_examples() {
        assert_eq!(perplexity(0.0, 10).unwrap(), 1.0);
        assert!((perplexity(7.0 * 50f64.ln(), 7).unwrap() - 50.0).abs() < 1e-9);
        assert!(matches!(perplexity(1.0, 0), Err(Error::Domain(_))));
    }
}
