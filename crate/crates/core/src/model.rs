//! The full tagger: word embeddings and character routes feed a word-level
//! bi-LSTM, whose outputs feed the CRF. The character LM heads share the
//! character LSTMs and add their loss to the CRF loss.

use crate::char_lm::CharBiLM;
use crate::corpus::{EncodedSentence, Vocabs};
use crate::crf::{self, CrfLayer};
use crate::nn_core::{init, LstmCell, Mode, NodeId, ParamId, ParamStore, Rng, Tape};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub char_emb_dim: usize,
    pub char_state: usize,
    pub word_emb_dim: usize,
    pub word_state: usize,
    pub highway_depth: usize,
    /// Weight of the language-model loss.
    pub lambda: f64,
    pub enable_lm: bool,
    pub enable_highway: bool,
    pub dropout: f64,
    /// Also apply dropout to character embeddings.
    pub char_dropout: bool,
    /// Restrict Viterbi to legal BIOES transitions when predicting.
    pub constrained_decoding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            char_emb_dim: 30,
            char_state: 300,
            word_emb_dim: 100,
            word_state: 300,
            highway_depth: 1,
            lambda: 1.0,
            enable_lm: true,
            enable_highway: true,
            dropout: 0.5,
            char_dropout: false,
            constrained_decoding: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("char_emb_dim", self.char_emb_dim),
            ("char_state", self.char_state),
            ("word_emb_dim", self.word_emb_dim),
            ("word_state", self.word_state),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Highway units per route actually built.
    pub fn effective_highway_depth(&self) -> usize {
        if self.enable_highway {
            self.highway_depth
        } else {
            0
        }
    }

    /// Dimension of the word-level LSTM input `v_i`.
    pub fn word_input_dim(&self) -> usize {
        self.word_emb_dim + 2 * self.char_state
    }

    /// Dimension of the CRF feature `z_i`.
    pub fn feature_dim(&self) -> usize {
        2 * self.word_state
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmLstmCrf {
    pub config: ModelConfig,
    pub vocabs: Vocabs,
    pub store: ParamStore,
    pub word_emb: ParamId,
    pub char_lm: CharBiLM,
    pub word_forward: LstmCell,
    pub word_backward: LstmCell,
    pub crf: CrfLayer,
}

/// Nodes produced by one recorded forward pass.
pub struct ForwardNodes {
    /// `z_1..z_n` (after dropout in train mode).
    pub z: Vec<NodeId>,
    /// Forward LM route at boundaries `0..n`; empty when the LM is not run.
    pub fwd_lm: Vec<NodeId>,
    /// Backward LM route at boundaries `1..=n`; empty when the LM is not run.
    pub bwd_lm: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub z: Vec<Vec<f64>>,
    pub fwd_lm: Vec<Vec<f64>>,
    pub bwd_lm: Vec<Vec<f64>>,
}

/// What a training step optimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// CRF NLL plus `lambda` times the LM NLL (LM term dropped when disabled).
    Joint,
    /// Both LM directions only; the word-level network is not run.
    LanguageModel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub crf: f64,
    pub lm_forward: f64,
    pub lm_backward: f64,
}

struct LossNodes {
    total: NodeId,
    crf: Option<NodeId>,
    lm: Option<(NodeId, NodeId)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub groups: Vec<(&'static str, usize)>,
    pub total: usize,
}

impl ParamCounts {
    pub fn group(&self, name: &str) -> usize {
        self.groups
            .iter()
            .find(|(g, _)| *g == name)
            .map_or(0, |(_, c)| *c)
    }
}

impl LmLstmCrf {
    pub fn new(config: ModelConfig, vocabs: Vocabs, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if vocabs.num_labels() == 0 {
            return Err(Error::Config("label vocabulary is empty".into()));
        }
        let mut store = ParamStore::new();
        let word_emb = store.uniform(
            "word.embedding",
            &[vocabs.words.len(), config.word_emb_dim],
            init::embedding_bound(config.word_emb_dim),
            rng,
        );
        let char_lm = CharBiLM::new(
            &mut store,
            vocabs.chars.len(),
            vocabs.words.len(),
            config.char_emb_dim,
            config.char_state,
            config.effective_highway_depth(),
            rng,
        );
        let word_forward = LstmCell::new(
            &mut store,
            "word.lstm.forward",
            config.word_input_dim(),
            config.word_state,
            rng,
        );
        let word_backward = LstmCell::new(
            &mut store,
            "word.lstm.backward",
            config.word_input_dim(),
            config.word_state,
            rng,
        );
        let crf = CrfLayer::new(&mut store, "crf", vocabs.num_labels(), config.feature_dim(), rng);
        Ok(LmLstmCrf {
            config,
            vocabs,
            store,
            word_emb,
            char_lm,
            word_forward,
            word_backward,
            crf,
        })
    }

    /// Overwrite the word embedding table (row-major `|V| x word_emb_dim`).
    pub fn set_word_embeddings(&mut self, table: &[f64]) -> Result<()> {
        let dst = self.store.data_mut(self.word_emb);
        if dst.len() != table.len() {
            return Err(Error::Shape(format!(
                "embedding table has {} values, model expects {}",
                table.len(),
                dst.len()
            )));
        }
        dst.copy_from_slice(table);
        Ok(())
    }

    fn check_sentence(&self, s: &EncodedSentence) -> Result<()> {
        if s.is_empty() {
            return Err(Error::Domain("empty sentence".into()));
        }
        if s.chars.num_words() != s.len() {
            return Err(Error::Shape(format!(
                "{} words but {} character-stream words",
                s.len(),
                s.chars.num_words()
            )));
        }
        Ok(())
    }

    /// Concatenate `[emb(x_i); f_sl[i]; r_sl[i - 1]]` for `i = 1..=n`.
    fn record_inputs(&self, tape: &mut Tape, s: &EncodedSentence, f_sl: &[NodeId], r_sl: &[NodeId]) -> Vec<NodeId> {
        s.word_ids
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let emb = tape.param_row(&self.store, self.word_emb, w);
                tape.concat(&[emb, f_sl[k + 1], r_sl[k]])
            })
            .collect()
    }

    /// Record the network up to the CRF features. `with_lm` also records the
    /// LM routes; `with_tagger = false` skips the word level.
    fn record(
        &self,
        tape: &mut Tape,
        s: &EncodedSentence,
        mode: Mode,
        rng: &mut Rng,
        with_tagger: bool,
        with_lm: bool,
    ) -> Result<ForwardNodes> {
        self.check_sentence(s)?;
        let store = &self.store;
        let n = s.len();
        let char_rate = if self.config.char_dropout { self.config.dropout } else { 0.0 };
        let (f, r) = self
            .char_lm
            .record_char_level_dropout(tape, store, &s.chars, char_rate, mode, rng);

        let (fwd_lm, bwd_lm) = if with_lm {
            (
                f[..n].iter().map(|&x| self.char_lm.fwd_lm.apply(tape, store, x)).collect(),
                r[1..].iter().map(|&x| self.char_lm.bwd_lm.apply(tape, store, x)).collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        if !with_tagger {
            return Ok(ForwardNodes { z: Vec::new(), fwd_lm, bwd_lm });
        }

        // only f_sl[1..=n] and r_sl[0..n] are consumed
        let mut f_sl = vec![f[0]];
        f_sl.extend(f[1..].iter().map(|&x| self.char_lm.fwd_sl.apply(tape, store, x)));
        let mut r_sl: Vec<NodeId> = r[..n].iter().map(|&x| self.char_lm.bwd_sl.apply(tape, store, x)).collect();
        r_sl.push(r[n]);

        let rate = self.config.dropout;
        let v: Vec<NodeId> = self
            .record_inputs(tape, s, &f_sl, &r_sl)
            .into_iter()
            .map(|x| tape.dropout(x, rate, mode, rng))
            .collect();
        let hf = self.word_forward.run(tape, store, &v);
        let rev: Vec<NodeId> = v.iter().rev().copied().collect();
        let mut hb = self.word_backward.run(tape, store, &rev);
        hb.reverse();
        let z = hf
            .iter()
            .zip(&hb)
            .map(|(&a, &b)| {
                let zi = tape.concat(&[a, b]);
                tape.dropout(zi, rate, mode, rng)
            })
            .collect();
        Ok(ForwardNodes { z, fwd_lm, bwd_lm })
    }

    /// Word-level inputs `v_1..v_n` from given `f_sl`, `r_sl` boundary arrays
    /// (`n + 1` rows each).
    pub fn assemble_inputs(&self, s: &EncodedSentence, f_sl: &[Vec<f64>], r_sl: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = s.len();
        if f_sl.len() != n + 1 || r_sl.len() != n + 1 {
            return Err(Error::Shape(format!(
                "need {} boundary states, got {} forward and {} backward",
                n + 1,
                f_sl.len(),
                r_sl.len()
            )));
        }
        let state = self.config.char_state;
        if let Some(v) = f_sl.iter().chain(r_sl).find(|v| v.len() != state) {
            return Err(Error::Shape(format!("boundary state of {} elements, expected {state}", v.len())));
        }
        let mut tape = Tape::new();
        let f: Vec<NodeId> = f_sl.iter().map(|v| tape.input(v.clone())).collect();
        let r: Vec<NodeId> = r_sl.iter().map(|v| tape.input(v.clone())).collect();
        let v = self.record_inputs(&mut tape, s, &f, &r);
        Ok(v.iter().map(|&x| tape.value(x).to_vec()).collect())
    }

    /// CRF features and LM route states for one sentence.
    pub fn forward(&self, s: &EncodedSentence, mode: Mode, rng: &mut Rng) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let out = self.record(&mut tape, s, mode, rng, true, true)?;
        let vals = |ids: &[NodeId]| ids.iter().map(|&i| tape.value(i).to_vec()).collect();
        Ok(ForwardOutput {
            z: vals(&out.z),
            fwd_lm: vals(&out.fwd_lm),
            bwd_lm: vals(&out.bwd_lm),
        })
    }

    fn record_loss(
        &self,
        tape: &mut Tape,
        s: &EncodedSentence,
        objective: Objective,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<LossNodes> {
        match objective {
            Objective::LanguageModel => {
                let out = self.record(tape, s, mode, rng, false, true)?;
                let (f, b) = self.char_lm.record_lm_loss(tape, &self.store, &out.fwd_lm, &out.bwd_lm, &s.word_ids)?;
                let total = tape.add(f, b);
                Ok(LossNodes { total, crf: None, lm: Some((f, b)) })
            }
            Objective::Joint => {
                let gold = s
                    .label_ids
                    .as_deref()
                    .ok_or_else(|| Error::Domain("sentence has labels unknown to the model".into()))?;
                let with_lm = self.config.enable_lm && self.config.lambda != 0.0;
                let out = self.record(tape, s, mode, rng, true, with_lm)?;
                let crf = self.crf.nll_node(tape, &self.store, &out.z, gold)?;
                if !with_lm {
                    return Ok(LossNodes { total: crf, crf: Some(crf), lm: None });
                }
                let (f, b) = self.char_lm.record_lm_loss(tape, &self.store, &out.fwd_lm, &out.bwd_lm, &s.word_ids)?;
                let lm = tape.add(f, b);
                let weighted = tape.scale(lm, self.config.lambda);
                let total = tape.add(crf, weighted);
                Ok(LossNodes { total, crf: Some(crf), lm: Some((f, b)) })
            }
        }
    }

    fn parts(tape: &Tape, nodes: &LossNodes) -> LossParts {
        let (lm_forward, lm_backward) = nodes
            .lm
            .map_or((0.0, 0.0), |(f, b)| (tape.scalar(f), tape.scalar(b)));
        LossParts {
            total: tape.scalar(nodes.total),
            crf: nodes.crf.map_or(0.0, |c| tape.scalar(c)),
            lm_forward,
            lm_backward,
        }
    }

    /// Loss of one sentence without touching gradients.
    pub fn loss(&self, s: &EncodedSentence, objective: Objective, mode: Mode, rng: &mut Rng) -> Result<LossParts> {
        let mut tape = Tape::new();
        let nodes = self.record_loss(&mut tape, s, objective, mode, rng)?;
        Ok(Self::parts(&tape, &nodes))
    }

    /// `crf_nll + lambda * lm_loss` (or `crf_nll` alone with the LM disabled).
    pub fn joint_loss(&self, s: &EncodedSentence, mode: Mode, rng: &mut Rng) -> Result<f64> {
        Ok(self.loss(s, Objective::Joint, mode, rng)?.total)
    }

    /// Loss of one sentence, accumulating its gradient into the parameters.
    pub fn loss_and_backward(
        &mut self,
        s: &EncodedSentence,
        objective: Objective,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<LossParts> {
        let mut tape = Tape::new();
        let nodes = self.record_loss(&mut tape, s, objective, mode, rng)?;
        let parts = Self::parts(&tape, &nodes);
        if parts.total.is_finite() {
            tape.backward(nodes.total, &mut self.store);
        }
        Ok(parts)
    }

    /// Viterbi label ids under eval mode.
    pub fn predict_ids(&self, s: &EncodedSentence) -> Result<Vec<usize>> {
        // eval mode draws nothing from the generator
        let mut rng = <Rng as rand::SeedableRng>::seed_from_u64(0);
        let out = self.forward(s, Mode::Eval, &mut rng)?;
        let mut p = self.crf.potentials(&self.store, &out.z)?;
        if self.config.constrained_decoding {
            let labels = &self.vocabs.labels.tokens()[..self.vocabs.num_labels()];
            p.mask(&crf::bioes_transition_mask(labels));
        }
        Ok(crf::viterbi(&p).0)
    }

    pub fn predict_tags<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<String>> {
        let ids = self.predict_ids(&self.vocabs.encode_words(words))?;
        Ok(ids
            .into_iter()
            .map(|i| self.vocabs.labels.token(i).expect("label id in range").to_string())
            .collect())
    }

    pub fn word_lstm_param_ids(&self) -> Vec<ParamId> {
        self.word_forward
            .param_ids()
            .into_iter()
            .chain(self.word_backward.param_ids())
            .collect()
    }

    /// Element counts by parameter group.
    pub fn parameter_count(&self) -> ParamCounts {
        let count = |ids: &[ParamId]| ids.iter().map(|&i| self.store.data(i).len()).sum::<usize>();
        let groups = vec![
            ("char_embeddings", count(&[self.char_lm.char_emb])),
            ("char_lstms", count(&self.char_lm.lstm_param_ids())),
            ("highway", count(&self.char_lm.highway_param_ids())),
            ("word_embeddings", count(&[self.word_emb])),
            ("word_lstms", count(&self.word_lstm_param_ids())),
            ("crf", count(&self.crf.param_ids())),
            ("lm_heads", count(&self.char_lm.lm_head_param_ids())),
        ];
        let total = groups.iter().map(|(_, c)| c).sum();
        debug_assert_eq!(total, self.store.element_count());
        ParamCounts { groups, total }
    }
}
