//! Neural sequence labeling with a character-level bidirectional language model
//! co-trained alongside a word-level bi-LSTM-CRF tagger.
//!
//! The character LSTMs read the sentence as one stream with a space after every
//! word. Their states at the spaces are routed through four highway units: two
//! feed the word-level tagger, two feed a word-prediction language model. The
//! tagger is trained with the CRF negative log-likelihood and the language model
//! with its own negative log-likelihood; the two are summed.
//!
//! Module map:
//!
//! - [`nn_core`]: parameters, the reverse-mode tape, LSTM cells, highway units.
//! - [`corpus`]: CoNLL parsing, vocabularies, BIOES conversion, character streams.
//! - [`char_lm`]: character LSTMs, highway routing and the language-model loss.
//! - [`crf`]: linear-chain CRF scoring, partition function and Viterbi decoding.
//! - [`model`]: the assembled network and its joint objective.
//! - [`trainer`]: SGD with momentum, learning-rate decay, early stopping, checkpoints.
//! - [`metrics`]: span-level micro P/R/F1 and token accuracy.
//! - [`cli`]: config files and the `train` / `tag` / `eval` commands.

pub mod char_lm;
pub mod cli;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn_core;
pub mod trainer;

pub use error::{Error, Result};
