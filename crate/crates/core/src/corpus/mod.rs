//! Corpus handling: CoNLL column files, vocabularies, BIOES spans, the
//! character stream and pre-trained word vectors.

mod bioes;
mod chars;
mod conll;
mod embeddings;
mod vocab;

pub use bioes::{decode_bioes, encode_bioes, spans_to_bioes, Span};
pub use chars::{build_char_stream, CharStream};
pub use conll::{classify_line, parse_conll, serialize_conll, ConllLine, LabeledSentence, DOCSTART};
pub use embeddings::{load_pretrained_embeddings, read_embeddings, EmbeddingCoverage};
pub use vocab::{build_vocab, Vocabs, Vocabulary, SPACE, START_LABEL, UNK_CHAR, UNK_WORD};

/// A sentence mapped onto vocabulary ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    /// Case-folded, UNK-mapped word ids (embedding rows and LM targets).
    pub word_ids: Vec<usize>,
    pub chars: CharStream,
    /// Gold label ids, when the labels are known to the label vocabulary.
    pub label_ids: Option<Vec<usize>>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

impl Vocabs {
    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> EncodedSentence {
        EncodedSentence {
            word_ids: words.iter().map(|w| self.word_id(w.as_ref())).collect(),
            chars: build_char_stream(words, self),
            label_ids: None,
        }
    }

    pub fn encode(&self, sentence: &LabeledSentence) -> EncodedSentence {
        let mut e = self.encode_words(&sentence.words);
        e.label_ids = sentence
            .labels
            .iter()
            .map(|l| self.labels.get(l).filter(|&id| id < self.num_labels()))
            .collect();
        e
    }
}
