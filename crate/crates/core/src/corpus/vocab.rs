use std::collections::{BTreeSet, HashMap};

use super::LabeledSentence;
use crate::{Error, Result};

pub const UNK_WORD: &str = "<unk>";
pub const UNK_CHAR: &str = "<unk>";
pub const SPACE: &str = " ";
pub const START_LABEL: &str = "<START>";

/// Token/id bijection with an optional fallback id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk_id: Option<usize>,
    lowercase: bool,
}

impl Vocabulary {
    /// Build from an ordered token list. `unk` must appear in `tokens` when given.
    pub fn from_tokens(tokens: Vec<String>, unk: Option<&str>, lowercase: bool) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Domain(format!("duplicate vocabulary token {t:?}")));
            }
        }
        let unk_id = match unk {
            Some(u) => Some(
                *index
                    .get(u)
                    .ok_or_else(|| Error::Domain(format!("unknown token {u:?} missing")))?,
            ),
            None => None,
        };
        Ok(Vocabulary {
            tokens,
            index,
            unk_id,
            lowercase,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> Option<usize> {
        self.unk_id
    }

    pub fn lowercases(&self) -> bool {
        self.lowercase
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Exact id of a retained token (after case folding when enabled).
    pub fn get(&self, token: &str) -> Option<usize> {
        if self.lowercase {
            self.index.get(&token.to_lowercase()).copied()
        } else {
            self.index.get(token).copied()
        }
    }

    /// Id of `token`, falling back to the unknown id. Only `None` for
    /// vocabularies without one.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.get(token).or(self.unk_id)
    }
}

/// Word, character and label vocabularies of one corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabs {
    pub words: Vocabulary,
    pub chars: Vocabulary,
    pub labels: Vocabulary,
}

impl Vocabs {
    pub fn space_id(&self) -> usize {
        self.chars.get(SPACE).expect("char vocabulary always holds space")
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.words.lookup(word).expect("word vocabulary has unk")
    }

    pub fn char_id(&self, c: char) -> usize {
        let mut buf = [0u8; 4];
        self.chars
            .lookup(c.encode_utf8(&mut buf))
            .expect("char vocabulary has unk")
    }

    /// Number of real labels (the synthetic start label excluded).
    pub fn num_labels(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn start_label_id(&self) -> usize {
        self.labels.len() - 1
    }
}

/// Build vocabularies from training sentences.
///
/// Words are case-folded and kept when their frequency is at least `min_freq`;
/// the rest share `<unk>` (id 0). Characters keep case; id 0 is the unknown
/// character and id 1 the space. Labels are sorted with `<START>` appended.
pub fn build_vocab(sentences: &[LabeledSentence], min_freq: usize) -> Result<Vocabs> {
    if sentences.is_empty() {
        return Err(Error::Domain("cannot build vocabularies from no sentences".into()));
    }
    let mut freq: HashMap<String, usize> = HashMap::new();
    let mut chars = BTreeSet::new();
    let mut labels = BTreeSet::new();
    for s in sentences {
        for w in &s.words {
            *freq.entry(w.to_lowercase()).or_default() += 1;
            chars.extend(w.chars());
        }
        labels.extend(s.labels.iter().cloned());
    }

    let mut kept: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(w, c)| *c >= min_freq && w != UNK_WORD)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let word_tokens = std::iter::once(UNK_WORD.to_string())
        .chain(kept.into_iter().map(|(w, _)| w))
        .collect();

    chars.remove(&' ');
    let char_tokens = [UNK_CHAR.to_string(), SPACE.to_string()]
        .into_iter()
        .chain(chars.into_iter().map(String::from))
        .collect();

    labels.remove(START_LABEL);
    let label_tokens = labels
        .into_iter()
        .chain(std::iter::once(START_LABEL.to_string()))
        .collect();

    Ok(Vocabs {
        words: Vocabulary::from_tokens(word_tokens, Some(UNK_WORD), true)?,
        chars: Vocabulary::from_tokens(char_tokens, Some(UNK_CHAR), false)?,
        labels: Vocabulary::from_tokens(label_tokens, None, false)?,
    })
}
