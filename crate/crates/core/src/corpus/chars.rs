use super::Vocabs;

/// The sentence as one character sequence: a space, then each word followed by
/// a space. `boundaries[i]` is the index of the space after word `i` (the
/// leading space is boundary 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharStream {
    pub char_ids: Vec<usize>,
    pub boundaries: Vec<usize>,
}

impl CharStream {
    /// Number of words.
    pub fn num_words(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.char_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.char_ids.is_empty()
    }

    /// Character ids of word `i` (0-based).
    pub fn word_chars(&self, i: usize) -> &[usize] {
        &self.char_ids[self.boundaries[i] + 1..self.boundaries[i + 1]]
    }
}

pub fn build_char_stream<S: AsRef<str>>(words: &[S], vocabs: &Vocabs) -> CharStream {
    let space = vocabs.space_id();
    let mut char_ids = vec![space];
    let mut boundaries = vec![0];
    for w in words {
        char_ids.extend(w.as_ref().chars().map(|c| vocabs.char_id(c)));
        boundaries.push(char_ids.len());
        char_ids.push(space);
    }
    CharStream {
        char_ids,
        boundaries,
    }
}
