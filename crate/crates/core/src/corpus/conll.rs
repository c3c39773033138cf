use crate::{Error, Result};

/// Words `x_1..x_n` with one label per word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledSentence {
    pub words: Vec<String>,
    pub labels: Vec<String>,
}

impl LabeledSentence {
    pub fn new(words: Vec<String>, labels: Vec<String>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Domain("sentence has no words".into()));
        }
        if words.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} words but {} labels",
                words.len(),
                labels.len()
            )));
        }
        Ok(LabeledSentence { words, labels })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub const DOCSTART: &str = "-DOCSTART-";

/// One physical line of a column file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConllLine<'a> {
    Blank,
    DocStart,
    Token { columns: Vec<&'a str> },
}

pub fn classify_line(line: &str) -> ConllLine<'_> {
    let columns: Vec<&str> = line.split_whitespace().collect();
    match columns.first() {
        None => ConllLine::Blank,
        Some(&DOCSTART) => ConllLine::DocStart,
        Some(_) => ConllLine::Token { columns },
    }
}

/// Parse labeled column text: first column is the word, last the label, blank
/// lines end sentences, `-DOCSTART-` lines are skipped.
pub fn parse_conll(text: &str) -> Result<Vec<LabeledSentence>> {
    let mut out = Vec::new();
    let mut words = Vec::new();
    let mut labels = Vec::new();
    let mut flush = |words: &mut Vec<String>, labels: &mut Vec<String>| {
        if !words.is_empty() {
            out.push(LabeledSentence {
                words: std::mem::take(words),
                labels: std::mem::take(labels),
            });
        }
    };
    for (i, line) in text.lines().enumerate() {
        match classify_line(line) {
            ConllLine::Blank => flush(&mut words, &mut labels),
            ConllLine::DocStart => {}
            ConllLine::Token { columns } => {
                if columns.len() < 2 {
                    return Err(Error::parse(
                        i + 1,
                        format!("expected at least 2 columns, found {}: {line:?}", columns.len()),
                    ));
                }
                words.push(columns[0].to_string());
                labels.push(columns[columns.len() - 1].to_string());
            }
        }
    }
    flush(&mut words, &mut labels);
    Ok(out)
}

/// Two-column `word label` text with a blank line after every sentence.
pub fn serialize_conll(sentences: &[LabeledSentence]) -> String {
    let mut s = String::new();
    for sent in sentences {
        for (w, l) in sent.words.iter().zip(&sent.labels) {
            s.push_str(w);
            s.push(' ');
            s.push_str(l);
            s.push('\n');
        }
        s.push('\n');
    }
    s
}
