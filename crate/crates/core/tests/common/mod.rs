#![allow(dead_code)]

use std::collections::HashMap;

use lm_lstm_crf::corpus::LabeledSentence;
use lm_lstm_crf::model::ModelConfig;

const PEOPLE: [&str; 6] = ["john", "mary", "paul", "anna", "omar", "lena"];
const PLACES: [&str; 4] = ["paris", "rome", "berlin", "oslo"];
const TWO_WORD: [[&str; 2]; 2] = [["new", "york"], ["san", "jose"]];

/// Twenty BIOES-labelled sentences over two entity types and ~30 word types,
/// every word occurring at least five times.
pub fn ner_corpus() -> Vec<LabeledSentence> {
    let (mut p, mut l, mut m) = (0, 0, 0);
    let mut person = || {
        p += 1;
        PEOPLE[(p - 1) % PEOPLE.len()]
    };
    let mut place = || {
        l += 1;
        PLACES[(l - 1) % PLACES.len()]
    };
    let mut two = || {
        m += 1;
        TWO_WORD[(m - 1) % TWO_WORD.len()]
    };
    let mut out = Vec::new();
    for i in 0..20 {
        let mut toks: Vec<(&str, String)> = Vec::new();
        let per = |w: &'static str| (w, "S-PER".to_string());
        let loc = |w: &'static str| (w, "S-LOC".to_string());
        let o = |w: &'static str| (w, "O".to_string());
        match i % 4 {
            0 => {
                toks.extend([per(person()), o("met"), per(person()), o("in"), loc(place()), o("today"), o(".")]);
            }
            1 => {
                let [a, b] = two();
                toks.extend([o("yesterday"), per(person()), o("visited"), o("the"), o("city"), o("of")]);
                toks.extend([(a, "B-LOC".into()), (b, "E-LOC".into()), o(".")]);
            }
            2 => {
                toks.extend([per(person()), o("and"), per(person()), o("went"), o("to"), loc(place())]);
                toks.extend([o("from"), loc(place()), o(".")]);
            }
            _ => {
                let [a, b] = two();
                toks.extend([per(person()), o("lives"), o("in"), (a, "B-LOC".into()), (b, "E-LOC".into())]);
                toks.extend([o("and"), o("likes"), loc(place()), o("today"), o(".")]);
            }
        }
        let (w, t): (Vec<String>, Vec<String>) = toks.into_iter().map(|(w, t)| (w.to_string(), t)).unzip();
        out.push(LabeledSentence::new(w, t).unwrap());
    }
    out
}

pub fn word_counts(s: &[LabeledSentence]) -> HashMap<String, usize> {
    let mut c = HashMap::new();
    for w in s.iter().flat_map(|s| &s.words) {
        *c.entry(w.clone()).or_default() += 1;
    }
    c
}

pub fn small_config(state: usize) -> ModelConfig {
    ModelConfig {
        char_state: state,
        word_state: state,
        ..ModelConfig::default()
    }
}
