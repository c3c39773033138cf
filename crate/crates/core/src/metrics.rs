//! Span-level micro precision/recall/F1 and token accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::corpus::{decode_bioes, Span};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(true_positives: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(true_positives, predicted);
        let recall = ratio(true_positives, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            true_positives,
            predicted,
            gold,
            precision,
            recall,
            f1,
        }
    }
}

/// Exact-match true positives between two span lists (multiset semantics).
fn matches(gold: &[Span], predicted: &[Span]) -> usize {
    let mut pool: HashMap<&Span, usize> = HashMap::new();
    for s in gold {
        *pool.entry(s).or_default() += 1;
    }
    predicted
        .iter()
        .filter(|s| match pool.get_mut(s) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Micro-averaged P/R/F1 over per-sentence span lists.
pub fn span_prf(gold: &[Vec<Span>], predicted: &[Vec<Span>]) -> Result<Prf> {
    if gold.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (g, p) in gold.iter().zip(predicted) {
        tp += matches(g, p);
        np += p.len();
        ng += g.len();
    }
    Ok(Prf::from_counts(tp, np, ng))
}

fn check_aligned<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> Result<()> {
    if gold.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    if let Some((i, (g, p))) = gold
        .iter()
        .zip(predicted)
        .enumerate()
        .find(|(_, (g, p))| g.len() != p.len())
    {
        return Err(Error::Domain(format!(
            "sentence {i}: {} gold labels but {} predicted",
            g.len(),
            p.len()
        )));
    }
    Ok(())
}

/// Span P/R/F1 from label sequences (decoded with [`decode_bioes`]).
pub fn label_prf<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> Result<Prf> {
    check_aligned(gold, predicted)?;
    let g: Vec<Vec<Span>> = gold.iter().map(|l| decode_bioes(l)).collect();
    let p: Vec<Vec<Span>> = predicted.iter().map(|l| decode_bioes(l)).collect();
    span_prf(&g, &p)
}

/// Fraction of positions whose labels agree, pooled over sentences.
pub fn token_accuracy<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> Result<f64> {
    check_aligned(gold, predicted)?;
    let total: usize = gold.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Domain("token accuracy over zero tokens".into()));
    }
    let correct = gold
        .iter()
        .zip(predicted)
        .flat_map(|(g, p)| g.iter().zip(p))
        .filter(|(a, b)| a.as_ref() == b.as_ref())
        .count();
    Ok(correct as f64 / total as f64)
}

/// Human-readable report in the layout of the conlleval script: an overall
/// line followed by one line per entity type.
pub fn conlleval_report<S: AsRef<str>>(gold: &[Vec<S>], predicted: &[Vec<S>]) -> Result<String> {
    check_aligned(gold, predicted)?;
    let tokens: usize = gold.iter().map(Vec::len).sum();
    let mut by_type: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        let gs = decode_bioes(g);
        let ps = decode_bioes(p);
        for s in &gs {
            by_type.entry(s.label.clone()).or_default().2 += 1;
        }
        for s in &ps {
            by_type.entry(s.label.clone()).or_default().1 += 1;
        }
        let mut pool: HashMap<&Span, usize> = HashMap::new();
        for s in &gs {
            *pool.entry(s).or_default() += 1;
        }
        for s in &ps {
            if let Some(c) = pool.get_mut(s).filter(|c| **c > 0) {
                *c -= 1;
                by_type.entry(s.label.clone()).or_default().0 += 1;
            }
        }
    }
    let overall = label_prf(gold, predicted)?;
    let acc = if tokens == 0 { 0.0 } else { token_accuracy(gold, predicted)? };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "processed {tokens} tokens with {} phrases; found: {} phrases; correct: {}.",
        overall.gold, overall.predicted, overall.true_positives
    );
    let _ = writeln!(
        out,
        "accuracy: {:6.2}%; precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}",
        100.0 * acc,
        100.0 * overall.precision,
        100.0 * overall.recall,
        100.0 * overall.f1
    );
    for (ty, (tp, np, ng)) in by_type {
        let m = Prf::from_counts(tp, np, ng);
        let _ = writeln!(
            out,
            "{ty:>17}: precision: {:6.2}%; recall: {:6.2}%; FB1: {:6.2}  {np}",
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1
        );
    }
    Ok(out)
}
