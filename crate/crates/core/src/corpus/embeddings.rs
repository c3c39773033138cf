use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::Vocabulary;
use crate::nn_core::init::embedding_bound;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingCoverage {
    /// Vocabulary rows filled from the file.
    pub found: usize,
    /// Vocabulary rows left at random init.
    pub missing: usize,
    /// Lines in the file.
    pub file_entries: usize,
}

/// Word vectors in `token v1 .. v_dim` text format, as a row-major
/// `|V| x dim` table. Rows for words missing from the file are uniform in
/// `±sqrt(3 / dim)`.
pub fn load_pretrained_embeddings<R: Rng>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, EmbeddingCoverage)> {
    let file = File::open(path)
        .map_err(|e| Error::io(format!("opening embeddings {}", path.display()), e))?;
    read_embeddings(BufReader::new(file), vocab, dim, rng).map_err(|e| e.with_path(path))
}

pub fn read_embeddings<B: BufRead, R: Rng>(
    reader: B,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, EmbeddingCoverage)> {
    let bound = embedding_bound(dim);
    let mut table: Vec<f64> = (0..vocab.len() * dim)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    let mut seen = vec![false; vocab.len()];
    let mut coverage = EmbeddingCoverage {
        found: 0,
        missing: 0,
        file_entries: 0,
    };
    let mut file_dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading embeddings", e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        // word2vec-style "count dim" header
        if i == 0 && values.len() == 1 && token.parse::<u64>().is_ok() && values[0].parse::<u64>().is_ok() {
            continue;
        }
        match file_dim {
            None if values.len() != dim => {
                return Err(Error::Config(format!(
                    "embedding file has dimension {}, config expects {dim}",
                    values.len()
                )))
            }
            None => file_dim = Some(dim),
            Some(d) if values.len() != d => {
                return Err(Error::parse(
                    i + 1,
                    format!("expected {d} values, found {}", values.len()),
                ))
            }
            Some(_) => {}
        }
        coverage.file_entries += 1;
        let Some(id) = vocab.get(token) else { continue };
        // exact-case entries win over case-folded ones; first entry wins otherwise
        if seen[id] && vocab.token(id) != Some(token) {
            continue;
        }
        let row = &mut table[id * dim..(id + 1) * dim];
        for (slot, v) in row.iter_mut().zip(&values) {
            *slot = v
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad real {v:?}")))?;
        }
        seen[id] = true;
    }
    coverage.found = seen.iter().filter(|s| **s).count();
    coverage.missing = vocab.len() - coverage.found;
    Ok((table, coverage))
}
