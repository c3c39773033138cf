use rand::Rng;

/// Glorot/Xavier uniform entries for a `rows x cols` matrix, row-major.
pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows * cols, bound, rng)
}

pub fn uniform<R: Rng>(len: usize, bound: f64, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Uniform bound `sqrt(3 / dim)` used for embedding rows.
pub fn embedding_bound(dim: usize) -> f64 {
    (3.0 / dim as f64).sqrt()
}
