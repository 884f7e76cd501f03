//! Discretized-feature embeddings.
//!
//! Each feature owns a `(n_intervals × dim)` matrix. A step's embedding is
//! the sum over features of `indicator · matrix`, which for one-hot
//! indicators is the sum of the selected rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{check_len, gemm, Matrix, Op, ShapeError};

pub const INIT_UPPER: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tables: Vec<Matrix>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn from_matrices(tables: Vec<Matrix>) -> Result<Self, ShapeError> {
        let dim = tables.first().map_or(0, Matrix::cols);
        for t in &tables {
            check_len("embedding dimension", dim, t.cols())?;
            if t.rows() == 0 {
                return Err(ShapeError::mismatch("embedding rows", "at least 1", 0));
            }
        }
        Ok(EmbeddingTable { tables, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_features(&self) -> usize {
        self.tables.len()
    }

    pub fn bin_counts(&self) -> Vec<usize> {
        self.tables.iter().map(Matrix::rows).collect()
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.tables
    }

    pub fn matrices_mut(&mut self) -> &mut [Matrix] {
        &mut self.tables
    }

    pub fn zeros_like(&self) -> Self {
        EmbeddingTable {
            tables: self.tables.iter().map(Matrix::zeros_like).collect(),
            dim: self.dim,
        }
    }

    fn check_indicators(&self, indicators: &[Vec<f64>]) -> Result<(), ShapeError> {
        check_len("indicator feature count", self.tables.len(), indicators.len())?;
        for (ind, t) in indicators.iter().zip(&self.tables) {
            check_len("indicator length", t.rows(), ind.len())?;
        }
        Ok(())
    }
}

/// Every entry drawn independently from `U[0, 0.001]`.
pub fn init_embedding(bin_counts: &[usize], dim: usize, seed: u64) -> Result<EmbeddingTable, ShapeError> {
    if dim == 0 {
        return Err(ShapeError::mismatch("embedding dimension", "at least 1", 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tables = bin_counts
        .iter()
        .map(|&rows| Matrix::from_fn(rows, dim, |_, _| rng.random_range(0.0..=INIT_UPPER)))
        .collect();
    EmbeddingTable::from_matrices(tables)
}

/// `Σ_f indicator_f · W_f`, accumulated feature by feature, row by row.
pub fn embed_matmul(indicators: &[Vec<f64>], table: &EmbeddingTable) -> Result<Vec<f64>, ShapeError> {
    table.check_indicators(indicators)?;
    let mut out = vec![0.0; table.dim];
    for (ind, w) in indicators.iter().zip(&table.tables) {
        for (r, &weight) in ind.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(w.row(r)) {
                *o += weight * v;
            }
        }
    }
    Ok(out)
}

/// Sum of the selected rows, in feature order.
pub fn embed_lookup(indices: &[usize], table: &EmbeddingTable) -> Result<Vec<f64>, ShapeError> {
    check_len("index feature count", table.tables.len(), indices.len())?;
    let mut out = vec![0.0; table.dim];
    for (&idx, w) in indices.iter().zip(&table.tables) {
        if idx >= w.rows() {
            return Err(ShapeError::OutOfBounds {
                context: "embedding lookup",
                index: idx,
                len: w.rows(),
            });
        }
        for (o, v) in out.iter_mut().zip(w.row(idx)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Gradient of each feature matrix: `indicator ⊗ upstream`.
pub fn embed_backward(
    upstream: &[f64],
    indicators: &[Vec<f64>],
    table: &EmbeddingTable,
) -> Result<EmbeddingTable, ShapeError> {
    table.check_indicators(indicators)?;
    check_len("upstream gradient", table.dim, upstream.len())?;
    let mut grads = table.zeros_like();
    for (ind, g) in indicators.iter().zip(grads.tables.iter_mut()) {
        g.add_outer(ind, upstream);
    }
    Ok(grads)
}

/// Whole-sequence forward: `indicators[f]` is `(T × n_intervals_f)`.
pub fn embed_sequence(indicators: &[Matrix], table: &EmbeddingTable) -> Result<Matrix, ShapeError> {
    check_len("indicator feature count", table.tables.len(), indicators.len())?;
    let steps = indicators.first().map_or(0, Matrix::rows);
    let mut out = Matrix::zeros(steps, table.dim);
    for (ind, w) in indicators.iter().zip(&table.tables) {
        check_len("indicator steps", steps, ind.rows())?;
        check_len("indicator length", w.rows(), ind.cols())?;
        gemm(1.0, ind, Op::N, w, Op::N, 1.0, &mut out);
    }
    Ok(out)
}

/// Accumulates `indicators[f]ᵀ · upstream` into `grads`.
pub fn embed_sequence_backward(
    upstream: &Matrix,
    indicators: &[Matrix],
    grads: &mut EmbeddingTable,
) -> Result<(), ShapeError> {
    check_len("indicator feature count", grads.tables.len(), indicators.len())?;
    for (ind, g) in indicators.iter().zip(grads.tables.iter_mut()) {
        check_len("indicator steps", upstream.rows(), ind.rows())?;
        gemm(1.0, ind, Op::T, upstream, Op::N, 1.0, g);
    }
    Ok(())
}
