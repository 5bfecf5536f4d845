//! Count-based token embeddings: positive PMI over a symmetric window,
//! reduced with a seeded randomized truncated SVD.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Pool;

const OVERSAMPLE: usize = 10;
const POWER_ITERS: usize = 3;

/// Sparse row-major matrix; each row sorted by column.
struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    fn dim(&self) -> usize {
        self.rows.len()
    }

    /// `self * x` for a dense `x` with `dim` rows.
    fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), x.ncols());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                for c in 0..x.ncols() {
                    out[(i, c)] += v * x[(j, c)];
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Embeddings {
    vocab: BTreeMap<String, usize>,
    vectors: DMatrix<f64>,
}

impl Embeddings {
    pub fn dims(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vector(&self, word: &str) -> Option<Vec<f64>> {
        let row = *self.vocab.get(&word.to_lowercase())?;
        Some(self.vectors.row(row).iter().copied().collect())
    }

    /// Mean of the token vectors of a space-joined phrase; unknown tokens
    /// contribute zeros.
    pub fn phrase_vector(&self, phrase: &str) -> Vec<f64> {
        let mut acc = vec![0.0; self.dims()];
        let mut n = 0usize;
        for word in phrase.split(' ') {
            n += 1;
            if let Some(v) = self.vector(word) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
        }
        if n > 0 {
            for a in &mut acc {
                *a /= n as f64;
            }
        }
        acc
    }
}

fn ppmi_matrix(pool: &Pool, window: usize) -> (BTreeMap<String, usize>, SparseRows) {
    let mut vocab = BTreeMap::new();
    for s in &pool.sentences {
        for t in &s.tokens {
            let next = vocab.len();
            vocab.entry(t.surface.to_lowercase()).or_insert(next);
        }
    }
    // Re-index in lexicographic order so ids do not depend on pool order.
    for (i, v) in vocab.values_mut().enumerate() {
        *v = i;
    }
    let v = vocab.len();
    let mut counts: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); v];
    for s in &pool.sentences {
        let ids: Vec<usize> = s.tokens.iter().map(|t| vocab[&t.surface.to_lowercase()]).collect();
        for (i, &w) in ids.iter().enumerate() {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(ids.len());
            for (j, &c) in ids.iter().enumerate().take(hi).skip(lo) {
                if j != i {
                    *counts[w].entry(c).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    let row_sums: Vec<f64> = counts.iter().map(|r| r.values().sum()).collect();
    let mut col_sums = vec![0.0; v];
    for row in &counts {
        for (&c, &x) in row {
            col_sums[c] += x;
        }
    }
    let total: f64 = row_sums.iter().sum();
    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(w, row)| {
            row.into_iter()
                .filter_map(|(c, x)| {
                    let pmi = (x * total / (row_sums[w] * col_sums[c])).ln();
                    (pmi > 0.0).then_some((c, pmi))
                })
                .collect()
        })
        .collect();
    (vocab, SparseRows { rows })
}

fn orthonormalize(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Trains `dims`-dimensional vectors for every lower-cased token type in
/// the pool. The result is a pure function of `(pool, dims, window, seed)`.
pub fn train_embeddings(pool: &Pool, dims: usize, window: usize, seed: u64) -> Embeddings {
    let (vocab, m) = ppmi_matrix(pool, window);
    let v = m.dim();
    let k = dims.min(v);
    if k == 0 {
        return Embeddings {
            vocab,
            vectors: DMatrix::zeros(v, 0),
        };
    }
    let r = (k + OVERSAMPLE).min(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(v, r, |_, _| rng.random_range(-1.0..1.0));

    // The PPMI matrix is symmetric, so power iteration needs no transpose.
    let mut q = orthonormalize(m.mul_dense(&omega));
    for _ in 0..POWER_ITERS {
        q = orthonormalize(m.mul_dense(&q));
    }
    let b = m.mul_dense(&q).transpose(); // r x v, equals Q^T M
    let gram = &b * b.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    // Right singular vectors W = B^T U_B / s; embeddings are M W s^{-1/2}.
    // Projecting rows of M keeps identical rows bitwise identical.
    let mut basis = DMatrix::zeros(v, k);
    let mut scale = vec![0.0; k];
    for (col, &idx) in order.iter().take(k).enumerate() {
        let s = eig.eigenvalues[idx].max(0.0).sqrt();
        if s <= 1e-12 {
            continue;
        }
        let u = eig.eigenvectors.column(idx);
        let mut w = b.transpose() * u / s;
        // Fix the sign so the largest-magnitude entry is positive.
        let (mut best, mut best_abs) = (0usize, -1.0f64);
        for (i, x) in w.iter().enumerate() {
            if x.abs() > best_abs {
                best = i;
                best_abs = x.abs();
            }
        }
        if w[best] < 0.0 {
            w = -w;
        }
        basis.set_column(col, &w);
        scale[col] = 1.0 / s.sqrt();
    }
    let mut vectors = m.mul_dense(&basis);
    for (c, s) in scale.iter().enumerate() {
        vectors.column_mut(c).scale_mut(*s);
    }
    Embeddings { vocab, vectors }
}
