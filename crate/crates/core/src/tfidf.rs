//! TF-IDF vectorization and truncated SVD, the frequency-feature baseline.
//!
//! Tokens are lowercased maximal alphanumeric runs. With `n` documents and
//! document frequency `df(t)`, `idf(t) = ln((1 + n) / (1 + df(t))) + 1`, and each
//! document vector `tf · idf` is scaled to unit ℓ2 norm.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::features::FeatureMatrix;
use crate::linalg;

pub const DEFAULT_COMPONENTS: usize = 100;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Tokens in column order (sorted).
    pub tokens: Vec<String>,
    pub doc_freq: Vec<usize>,
    pub n_docs: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

pub fn fit_tfidf<S: AsRef<str>>(corpus: &[S]) -> Result<Vocabulary> {
    if corpus.is_empty() {
        bail!(Data, "TF-IDF needs a nonempty corpus");
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let mut toks = tokenize(doc.as_ref());
        toks.sort_unstable();
        toks.dedup();
        for t in toks {
            *df.entry(t).or_default() += 1;
        }
    }
    let (tokens, doc_freq) = df.into_iter().unzip();
    Ok(Vocabulary::from_parts(tokens, doc_freq, corpus.len()))
}

impl Vocabulary {
    pub fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>, n_docs: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            doc_freq,
            n_docs,
            index,
        }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn idf(&self, column: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[column] as f64)).ln() + 1.0
    }

    /// Sparse unit-norm TF-IDF vector; tokens outside the vocabulary are dropped.
    pub fn vectorize(&self, text: &str) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(c) = self.column(&tok) {
                *tf.entry(c).or_default() += 1.0;
            }
        }
        let mut v: Vec<(usize, f64)> = tf.into_iter().map(|(c, f)| (c, f * self.idf(c))).collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }

    pub fn transform<S: AsRef<str> + Sync>(&self, docs: &[S]) -> CsrMatrix {
        let rows: Vec<Vec<(usize, f64)>> = docs.par_iter().map(|d| self.vectorize(d.as_ref())).collect();
        CsrMatrix::from_sparse_rows(&rows, self.len())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_sparse_rows(rows: &[Vec<(usize, f64)>], cols: usize) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for &(c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(data: &[f64], rows: usize, cols: usize) -> Self {
        let sparse: Vec<Vec<(usize, f64)>> = data
            .chunks_exact(cols)
            .map(|r| r.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect();
        debug_assert_eq!(sparse.len(), rows);
        Self::from_sparse_rows(&sparse, cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// `self · b` for a dense row-major `cols x k` matrix `b`.
    fn mul_dense(&self, b: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * k];
        out.par_chunks_mut(k).enumerate().for_each(|(i, o)| {
            for (c, v) in self.row(i) {
                for (oj, bj) in o.iter_mut().zip(&b[c * k..(c + 1) * k]) {
                    *oj += v * bj;
                }
            }
        });
        out
    }

    /// `selfᵀ · a` for a dense row-major `rows x k` matrix `a`.
    fn tmul_dense(&self, a: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.cols * k];
        for i in 0..self.rows {
            let ai = &a[i * k..(i + 1) * k];
            for (c, v) in self.row(i) {
                for (oj, aj) in out[c * k..(c + 1) * k].iter_mut().zip(ai) {
                    *oj += v * aj;
                }
            }
        }
        out
    }
}

/// Top-`k` right singular directions of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdProjection {
    pub k: usize,
    /// Row-major `cols x k`; column `j` is the `j`-th right singular vector.
    pub components: Vec<f64>,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    /// Stop when no singular value moves by more than `tol · σ_max` in one sweep.
    pub tol: f64,
    pub max_iter: usize,
    /// Extra block columns iterated alongside the `k` requested ones.
    pub oversample: usize,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            oversample: 10,
            seed: 0,
        }
    }
}

pub fn fit_svd(matrix: &CsrMatrix, k: usize) -> Result<SvdProjection> {
    fit_svd_with(matrix, k, SvdOptions::default())
}

/// Orthogonal (block power) iteration on `XᵀX` with a Rayleigh-Ritz step each sweep.
pub fn fit_svd_with(matrix: &CsrMatrix, k: usize, opts: SvdOptions) -> Result<SvdProjection> {
    let (n, v) = (matrix.rows(), matrix.cols());
    if k == 0 || k > n.min(v) {
        bail!(Config, "k = {k} must lie in 1..={}", n.min(v));
    }
    let block = (k + opts.oversample).min(n.min(v));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<f64> = (0..v * block).map(|_| StandardNormal.sample(&mut rng)).collect();
    linalg::orthonormalize_columns(&mut q, v, block);

    let mut sigma = vec![0.0; block];
    let mut ritz = q.clone();
    for _ in 0..opts.max_iter {
        // Rayleigh-Ritz on span(q): B = (Xq)ᵀ(Xq) = Wᵀ diag(σ²) W.
        let xq = matrix.mul_dense(&q, block);
        let mut gram = vec![0.0; block * block];
        for row in xq.chunks_exact(block) {
            for a in 0..block {
                for b in 0..=a {
                    gram[a * block + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..block {
            for b in 0..a {
                gram[b * block + a] = gram[a * block + b];
            }
        }
        let (eig, w) = linalg::symmetric_eigen(&gram, block);
        let new_sigma: Vec<f64> = eig.iter().map(|e| e.max(0.0).sqrt()).collect();
        ritz = vec![0.0; v * block];
        for r in 0..v {
            let qr = &q[r * block..(r + 1) * block];
            let out = &mut ritz[r * block..(r + 1) * block];
            for (c, o) in out.iter_mut().enumerate() {
                *o = (0..block).map(|t| qr[t] * w[t * block + c]).sum();
            }
        }
        let scale = new_sigma[0].max(f64::MIN_POSITIVE);
        let moved = new_sigma[..k]
            .iter()
            .zip(&sigma[..k])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        sigma = new_sigma;
        if moved <= opts.tol * scale || block == v {
            break;
        }
        // q <- orth(XᵀX · ritz)
        let x_ritz = matrix.mul_dense(&ritz, block);
        q = matrix.tmul_dense(&x_ritz, block);
        linalg::orthonormalize_columns(&mut q, v, block);
    }

    let mut components = vec![0.0; v * k];
    for r in 0..v {
        components[r * k..(r + 1) * k].copy_from_slice(&ritz[r * block..r * block + k]);
    }
    // Fix signs: largest-magnitude entry of each direction is positive.
    for c in 0..k {
        let (mut best, mut sign) = (0.0, 1.0);
        for r in 0..v {
            let x = components[r * k + c];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for r in 0..v {
                components[r * k + c] = -components[r * k + c];
            }
        }
    }
    Ok(SvdProjection {
        k,
        components,
        singular_values: sigma[..k].to_vec(),
    })
}

impl SvdProjection {
    pub fn input_dim(&self) -> usize {
        self.components.len() / self.k
    }

    /// Projects every row onto the stored directions, `X · V_k`.
    pub fn project(&self, matrix: &CsrMatrix, ids: Vec<String>) -> Result<FeatureMatrix> {
        if matrix.cols() != self.input_dim() {
            bail!(
                Shape,
                "matrix has {} columns, projection expects {}",
                matrix.cols(),
                self.input_dim()
            );
        }
        FeatureMatrix::new(ids, self.k, matrix.mul_dense(&self.components, self.k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_contract() {
        assert_eq!(tokenize("A  a!"), vec!["a", "a"]);
        assert_eq!(tokenize("Hello, World-42"), vec!["hello", "world", "42"]);
        assert!(tokenize("  ... ").is_empty());
    }

    #[test]
    fn idf_hand_values() {
        let vocab = fit_tfidf(&["a a", "a b"]).unwrap();
        assert_eq!(vocab.tokens, vec!["a", "b"]);
        assert_eq!(vocab.doc_freq, vec![2, 1]);
        assert_eq!(vocab.idf(0), 1.0);
        assert!((vocab.idf(1) - 1.405_465_108_108_164_4).abs() < 1e-12);

        let single = fit_tfidf(&["x y y"]).unwrap();
        assert!(single.doc_freq.iter().all(|&d| d == 1));
        assert_eq!(single.idf(0), 1.0);
    }

    #[test]
    fn vectors_are_unit_norm_or_zero() {
        let vocab = fit_tfidf(&["a a", "a b", ""]).unwrap();
        let v = vocab.vectorize("a b b");
        let norm: f64 = v.iter().map(|(_, x)| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(vocab.vectorize("").is_empty());
        assert!(vocab.vectorize("zzz unseen").is_empty());
        assert!(fit_tfidf::<&str>(&[]).is_err());
    }

    #[test]
    fn svd_diagonal_and_rank_one() {
        let diag = CsrMatrix::from_dense(&[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0], 3, 3);
        let s = fit_svd(&diag, 2).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((s.singular_values[1] - 2.0).abs() < 1e-12);

        let u = [1.0, -2.0, 0.5];
        let v = [2.0, 0.0, -1.0, 3.0];
        let dense: Vec<f64> = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let m = CsrMatrix::from_dense(&dense, 3, 4);
        let s = fit_svd(&m, 1).unwrap();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (c, x) in s.components.iter().zip(v) {
            assert!((c.abs() - (x / vn).abs()).abs() < 1e-10);
        }
        let proj = s.project(&m, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let captured: f64 = proj.data().iter().map(|x| x * x).sum();
        let total: f64 = dense.iter().map(|x| x * x).sum();
        assert!((captured / total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn svd_rejects_large_k() {
        let m = CsrMatrix::from_dense(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        assert!(fit_svd(&m, 3).is_err());
        assert!(fit_svd(&m, 0).is_err());
    }
}
