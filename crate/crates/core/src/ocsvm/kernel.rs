use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, sq_dist};

/// Kernel as requested by the caller; RBF `gamma: None` means "auto".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: Option<f64> },
}

/// Kernel with every parameter fixed, as stored in a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ResolvedKernel {
    Linear,
    Rbf { gamma: f64 },
}

impl ResolvedKernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            ResolvedKernel::Linear => dot(a, b),
            ResolvedKernel::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }
}

const CACHE_ENTRIES: usize = 1 << 24;
const PARALLEL_ROW_MIN: usize = 4096;

/// Gram matrix over the training rows, computed a row at a time behind an LRU cache.
pub(crate) struct KernelMatrix<'a> {
    x: &'a [f64],
    p: usize,
    n: usize,
    kernel: ResolvedKernel,
    diag: Vec<f64>,
    capacity: usize,
    clock: u64,
    cache: HashMap<usize, (Arc<[f64]>, u64)>,
}

impl<'a> KernelMatrix<'a> {
    pub fn new(x: &'a [f64], p: usize, kernel: ResolvedKernel) -> Self {
        let n = x.len() / p;
        let diag = x.chunks_exact(p).map(|r| kernel.eval(r, r)).collect();
        let capacity = if n.saturating_mul(n) <= CACHE_ENTRIES {
            n
        } else {
            (CACHE_ENTRIES / n).max(2)
        };
        Self {
            x,
            p,
            n,
            kernel,
            diag,
            capacity,
            clock: 0,
            cache: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn row(&mut self, i: usize) -> Arc<[f64]> {
        self.clock += 1;
        let clock = self.clock;
        if let Some((row, stamp)) = self.cache.get_mut(&i) {
            *stamp = clock;
            return row.clone();
        }
        if self.cache.len() >= self.capacity {
            let oldest = self
                .cache
                .iter()
                .min_by_key(|(_, (_, stamp))| *stamp)
                .map(|(&k, _)| k)
                .expect("cache is nonempty");
            self.cache.remove(&oldest);
        }
        let row: Arc<[f64]> = self.compute_row(i).into();
        self.cache.insert(i, (row.clone(), clock));
        row
    }

    fn compute_row(&self, i: usize) -> Vec<f64> {
        let p = self.p;
        let xi = &self.x[i * p..(i + 1) * p];
        let kernel = self.kernel;
        let mut out = vec![0.0; self.n];
        if self.n >= PARALLEL_ROW_MIN {
            out.par_iter_mut()
                .zip(self.x.par_chunks_exact(p))
                .for_each(|(o, xj)| *o = kernel.eval(xi, xj));
        } else {
            for (o, xj) in out.iter_mut().zip(self.x.chunks_exact(p)) {
                *o = kernel.eval(xi, xj);
            }
        }
        out
    }
}
