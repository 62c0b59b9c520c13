//! ν-one-class SVM (Schölkopf et al. 2001) trained with SMO on the dual.
//!
//! The model is kept in the standard form: decision function
//! `f(x) = Σ α_i k(x_i, x) - rho`, nonnegative inside the learned region.
//! [`OcSvmModel::anomaly_score`] is the usual outlier score `rho - <w_std, φ(x)>`;
//! [`OcSvmModel::decision`] is its negation.

mod kernel;
mod smo;

use serde::{Deserialize, Serialize};

pub use kernel::{Kernel, ResolvedKernel};

use crate::error::{bail, Result};
use crate::features::{FeatureMatrix, Standardize, Standardizer};
use crate::linalg::dot;
use crate::store::{Domain, ScoreSet};

pub const DEFAULT_NU: f64 = 0.1;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub nu: f64,
    pub kernel: Kernel,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Iteration cap; `None` means `max(100·n, 10_000)`.
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Recorded with the model. The solver breaks ties by index and draws no
    /// random numbers, so results do not depend on it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub standardize: Standardize,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            kernel: Kernel::Linear,
            tol: DEFAULT_TOL,
            max_iter: None,
            seed: 0,
            standardize: Standardize::None,
        }
    }
}

impl SolverConfig {
    pub fn linear(nu: f64) -> Self {
        Self {
            nu,
            ..Self::default()
        }
    }

    pub fn rbf(nu: f64, gamma: Option<f64>) -> Self {
        Self {
            nu,
            kernel: Kernel::Rbf { gamma },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            bail!(Config, "nu must lie in (0, 1], got {}", self.nu);
        }
        if !(self.tol > 0.0) {
            bail!(Config, "tol must be positive, got {}", self.tol);
        }
        if let Kernel::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0) || !g.is_finite() {
                bail!(Config, "rbf gamma must be positive, got {g}");
            }
        }
        Ok(())
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| (100 * n).max(10_000))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    pub kernel: ResolvedKernel,
    pub nu: f64,
    /// Dual coefficients for every training row.
    pub alphas: Vec<f64>,
    /// Indices of training rows with `alpha > 0`.
    pub support_indices: Vec<usize>,
    /// Those rows, after standardization.
    pub support: Vec<Vec<f64>>,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_std: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    pub converged: bool,
    pub iterations: usize,
}

/// Trains on `features`. A run that hits the iteration cap still returns the
/// last iterate, with `converged == false`.
pub fn fit(features: &FeatureMatrix, config: &SolverConfig) -> Result<OcSvmModel> {
    config.validate()?;
    let n = features.rows();
    if n == 0 {
        bail!(Data, "cannot fit a one-class SVM on zero samples");
    }
    let p = features.cols();
    let standardizer = Standardizer::fit(features, config.standardize);
    let x = match &standardizer {
        Some(s) => s.transform(features),
        None => features.clone(),
    };
    let kernel = resolve_kernel(config.kernel, &x);

    let mut q = kernel::KernelMatrix::new(x.data(), p, kernel);
    let sol = smo::solve(&mut q, config.nu, config.tol, config.iteration_cap(n));
    if !sol.converged {
        log::warn!(
            "one-class SVM stopped after {} iterations without meeting tol {}",
            sol.iterations,
            config.tol
        );
    }

    let support_indices: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
    let support: Vec<Vec<f64>> = support_indices.iter().map(|&i| x.row(i).to_vec()).collect();
    let w_std = match kernel {
        ResolvedKernel::Linear => {
            let mut w = vec![0.0; p];
            for &i in &support_indices {
                let a = sol.alpha[i];
                for (wk, xk) in w.iter_mut().zip(x.row(i)) {
                    *wk += a * xk;
                }
            }
            Some(w)
        }
        ResolvedKernel::Rbf { .. } => None,
    };

    Ok(OcSvmModel {
        kernel,
        nu: config.nu,
        alphas: sol.alpha,
        support_indices,
        support,
        rho: sol.rho,
        w_std,
        standardizer,
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

/// `gamma = 1 / (p · mean column variance)` for automatic RBF bandwidth.
fn resolve_kernel(kernel: Kernel, x: &FeatureMatrix) -> ResolvedKernel {
    match kernel {
        Kernel::Linear => ResolvedKernel::Linear,
        Kernel::Rbf { gamma: Some(g) } => ResolvedKernel::Rbf { gamma: g },
        Kernel::Rbf { gamma: None } => {
            let p = x.cols() as f64;
            let var = x.column_variances();
            let mean_var = var.iter().sum::<f64>() / p;
            let gamma = if mean_var > 0.0 { 1.0 / (p * mean_var) } else { 1.0 / p };
            ResolvedKernel::Rbf { gamma }
        }
    }
}

impl OcSvmModel {
    pub fn dim(&self) -> usize {
        match (&self.w_std, self.support.first(), &self.standardizer) {
            (Some(w), _, _) => w.len(),
            (_, _, Some(s)) => s.mean.len(),
            (_, Some(s), _) => s.len(),
            _ => 0,
        }
    }

    /// `C = 1/(νn)`, the upper bound on every dual coefficient.
    pub fn upper_bound(&self) -> f64 {
        1.0 / (self.nu * self.alphas.len() as f64)
    }

    fn kernel_sum(&self, z: &[f64]) -> f64 {
        match (&self.w_std, self.kernel) {
            (Some(w), _) => dot(w, z),
            (None, kernel) => self
                .support_indices
                .iter()
                .zip(&self.support)
                .map(|(&i, s)| self.alphas[i] * kernel.eval(s, z))
                .sum(),
        }
    }

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if x.len() != dim {
            bail!(Shape, "input has {} features, model expects {dim}", x.len());
        }
        Ok(match &self.standardizer {
            Some(s) => {
                let mut out = Vec::with_capacity(dim);
                s.transform_row(x, &mut out);
                out
            }
            None => x.to_vec(),
        })
    }

    /// `<w_std, φ(x)> - rho`; nonnegative inside the learned region.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let z = self.prepare(x)?;
        Ok(self.kernel_sum(&z) - self.rho)
    }

    /// `rho - <w_std, φ(x)>`; higher is more anomalous, negative inside the region.
    pub fn anomaly_score(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.decision(x)?)
    }

    pub fn decide(&self, x: &[f64], epsilon: f64) -> Result<Domain> {
        Ok(decide(self.anomaly_score(x)?, epsilon))
    }

    /// Dual objective `½ αᵀQα` at the stored solution.
    pub fn dual_objective(&self) -> f64 {
        if let Some(w) = &self.w_std {
            return 0.5 * dot(w, w);
        }
        let mut total = 0.0;
        for (a, (&i, si)) in self.support_indices.iter().zip(&self.support).enumerate() {
            for (&j, sj) in self.support_indices[a..].iter().zip(&self.support[a..]) {
                let v = self.alphas[i] * self.alphas[j] * self.kernel.eval(si, sj);
                total += if i == j { v } else { 2.0 * v };
            }
        }
        0.5 * total
    }

    /// Standard-form primal objective for a linear model over its training features:
    /// `½‖w_std‖² - rho + (1/νn) Σ max(0, rho - <w_std, x_i>)`.
    pub fn primal_objective(&self, features: &FeatureMatrix) -> Result<f64> {
        let Some(w) = &self.w_std else {
            bail!(Config, "primal objective is only defined for the linear kernel");
        };
        let mut slack = 0.0;
        for row in features.iter_rows() {
            slack += (-self.decision(row)?).max(0.0);
        }
        let c = 1.0 / (self.nu * features.rows() as f64);
        Ok(0.5 * dot(w, w) - self.rho + c * slack)
    }

    /// Objective `½‖w‖² + R² + (1/νn) Σ max(0, <w, x_i> - R²)` evaluated at
    /// `w = -w_std`, `R² = -rho`, i.e. the hinge form with the constraint
    /// `<w, x_i> <= R² + ξ_i`.
    pub fn hinge_objective(&self, features: &FeatureMatrix) -> Result<f64> {
        let Some(w_std) = &self.w_std else {
            bail!(Config, "hinge objective is only defined for the linear kernel");
        };
        let w: Vec<f64> = w_std.iter().map(|v| -v).collect();
        let r2 = -self.rho;
        let c = 1.0 / (self.nu * features.rows() as f64);
        let mut slack = 0.0;
        for row in features.iter_rows() {
            let z = self.prepare(row)?;
            slack += (dot(&w, &z) - r2).max(0.0);
        }
        Ok(0.5 * dot(&w, &w) + r2 + c * slack)
    }
}

/// `in` iff `score <= epsilon`.
pub fn decide(score: f64, epsilon: f64) -> Domain {
    if score <= epsilon {
        Domain::In
    } else {
        Domain::Out
    }
}

/// Smallest threshold such that at least `target_tpr` of the in-domain scores
/// fall at or below it.
pub fn threshold_for_tpr(in_domain: &ScoreSet, target_tpr: f64) -> Result<f64> {
    if in_domain.is_empty() {
        bail!(Data, "need at least one in-domain score");
    }
    if !(target_tpr > 0.0 && target_tpr <= 1.0) {
        bail!(Config, "target TPR must lie in (0, 1], got {target_tpr}");
    }
    let mut scores: Vec<f64> = in_domain.values().collect();
    scores.sort_by(f64::total_cmp);
    let n = scores.len() as f64;
    let needed = ((target_tpr * n) - 1e-9).ceil().max(1.0) as usize;
    Ok(scores[needed.min(scores.len()) - 1])
}
