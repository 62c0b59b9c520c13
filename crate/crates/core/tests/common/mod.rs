//! Slow, direct reference implementations used as test oracles.
#![allow(dead_code)]

use ood_core::ocsvm::{self, Kernel, OcSvmModel, SolverConfig};
use ood_core::{FeatureMatrix, ResolvedKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Fraction of (in, out) pairs ranked correctly, ties counted as half.
pub fn brute_auroc(ins: &[f64], outs: &[f64]) -> f64 {
    let mut total = 0.0;
    for &o in outs {
        for &i in ins {
            total += if o > i {
                1.0
            } else if o == i {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (ins.len() * outs.len()) as f64
}

/// Best balanced accuracy over every threshold `t`, predicting "in" iff `s <= t`.
pub fn brute_dtacc(ins: &[f64], outs: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = ins.iter().chain(outs).copied().collect();
    thresholds.push(f64::NEG_INFINITY);
    let mut best: f64 = 0.0;
    for &t in &thresholds {
        let tpr = ins.iter().filter(|&&s| s <= t).count() as f64 / ins.len() as f64;
        let tnr = outs.iter().filter(|&&s| s > t).count() as f64 / outs.len() as f64;
        best = best.max(0.5 * (tpr + tnr));
    }
    best
}

/// Step-wise area under precision-recall for positives `pos` against
/// negatives `neg`, ranking by descending score and cutting at every distinct score.
pub fn brute_aupr(pos: &[f64], neg: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = pos.iter().chain(neg).copied().collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for &t in &cuts {
        let tp = pos.iter().filter(|&&s| s >= t).count() as f64;
        let fp = neg.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / pos.len() as f64;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

pub fn random_scores(rng: &mut ChaCha8Rng, with_ties: bool) -> (Vec<f64>, Vec<f64>) {
    let n_in = rng.random_range(1..=50);
    let n_out = rng.random_range(1..=50);
    let draw = |rng: &mut ChaCha8Rng, shift: f64| {
        if with_ties {
            f64::from(rng.random_range(0..6)) + shift.round()
        } else {
            normal(rng) + shift
        }
    };
    let ins = (0..n_in).map(|_| draw(rng, 0.0)).collect();
    let outs = (0..n_out).map(|_| draw(rng, 0.7)).collect();
    (ins, outs)
}

pub fn gram(x: &FeatureMatrix, kernel: ResolvedKernel) -> Vec<f64> {
    let n = x.rows();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            q[i * n + j] = kernel.eval(x.row(i), x.row(j));
        }
    }
    q
}

fn quad(q: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for i in 0..n {
        let row = &q[i * n..(i + 1) * n];
        total += a[i] * row.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
    }
    0.5 * total
}

fn matvec(q: &[f64], a: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| q[i * n..(i + 1) * n].iter().zip(a).map(|(x, y)| x * y).sum())
        .collect()
}

/// Exact Euclidean projection onto `{Σa = 1, 0 <= a <= c}`: the mass
/// `Σ clamp(v_i - τ, 0, c)` is piecewise linear in `τ`, so locate the crossing
/// among the sorted breakpoints and interpolate.
pub fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let mass = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, c)).sum::<f64>();
    let mut knots: Vec<f64> = v.iter().flat_map(|&x| [x - c, x]).collect();
    knots.sort_by(f64::total_cmp);
    // Mass is nonincreasing in tau: find the last knot with mass >= 1.
    let (mut lo, mut hi) = (0usize, knots.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if mass(knots[mid]) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (t0, t1) = (knots[lo], knots[hi]);
    let (m0, m1) = (mass(t0), mass(t1));
    let tau = if m0 == m1 { t0 } else { t0 + (m0 - 1.0) * (t1 - t0) / (m0 - m1) };
    v.iter().map(|x| (x - tau).clamp(0.0, c)).collect()
}

/// `<∇f(a), a - s>` with `s` the feasible vertex minimizing `<∇f(a), s>`;
/// an upper bound on `f(a) - f*` for convex `f`.
fn frank_wolfe_gap(grad: &[f64], a: &[f64], c: f64) -> f64 {
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&i, &j| grad[i].total_cmp(&grad[j]));
    let mut remaining: f64 = 1.0;
    let mut lin_s = 0.0;
    for &i in &order {
        let take = remaining.min(c);
        lin_s += take * grad[i];
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    let lin_a: f64 = grad.iter().zip(a).map(|(g, x)| g * x).sum();
    lin_a - lin_s
}

/// Accelerated projected gradient with adaptive restart on `min ½aᵀQa` over the
/// capped simplex. Returns the best objective seen.
pub fn qp_oracle(q: &[f64], n: usize, nu: f64, iters: usize) -> f64 {
    let c = 1.0 / (nu * n as f64);
    let lip = {
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w = matvec(q, &v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda.max(1e-12) * 1.01
    };
    let mut a = project_capped_simplex(&vec![1.0 / n as f64; n], c);
    let mut y = a.clone();
    let mut t: f64 = 1.0;
    let mut best = quad(q, &a);
    let mut prev = best;
    for _ in 0..iters {
        let g = matvec(q, &y);
        let step: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / lip).collect();
        let next = project_capped_simplex(&step, c);
        let f = quad(q, &next);
        if f > prev {
            y = a.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next
            .iter()
            .zip(&a)
            .map(|(xn, xo)| xn + (t - 1.0) / t_next * (xn - xo))
            .collect();
        a = next;
        t = t_next;
        prev = f;
        best = best.min(f);
        if frank_wolfe_gap(&matvec(q, &a), &a, c) <= 1e-7 * f.abs() {
            break;
        }
    }
    best
}

pub struct Instance {
    pub features: FeatureMatrix,
    pub config: SolverConfig,
}

/// Random one-class problem: `n <= 200`, `p <= 16`, ν on a 0.05 grid,
/// alternating linear and RBF kernels.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(10..=200);
    let p = r.random_range(1..=16);
    let nu = f64::from(r.random_range(1..=20)) * 0.05;
    let offset: Vec<f64> = (0..p).map(|_| 2.0 * normal(&mut r)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| offset.iter().map(|m| m + normal(&mut r)).collect())
        .collect();
    let kernel = if seed.is_multiple_of(2) {
        Kernel::Linear
    } else {
        Kernel::Rbf {
            gamma: Some(0.5 / p as f64),
        }
    };
    Instance {
        features: FeatureMatrix::from_rows(&rows).unwrap(),
        config: SolverConfig {
            nu,
            kernel,
            ..SolverConfig::linear(nu)
        },
    }
}

pub struct OptimalityReport {
    pub kkt_violation: f64,
    pub nu_property: bool,
    pub objective: f64,
    pub oracle_objective: f64,
}

impl OptimalityReport {
    pub fn relative_gap(&self) -> f64 {
        (self.objective - self.oracle_objective).abs() / self.oracle_objective.abs().max(1e-12)
    }
}

/// KKT residual against the model's own offset, ν-property counts, and the
/// dual objective next to the projected-gradient optimum.
pub fn check_optimality(inst: &Instance, model: &OcSvmModel) -> OptimalityReport {
    let n = inst.features.rows();
    let q = gram(&inst.features, model.kernel);
    let g = matvec(&q, &model.alphas);
    let c = model.upper_bound();
    let at_upper = |a: f64| a >= c * (1.0 - 1e-12);
    let mut violation: f64 = 0.0;
    for (i, &a) in model.alphas.iter().enumerate() {
        let r = g[i] - model.rho;
        let v = if a <= 0.0 {
            (-r).max(0.0)
        } else if at_upper(a) {
            r.max(0.0)
        } else {
            r.abs()
        };
        violation = violation.max(v);
    }
    let bounded = model.alphas.iter().filter(|&&a| at_upper(a)).count() as f64;
    let support = model.alphas.iter().filter(|&&a| a > 0.0).count() as f64;
    let nun = inst.config.nu * n as f64;
    let sum: f64 = model.alphas.iter().sum();
    let feasible = (sum - 1.0).abs() < 1e-9 && model.alphas.iter().all(|&a| a >= 0.0 && a <= c * (1.0 + 1e-12));
    OptimalityReport {
        kkt_violation: violation,
        nu_property: feasible && bounded <= nun + 1e-9 && nun <= support + 1e-9,
        objective: model.dual_objective(),
        oracle_objective: qp_oracle(&q, n, inst.config.nu, 20_000),
    }
}

pub fn fit(inst: &Instance) -> OcSvmModel {
    ocsvm::fit(&inst.features, &inst.config).unwrap()
}
