//! Two-variable SMO for the ν-one-class dual
//!
//! ```text
//! min ½ αᵀQα   s.t.  Σ α_i = 1,  0 <= α_i <= C = 1/(νn)
//! ```
//!
//! The working pair is chosen with second-order information (Fan, Chen & Lin
//! 2005). With `G = Qα`, optimality is `max_{α>0} G - min_{α<C} G <= tol`.

use super::kernel::KernelMatrix;

const TAU: f64 = 1e-12;

pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Initial point: the first `floor(νn)` variables at the bound `1/(νn)`, the
/// remaining mass on the next one.
pub(crate) fn initial_alpha(n: usize, nu: f64) -> Vec<f64> {
    let upper = 1.0 / (nu * n as f64);
    let at_bound = ((nu * n as f64) * (1.0 + 1e-12)).floor().min(n as f64) as usize;
    let mut alpha = vec![0.0; n];
    alpha[..at_bound].fill(upper);
    if at_bound < n {
        alpha[at_bound] = (1.0 - at_bound as f64 * upper).clamp(0.0, upper);
    }
    alpha
}

fn full_gradient(q: &mut KernelMatrix<'_>, alpha: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; alpha.len()];
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            let row = q.row(j);
            for (gk, qk) in g.iter_mut().zip(row.iter()) {
                *gk += a * qk;
            }
        }
    }
    g
}

/// Returns `(i, min G over α<C, max G over α>0)`; indices break ties by position.
fn violating_extremes(alpha: &[f64], g: &[f64], upper: f64) -> (Option<usize>, f64, f64) {
    let mut i = None;
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for (t, (&a, &gt)) in alpha.iter().zip(g).enumerate() {
        if a < upper && gt < g_min {
            g_min = gt;
            i = Some(t);
        }
        if a > 0.0 && gt > g_max {
            g_max = gt;
        }
    }
    (i, g_min, g_max)
}

pub(crate) fn solve(q: &mut KernelMatrix<'_>, nu: f64, tol: f64, max_iter: usize) -> Solution {
    let n = q.len();
    let upper = 1.0 / (nu * n as f64);
    let mut alpha = initial_alpha(n, nu);
    let mut g = full_gradient(q, &alpha);
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let (i, g_min, g_max) = violating_extremes(&alpha, &g, upper);
        let Some(i) = i.filter(|_| g_max - g_min > tol) else {
            // Incremental updates drift; confirm on a fresh gradient.
            g = full_gradient(q, &alpha);
            let (_, g_min, g_max) = violating_extremes(&alpha, &g, upper);
            if g_max - g_min <= tol || iterations >= max_iter {
                converged = g_max - g_min <= tol;
                break;
            }
            continue;
        };
        if iterations >= max_iter {
            g = full_gradient(q, &alpha);
            break;
        }

        let row_i = q.row(i);
        let qii = q.diag(i);
        let mut j = None;
        let mut best = f64::NEG_INFINITY;
        for (t, (&a, &gt)) in alpha.iter().zip(&g).enumerate() {
            if a > 0.0 && gt > g_min {
                let b = gt - g_min;
                let curv = (qii + q.diag(t) - 2.0 * row_i[t]).max(TAU);
                let gain = b * b / curv;
                if gain > best {
                    best = gain;
                    j = Some(t);
                }
            }
        }
        let Some(j) = j else {
            converged = true;
            break;
        };
        let row_j = q.row(j);

        let curv = (qii + q.diag(j) - 2.0 * row_i[j]).max(TAU);
        let room_i = upper - alpha[i];
        let room_j = alpha[j];
        let delta = ((g[j] - g[i]) / curv).min(room_i).min(room_j);
        alpha[i] = if delta == room_i { upper } else { alpha[i] + delta };
        alpha[j] = if delta == room_j { 0.0 } else { alpha[j] - delta };
        for ((gk, qik), qjk) in g.iter_mut().zip(row_i.iter()).zip(row_j.iter()) {
            *gk += delta * (qik - qjk);
        }
        iterations += 1;
    }

    let rho = offset(&alpha, &g, upper);
    Solution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

/// Average gradient over free variables; without any, the midpoint of the
/// interval allowed by the bounded ones.
fn offset(alpha: &[f64], g: &[f64], upper: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    for (&a, &gt) in alpha.iter().zip(g) {
        if a >= upper {
            lb = lb.max(gt);
        } else if a <= 0.0 {
            ub = ub.min(gt);
        } else {
            free_sum += gt;
            free += 1;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else if lb.is_finite() && ub.is_finite() {
        0.5 * (lb + ub)
    } else if lb.is_finite() {
        lb
    } else {
        ub
    }
}
