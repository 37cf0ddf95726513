//! Nonnegative least-norm size allocation.
//!
//! Given per-client label fractions Q (L×N, columns are probability vectors)
//! and per-label sample totals d, find client sizes x ≥ 0 with Qx ≈ d and
//! small norm. Solved as projected gradient on ‖Qx−d‖² + λ‖x‖² with
//! projection onto the nonnegative orthant, then rounded to integers.

use crate::error::{Error, Result};

/// Relative residual ‖Qx−d‖/‖d‖ above which the allocation is rejected.
pub const RESIDUAL_TOLERANCE: f64 = 0.05;

const RIDGE: f64 = 1e-6;
const MAX_ITERS: usize = 100_000;
const TARGET_RESIDUAL: f64 = 1e-8;

/// Solver output: integer client sizes plus the continuous solution they
/// were rounded from.
#[derive(Debug, Clone)]
pub struct Allocation {
    /// Integer per-client sizes, Σ sizes ≤ Σ d.
    pub sizes: Vec<usize>,
    /// Continuous solution before rounding.
    pub x: Vec<f64>,
    /// ‖Qx−d‖₂ / ‖d‖₂ at the continuous solution.
    pub relative_residual: f64,
}

fn validate(q: &[f64], l: usize, n: usize, d: &[f64]) -> Result<()> {
    if l == 0 || n == 0 {
        return Err(Error::config("allocation needs at least one label and one client"));
    }
    if q.len() != l * n {
        return Err(Error::config(format!(
            "fraction matrix has {} entries, expected {}×{}",
            q.len(),
            l,
            n
        )));
    }
    if d.len() != l {
        return Err(Error::config(format!(
            "label totals length {} does not match {} labels",
            d.len(),
            l
        )));
    }
    if d.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::config("label totals must be nonnegative"));
    }
    for j in 0..n {
        let mut sum = 0.0;
        for i in 0..l {
            let v = q[i * n + j];
            if v < 0.0 || !v.is_finite() {
                return Err(Error::config(format!("column {j} has a negative fraction")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::config(format!(
                "column {j} sums to {sum}, expected a probability vector"
            )));
        }
    }
    Ok(())
}

fn residual_norm(q: &[f64], l: usize, n: usize, x: &[f64], d: &[f64], r: &mut [f64]) -> f64 {
    let mut sq = 0.0;
    for i in 0..l {
        let row = &q[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * x[j];
        }
        r[i] = acc - d[i];
        sq += r[i] * r[i];
    }
    sq.sqrt()
}

/// One projected-gradient descent pass. Shared by the production solver and
/// the long-run oracle in tests (which calls it with more iterations).
pub(crate) fn projected_gradient(
    q: &[f64],
    l: usize,
    n: usize,
    d: &[f64],
    x0: &[f64],
    step: f64,
    iters: usize,
    target: f64,
) -> (Vec<f64>, f64) {
    let d_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; l];
    let mut g = vec![0.0; n];
    let mut res = residual_norm(q, l, n, &x, d, &mut r);
    for _ in 0..iters {
        if d_norm > 0.0 && res / d_norm < target {
            break;
        }
        // g = 2 Qᵀ r + 2 λ x
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..l {
                acc += q[i * n + j] * r[i];
            }
            g[j] = 2.0 * acc + 2.0 * RIDGE * x[j];
        }
        for j in 0..n {
            x[j] = (x[j] - step * g[j]).max(0.0);
        }
        res = residual_norm(q, l, n, &x, d, &mut r);
    }
    let rel = if d_norm > 0.0 { res / d_norm } else { 0.0 };
    (x, rel)
}

/// Largest-remainder apportionment of `total` units proportionally to
/// `weights`. Ties go to the lower index.
pub(crate) fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    assert!(!weights.is_empty(), "apportion over zero buckets");
    let wsum: f64 = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    assert!(wsum > 0.0, "apportion with zero total weight");
    let targets: Vec<f64> = weights.iter().map(|w| w / wsum * total as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = targets[a] - targets[a].floor();
        let rb = targets[b] - targets[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().take(total.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}

/// Solve for integer client sizes. Errors with a partition error when the
/// relative residual stays above [`RESIDUAL_TOLERANCE`] after the iteration
/// budget.
pub fn solve_least_norm(q: &[f64], l: usize, n: usize, d: &[f64]) -> Result<Allocation> {
    validate(q, l, n, d)?;
    let d_total: f64 = d.iter().sum();
    if d_total == 0.0 {
        return Ok(Allocation {
            sizes: vec![0; n],
            x: vec![0.0; n],
            relative_residual: 0.0,
        });
    }

    // Step 1/L with L bounded via the Frobenius norm: σ_max² ≤ ‖Q‖_F².
    let fro_sq: f64 = q.iter().map(|v| v * v).sum();
    let step = 1.0 / (2.0 * (fro_sq + RIDGE));
    let x0 = vec![d_total / n as f64; n];
    let (x, rel) = projected_gradient(q, l, n, d, &x0, step, MAX_ITERS, TARGET_RESIDUAL);

    if rel > RESIDUAL_TOLERANCE {
        return Err(Error::partition(format!(
            "size allocation infeasible: relative residual {rel:.4} exceeds {RESIDUAL_TOLERANCE} \
             after {MAX_ITERS} iterations; try a larger concentration or more clients"
        )));
    }

    let x_total: f64 = x.iter().sum();
    let capacity = d_total.floor() as usize;
    let target = ((x_total + 0.5).floor() as usize).min(capacity);
    let sizes = if x_total > 0.0 {
        apportion(&x, target)
    } else {
        vec![0; n]
    };
    Ok(Allocation {
        sizes,
        x,
        relative_residual: rel,
    })
}
