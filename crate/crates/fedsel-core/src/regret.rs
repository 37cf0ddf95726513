//! Verification lab for the selector's regret guarantee.
//!
//! Runs the confidence-bound selector against synthetic stochastic arms
//! with known means, so cumulative pseudo-regret can be measured exactly
//! and compared to the closed-form bound
//!
//!   R(t) ≤ t·e^{−τ/2} / (1 − (t+1)·e^{−τ/2}),   τ = 2·ln n / n_i,
//!
//! which is only defined while the denominator stays positive.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use crate::selection::{select_gpcb, BanditStats};

/// Reward noise model for a synthetic arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardDist {
    /// mean + N(0, variance), clipped to [0,1].
    GaussianClipped,
    /// 1 with probability mean, else 0. The variance field is ignored.
    Bernoulli,
}

/// A stationary stochastic bandit with known per-arm means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditEnv {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub dist: RewardDist,
    pub k: usize,
    pub seed: u64,
}

impl BanditEnv {
    pub fn new(
        means: Vec<f64>,
        variances: Vec<f64>,
        dist: RewardDist,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::config("need at least one arm"));
        }
        if variances.len() != means.len() {
            return Err(Error::config(format!(
                "{} variances for {} arms",
                variances.len(),
                means.len()
            )));
        }
        if k == 0 || k > means.len() {
            return Err(Error::config(format!(
                "cannot select {k} of {} arms",
                means.len()
            )));
        }
        for (i, &m) in means.iter().enumerate() {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::config(format!("arm {i} mean {m} outside [0,1]")));
            }
        }
        for (i, &v) in variances.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("arm {i} variance {v} invalid")));
            }
        }
        Ok(BanditEnv { means, variances, dist, k, seed })
    }

    /// Arms with means evenly spaced over [0.1, 0.9], highest mean on arm 0,
    /// all with the same Gaussian noise level.
    pub fn uniform_spread(arms: usize, k: usize, sigma: f64, seed: u64) -> Result<Self> {
        if arms < 2 {
            return Err(Error::config("uniform spread needs at least two arms"));
        }
        let means: Vec<f64> = (0..arms)
            .map(|i| 0.9 - 0.8 * i as f64 / (arms - 1) as f64)
            .collect();
        let variances = vec![sigma * sigma; arms];
        BanditEnv::new(means, variances, RewardDist::GaussianClipped, k, seed)
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    pub fn sample(&self, arm: usize, rng: &mut impl Rng) -> f64 {
        match self.dist {
            RewardDist::GaussianClipped => {
                let z: f64 = rng.sample(StandardNormal);
                (self.means[arm] + self.variances[arm].sqrt() * z).clamp(0.0, 1.0)
            }
            RewardDist::Bernoulli => {
                if rng.gen_bool(self.means[arm]) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Best achievable expected per-round reward: sum of the k largest means.
    pub fn oracle_top_k_sum(&self) -> f64 {
        let mut sorted = self.means.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[..self.k].iter().sum()
    }
}

/// τ = 2·ln n / n_i for total pull count n and per-arm count n_i.
pub fn tau_of(n: f64, n_i: f64) -> Result<f64> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::config(format!("total pulls {n} must be at least 1")));
    }
    if !(n_i >= 1.0) || !n_i.is_finite() {
        return Err(Error::config(format!("arm pulls {n_i} must be at least 1")));
    }
    Ok(2.0 * n.ln() / n_i)
}

/// Closed-form regret bound at round t, or None where the bound's
/// denominator is not positive (the bound says nothing there).
pub fn theorem_bound(t: usize, tau: f64) -> Option<f64> {
    if t == 0 || !tau.is_finite() || tau <= 0.0 {
        return None;
    }
    let e = (-tau / 2.0).exp();
    let denom = 1.0 - (t as f64 + 1.0) * e;
    if denom <= 0.0 {
        return None;
    }
    Some(t as f64 * e / denom)
}

/// Mean cumulative pseudo-regret per round, with standard errors over
/// replications and the mean final pull count per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mean_final_pulls: Vec<f64>,
}

struct Replication {
    regret: Vec<f64>,
    min_pulls: Vec<u64>,
    total_pulls: Vec<u64>,
    final_pulls: Vec<u64>,
}

fn run_replication(env: &BanditEnv, rounds: usize, rho: f64, rep: u64) -> Result<Replication> {
    let arms = env.arms();
    let mut rng = stream_rng(env.seed, rep, 0);
    let mut stats = BanditStats::new(arms, rounds, rho)?;

    // Initialization: every arm pulled once; not counted toward regret.
    let initial: Vec<f64> = (0..arms).map(|a| env.sample(a, &mut rng)).collect();
    stats.record_initial(&initial)?;

    let oracle = env.oracle_top_k_sum();
    let mut cumulative = 0.0;
    let mut regret = Vec::with_capacity(rounds);
    let mut min_pulls = Vec::with_capacity(rounds);
    let mut total_pulls = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        stats.round = t;
        let outcome = select_gpcb(&stats, env.k)?;
        let rewards: Vec<(usize, f64)> = outcome
            .selected
            .iter()
            .map(|&a| (a, env.sample(a, &mut rng)))
            .collect();
        stats.record_rewards(&outcome, &rewards)?;

        let achieved: f64 = outcome.selected.iter().map(|&a| env.means[a]).sum();
        cumulative += oracle - achieved;
        regret.push(cumulative);
        min_pulls.push((0..arms).map(|a| stats.pulls_of(a)).min().unwrap());
        total_pulls.push(stats.total_pulls());
    }
    let final_pulls = (0..arms).map(|a| stats.pulls_of(a)).collect();
    Ok(Replication { regret, min_pulls, total_pulls, final_pulls })
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_replications(
    env: &BanditEnv,
    rounds: usize,
    rho: f64,
    replications: usize,
) -> Result<Vec<Replication>> {
    if rounds == 0 {
        return Err(Error::config("need at least one round"));
    }
    if replications == 0 {
        return Err(Error::config("need at least one replication"));
    }
    (0..replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(env, rounds, rho, rep))
        .collect()
}

/// Run the selector against the arms for `rounds` selection rounds,
/// averaged over independent replications. Deterministic in (env.seed,
/// rounds, rho, replications) regardless of thread count.
pub fn simulate_iid(
    env: &BanditEnv,
    rounds: usize,
    rho: f64,
    replications: usize,
) -> Result<RegretCurve> {
    let reps = run_replications(env, rounds, rho, replications)?;
    let mut mean = Vec::with_capacity(rounds);
    let mut stderr = Vec::with_capacity(rounds);
    let mut at_t = Vec::with_capacity(replications);
    for t in 0..rounds {
        at_t.clear();
        at_t.extend(reps.iter().map(|r| r.regret[t]));
        let (m, s) = mean_and_stderr(&at_t);
        mean.push(m);
        stderr.push(s);
    }
    let arms = env.arms();
    let mean_final_pulls = (0..arms)
        .map(|a| {
            reps.iter().map(|r| r.final_pulls[a] as f64).sum::<f64>() / replications as f64
        })
        .collect();
    Ok(RegretCurve { mean, stderr, mean_final_pulls })
}

/// One row of the bound comparison: empirical mean regret after round t
/// against the closed-form bound, when the bound is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: usize,
    pub empirical: f64,
    pub stderr: f64,
    pub bound: Option<f64>,
    pub satisfied: Option<bool>,
}

/// Bound comparison over a whole run. `defined_fraction` is the share of
/// rounds where every replication's bound was defined; `satisfied_fraction`
/// is the share of those where the empirical mean stayed under the bound
/// (vacuously 1 when no round is defined).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub defined_fraction: f64,
    pub satisfied_fraction: f64,
}

impl BoundReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,empirical_regret,stderr,bound,defined,satisfied\n");
        for row in &self.rows {
            let (bound, defined, satisfied) = match (row.bound, row.satisfied) {
                (Some(b), Some(s)) => (b.to_string(), "true", if s { "true" } else { "false" }),
                _ => (String::new(), "false", ""),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.t, row.empirical, row.stderr, bound, defined, satisfied
            ));
        }
        out
    }
}

/// Compare empirical regret to the closed-form bound. Each replication's
/// τ at round t uses that replication's total pulls and least-pulled arm;
/// a round counts as defined only if the bound is defined in every
/// replication, and its bound is then the mean over replications.
pub fn bound_check(
    env: &BanditEnv,
    rounds: usize,
    replications: usize,
    rho: f64,
) -> Result<BoundReport> {
    let reps = run_replications(env, rounds, rho, replications)?;
    let mut rows = Vec::with_capacity(rounds);
    let mut defined_count = 0usize;
    let mut satisfied_count = 0usize;
    let mut at_t = Vec::with_capacity(replications);
    for t in 1..=rounds {
        at_t.clear();
        at_t.extend(reps.iter().map(|r| r.regret[t - 1]));
        let (empirical, stderr) = mean_and_stderr(&at_t);

        let mut sum = 0.0;
        let mut all_defined = true;
        for rep in &reps {
            let tau = tau_of(rep.total_pulls[t - 1] as f64, rep.min_pulls[t - 1] as f64)?;
            match theorem_bound(t, tau) {
                Some(b) => sum += b,
                None => {
                    all_defined = false;
                    break;
                }
            }
        }
        let (bound, satisfied) = if all_defined {
            let b = sum / replications as f64;
            let s = empirical <= b;
            defined_count += 1;
            if s {
                satisfied_count += 1;
            }
            (Some(b), Some(s))
        } else {
            (None, None)
        };
        rows.push(BoundRow { t, empirical, stderr, bound, satisfied });
    }
    let defined_fraction = defined_count as f64 / rounds as f64;
    let satisfied_fraction = if defined_count == 0 {
        1.0
    } else {
        satisfied_count as f64 / defined_count as f64
    };
    Ok(BoundReport { rows, defined_fraction, satisfied_fraction })
}
