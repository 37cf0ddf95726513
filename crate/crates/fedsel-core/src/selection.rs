//! Client-selection strategies and bandit bookkeeping.
//!
//! The confidence-bound selector scores every client by mean reward plus an
//! exploration bonus scaled by a schedule that grows linearly over the run.
//! Baselines: uniform random, loss-biased two-stage sampling, and pure
//! top-score selection without exploration.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-client mean reward is formed: over that client's own pulls
/// (default), or over all recorded rounds with zeros for rounds the client
/// sat out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMean {
    #[default]
    PerPull,
    PerRound,
}

/// Pull counts and reward sums for every client, plus the schedule inputs
/// (current round, horizon, exploration scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditStats {
    reward_sum: Vec<f64>,
    pulls: Vec<u64>,
    total_pulls: u64,
    rounds_recorded: u64,
    pub round: usize,
    pub horizon: usize,
    pub rho: f64,
    pub reward_mean: RewardMean,
}

impl BanditStats {
    pub fn new(clients: usize, horizon: usize, rho: f64) -> Result<Self> {
        if clients == 0 {
            return Err(Error::config("bandit needs at least one client"));
        }
        if horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::config("rho must be positive"));
        }
        Ok(BanditStats {
            reward_sum: vec![0.0; clients],
            pulls: vec![0; clients],
            total_pulls: 0,
            rounds_recorded: 0,
            round: 0,
            horizon,
            rho,
            reward_mean: RewardMean::default(),
        })
    }

    pub fn client_count(&self) -> usize {
        self.pulls.len()
    }

    pub fn pulls_of(&self, client: usize) -> u64 {
        self.pulls[client]
    }

    pub fn total_pulls(&self) -> u64 {
        self.total_pulls
    }

    pub fn reward_sum_of(&self, client: usize) -> f64 {
        self.reward_sum[client]
    }

    /// Mean reward μ̃ under the configured averaging mode.
    pub fn mean_reward(&self, client: usize) -> Result<f64> {
        if client >= self.pulls.len() {
            return Err(Error::config(format!("client {client} out of range")));
        }
        match self.reward_mean {
            RewardMean::PerPull => {
                if self.pulls[client] == 0 {
                    return Err(Error::UnpulledArm(client));
                }
                Ok(self.reward_sum[client] / self.pulls[client] as f64)
            }
            RewardMean::PerRound => {
                if self.rounds_recorded == 0 {
                    return Err(Error::UnpulledArm(client));
                }
                Ok(self.reward_sum[client] / self.rounds_recorded as f64)
            }
        }
    }

    /// Record the initialization round: one pull per client with the given
    /// reward, clipped to [0,1].
    pub fn record_initial(&mut self, rewards: &[f64]) -> Result<()> {
        if rewards.len() != self.pulls.len() {
            return Err(Error::logic(format!(
                "{} initial rewards for {} clients",
                rewards.len(),
                self.pulls.len()
            )));
        }
        if self.total_pulls != 0 {
            return Err(Error::logic("bandit already initialized"));
        }
        for (i, &r) in rewards.iter().enumerate() {
            self.reward_sum[i] = r.clamp(0.0, 1.0);
            self.pulls[i] = 1;
        }
        self.total_pulls = self.pulls.len() as u64;
        self.rounds_recorded = 1;
        Ok(())
    }

    /// Record one round's rewards: every selected client exactly once,
    /// clipped to [0,1]. Rewards for unselected clients are a logic error.
    pub fn record_rewards(&mut self, outcome: &SelectionOutcome, rewards: &[(usize, f64)]) -> Result<()> {
        if rewards.len() != outcome.selected.len() {
            return Err(Error::logic(format!(
                "{} rewards for {} selected clients",
                rewards.len(),
                outcome.selected.len()
            )));
        }
        let mut seen = vec![false; self.pulls.len()];
        for &(id, _) in rewards {
            if id >= self.pulls.len() {
                return Err(Error::logic(format!("client {id} out of range")));
            }
            if !outcome.selected.contains(&id) {
                return Err(Error::logic(format!("reward for unselected client {id}")));
            }
            if seen[id] {
                return Err(Error::logic(format!("duplicate reward for client {id}")));
            }
            seen[id] = true;
        }
        for &(id, r) in rewards {
            self.reward_sum[id] += r.clamp(0.0, 1.0);
            self.pulls[id] += 1;
            self.total_pulls += 1;
        }
        self.rounds_recorded += 1;
        Ok(())
    }
}

/// The selected client set (ascending ids) plus the full per-client score
/// vector the strategy ranked by. Strategies without natural scores leave
/// zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Exploration scale at round `t` of `horizon`: ρ·t/horizon.
pub fn alpha_at(t: usize, horizon: usize, rho: f64) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::config("horizon must be at least 1"));
    }
    if t < 1 || t > horizon {
        return Err(Error::config(format!("round {t} outside 1..={horizon}")));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::config("rho must be positive"));
    }
    Ok(rho * t as f64 / horizon as f64)
}

/// Confidence-bound score with an explicit exploration scale:
/// u = μ̃ + α·√(2·ln n / n_i).
pub fn gpcb_score_with_alpha(stats: &BanditStats, client: usize, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::config("alpha must be nonnegative"));
    }
    if client >= stats.client_count() {
        return Err(Error::config(format!("client {client} out of range")));
    }
    if stats.pulls_of(client) == 0 {
        return Err(Error::UnpulledArm(client));
    }
    let mean = stats.mean_reward(client)?;
    let n = stats.total_pulls() as f64;
    let n_i = stats.pulls_of(client) as f64;
    Ok(mean + alpha * (2.0 * n.ln() / n_i).sqrt())
}

/// Confidence-bound score at the stats' current round.
pub fn gpcb_score(stats: &BanditStats, client: usize) -> Result<f64> {
    let alpha = alpha_at(stats.round, stats.horizon, stats.rho)?;
    gpcb_score_with_alpha(stats, client, alpha)
}

fn top_k_by(
    k: usize,
    clients: usize,
    scores: Vec<f64>,
    tie: impl Fn(usize, usize) -> std::cmp::Ordering,
) -> Result<SelectionOutcome> {
    if k == 0 || k > clients {
        return Err(Error::config(format!("cannot select {k} of {clients} clients")));
    }
    let mut order: Vec<usize> = (0..clients).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| tie(a, b)));
    let mut selected: Vec<usize> = order[..k].to_vec();
    selected.sort_unstable();
    Ok(SelectionOutcome { selected, scores })
}

/// Top-K by confidence-bound score with a fixed exploration scale. Ties go
/// to the less-pulled client, then the lower id.
pub fn select_gpcb_with_alpha(stats: &BanditStats, k: usize, alpha: f64) -> Result<SelectionOutcome> {
    let scores = (0..stats.client_count())
        .map(|i| gpcb_score_with_alpha(stats, i, alpha))
        .collect::<Result<Vec<f64>>>()?;
    top_k_by(k, stats.client_count(), scores, |a, b| {
        stats.pulls_of(a).cmp(&stats.pulls_of(b)).then(a.cmp(&b))
    })
}

/// Top-K by confidence-bound score at the stats' current round.
pub fn select_gpcb(stats: &BanditStats, k: usize) -> Result<SelectionOutcome> {
    let alpha = alpha_at(stats.round, stats.horizon, stats.rho)?;
    select_gpcb_with_alpha(stats, k, alpha)
}

/// Uniform selection without replacement.
pub fn select_random(clients: usize, k: usize, rng: &mut impl Rng) -> Result<SelectionOutcome> {
    if k == 0 || k > clients {
        return Err(Error::config(format!("cannot select {k} of {clients} clients")));
    }
    let mut selected = rand::seq::index::sample(rng, clients, k).into_vec();
    selected.sort_unstable();
    Ok(SelectionOutcome { selected, scores: vec![0.0; clients] })
}

/// Two-stage loss-biased selection: sample `d` candidates uniformly, each
/// evaluates the current model on its own data, keep the K with the highest
/// loss. Candidate evaluations are the strategy's extra cost; the caller
/// counts them.
pub fn select_pow_d(
    clients: usize,
    d: usize,
    k: usize,
    rng: &mut impl Rng,
    mut eval_loss: impl FnMut(usize) -> Result<f64>,
) -> Result<SelectionOutcome> {
    if k == 0 {
        return Err(Error::config("cannot select 0 clients"));
    }
    if d < k || d > clients {
        return Err(Error::config(format!(
            "candidate count {d} must satisfy K={k} ≤ d ≤ N={clients}"
        )));
    }
    let mut candidates = rand::seq::index::sample(rng, clients, d).into_vec();
    candidates.sort_unstable();
    let mut scores = vec![0.0; clients];
    for &c in &candidates {
        scores[c] = eval_loss(c)?;
    }
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = candidates[..k].to_vec();
    selected.sort_unstable();
    Ok(SelectionOutcome { selected, scores })
}

/// Top-K by stored quality score, no exploration. Ties go to the lower id.
pub fn select_top_gp(gp_values: &[f64], k: usize) -> Result<SelectionOutcome> {
    top_k_by(k, gp_values.len(), gp_values.to_vec(), |a, b| a.cmp(&b))
}

/// Strategy names as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Gpcb,
    Random,
    PowD,
    TopGp,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::Gpcb => "gpcb",
            Strategy::Random => "random",
            Strategy::PowD => "pow_d",
            Strategy::TopGp => "top_gp",
        };
        f.write_str(s)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gpcb" => Ok(Strategy::Gpcb),
            "random" => Ok(Strategy::Random),
            "pow_d" => Ok(Strategy::PowD),
            "top_gp" => Ok(Strategy::TopGp),
            other => Err(Error::config(format!(
                "unknown strategy {other:?}; expected gpcb | random | pow_d | top_gp"
            ))),
        }
    }
}
