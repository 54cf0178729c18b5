//! Decentralised cross-entropy method.
//!
//! Each robot owns one factor `Q(U^r)` of a product control distribution:
//! a per-timestep independent Gaussian over its angular rates. [`dec_cem`]
//! improves that factor against a team reward while the other robots'
//! factors, as last communicated, stay fixed.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlSequence;
use crate::rewards::{Objective, PeerSample, RewardContext};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDistribution {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ControlDistribution {
    /// `N(0, σ0² I)` over `horizon` steps.
    pub fn prior(horizon: usize, sigma0_sq: f64) -> Self {
        Self {
            mean: vec![0.0; horizon],
            var: vec![sigma0_sq; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn mean_variance(&self) -> f64 {
        if self.var.is_empty() {
            0.0
        } else {
            self.var.iter().sum::<f64>() / self.var.len() as f64
        }
    }

    pub fn mean_sequence(&self) -> ControlSequence {
        ControlSequence(self.mean.clone())
    }

    /// Drops the first `k` steps and pads the tail with the prior, so a
    /// plan made `k` ticks ago lines up with the current horizon.
    pub fn shifted(&self, k: usize, sigma0_sq: f64) -> Self {
        let t = self.horizon();
        let k = k.min(t);
        let mut mean = self.mean[k..].to_vec();
        let mut var = self.var[k..].to_vec();
        mean.resize(t, 0.0);
        var.resize(t, sigma0_sq);
        Self { mean, var }
    }

    /// One draw, clamped to `±u_max`.
    pub fn sample<R: Rng + ?Sized>(&self, u_max: f64, rng: &mut R) -> ControlSequence {
        ControlSequence(
            self.mean
                .iter()
                .zip(&self.var)
                .map(|(m, v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    (m + v.sqrt() * z).clamp(-u_max, u_max)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemConfig {
    pub n_samples: usize,
    pub n_elite: usize,
    pub n_inner_iters: usize,
    pub var_floor: f64,
    pub var_terminate: f64,
    pub sigma0_sq: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            n_samples: 64,
            n_elite: 8,
            n_inner_iters: 5,
            var_floor: 1e-4,
            var_terminate: 1e-3,
            sigma0_sq: 1.0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("cem.n_samples", "must be >= 1"));
        }
        if self.n_elite == 0 || self.n_elite > self.n_samples {
            return Err(Error::config(
                "cem.n_elite",
                format!(
                    "must satisfy 1 <= n_elite <= n_samples (n_elite = {}, n_samples = {})",
                    self.n_elite, self.n_samples
                ),
            ));
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return Err(Error::config("cem.var_floor", "must be > 0"));
        }
        if !(self.var_terminate >= self.var_floor) {
            return Err(Error::config(
                "cem.var_terminate",
                format!("must be >= cem.var_floor ({})", self.var_floor),
            ));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::config("cem.sigma0_sq", "must be > 0"));
        }
        Ok(())
    }
}

pub fn sample_controls<R: Rng + ?Sized>(
    dist: &ControlDistribution,
    n: usize,
    u_max: f64,
    rng: &mut R,
) -> Vec<ControlSequence> {
    (0..n).map(|_| dist.sample(u_max, rng)).collect()
}

/// Indices of the `n_elite` highest rewards, best first. Equal rewards keep
/// index order; NaN ranks below everything.
pub fn elite_indices(rewards: &[f64], n_elite: usize) -> Result<Vec<usize>> {
    if n_elite > rewards.len() {
        return Err(Error::invalid(format!(
            "cannot select {n_elite} elites from {} samples",
            rewards.len()
        )));
    }
    let key = |r: f64| if r.is_nan() { f64::NEG_INFINITY } else { r };
    let mut idx: Vec<usize> = (0..rewards.len()).collect();
    idx.sort_by(|&a, &b| match key(rewards[b]).partial_cmp(&key(rewards[a])) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    idx.truncate(n_elite);
    Ok(idx)
}

pub fn elite_select(
    samples: &[ControlSequence],
    rewards: &[f64],
    n_elite: usize,
) -> Result<Vec<ControlSequence>> {
    if samples.len() != rewards.len() {
        return Err(Error::invalid("samples and rewards differ in length"));
    }
    Ok(elite_indices(rewards, n_elite)?
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}

/// Per-timestep mean and population variance, variance floored.
pub fn fit_gaussian(elite: &[ControlSequence], cfg: &CemConfig) -> Result<ControlDistribution> {
    let first = elite
        .first()
        .ok_or_else(|| Error::invalid("cannot fit an empty elite set"))?;
    let horizon = first.len();
    if elite.iter().any(|e| e.len() != horizon) {
        return Err(Error::invalid("elite sequences differ in length"));
    }
    let n = elite.len() as f64;
    let mut mean = vec![0.0; horizon];
    let mut var = vec![0.0; horizon];
    for k in 0..horizon {
        let m = elite.iter().map(|e| e.0[k]).sum::<f64>() / n;
        let v = elite.iter().map(|e| (e.0[k] - m).powi(2)).sum::<f64>() / n;
        mean[k] = m;
        var[k] = v.max(cfg.var_floor);
    }
    Ok(ControlDistribution { mean, var })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemOutcome {
    pub dist: ControlDistribution,
    /// Best candidate reward of each completed iteration.
    pub best_rewards: Vec<f64>,
    /// Best candidate of the last iteration, if any ran.
    pub best_sample: Option<ControlSequence>,
}

impl CemOutcome {
    pub fn iterations(&self) -> usize {
        self.best_rewards.len()
    }
}

/// Draws one joint sample of every peer's controls, in id order.
pub fn sample_peers<R: Rng + ?Sized>(ctx: &RewardContext, rng: &mut R) -> PeerSample {
    ctx.peers
        .iter()
        .map(|(&id, peer)| (id, peer.dist.sample(peer.params.u_max, rng)))
        .collect()
}

/// One robot's distribution update against the latest peer distributions.
///
/// Per iteration: sample own candidates, draw a fresh joint peer sample for
/// every candidate, score, keep the best `n_elite`, refit. Stops early once
/// the mean variance drops below `var_terminate`. Candidate scoring runs on
/// the rayon pool with per-candidate seeds, so the result does not depend on
/// the number of threads.
pub fn dec_cem(
    own: &ControlDistribution,
    objective: &dyn Objective,
    ctx: &RewardContext,
    cfg: &CemConfig,
    rng: &mut SimRng,
) -> Result<CemOutcome> {
    cfg.validate()?;
    let u_max = ctx.own_params.u_max;
    let eval_seed: u64 = rng.random();
    let mut dist = own.clone();
    let mut best_rewards = Vec::with_capacity(cfg.n_inner_iters);
    let mut best_sample = None;

    for it in 0..cfg.n_inner_iters {
        let samples = sample_controls(&dist, cfg.n_samples, u_max, rng);
        let scorer = objective.prepare(ctx, rng)?;
        let rewards: Vec<f64> = samples
            .par_iter()
            .enumerate()
            .map(|(k, candidate)| {
                let mut crng = seeded(derive_seed(eval_seed, &[it as u64, k as u64]));
                let peers = sample_peers(ctx, &mut crng);
                scorer.score(candidate, &peers, &mut crng)
            })
            .collect();
        let elite_idx = elite_indices(&rewards, cfg.n_elite)?;
        best_rewards.push(rewards[elite_idx[0]]);
        best_sample = Some(samples[elite_idx[0]].clone());
        let elite: Vec<ControlSequence> = elite_idx.iter().map(|&i| samples[i].clone()).collect();
        dist = fit_gaussian(&elite, cfg)?;
        if dist.mean_variance() < cfg.var_terminate {
            break;
        }
    }

    Ok(CemOutcome {
        dist,
        best_rewards,
        best_sample,
    })
}
