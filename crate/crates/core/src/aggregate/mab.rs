use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::fedavg;
use crate::audit::{audit_rows, AuditRow, MetricScores};
use crate::nn::ParamVector;
use crate::seed::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MabConfig {
    /// Fraction of neighbors audited each round.
    pub r_a: f64,
    /// Fraction of trusted neighbors aggregated each round.
    pub r_s: f64,
    pub tau_agg: f64,
    /// UCB exploration constant.
    pub c: f64,
    /// EWMA rate of the trust update.
    pub alpha: f64,
    /// Discount applied to audit counts each round.
    pub gamma: f64,
    pub q0: f64,
    pub w_self: f64,
    pub w_defense: f64,
    pub w_other: f64,
}

impl Default for MabConfig {
    fn default() -> Self {
        Self {
            r_a: 0.9,
            r_s: 0.8,
            tau_agg: 0.4,
            c: 0.5,
            alpha: 0.3,
            gamma: 0.95,
            q0: 0.5,
            w_self: 0.5,
            w_defense: 0.45,
            w_other: 0.05,
        }
    }
}

impl MabConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [("r_a", self.r_a), ("r_s", self.r_s)] {
            if !(x > 0.0 && x <= 1.0) {
                v.push(format!("policy.mab.{name} {x} not in (0,1]"));
            }
        }
        for (name, x) in [("tau_agg", self.tau_agg), ("q0", self.q0)] {
            if !(0.0..=1.0).contains(&x) {
                v.push(format!("policy.mab.{name} {x} not in [0,1]"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            v.push(format!("policy.mab.alpha {} not in (0,1]", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            v.push(format!("policy.mab.gamma {} not in (0,1]", self.gamma));
        }
        if !(self.c >= 0.0) {
            v.push(format!("policy.mab.c {} must be nonnegative", self.c));
        }
        let w = [self.w_self, self.w_defense, self.w_other];
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            v.push(format!("policy.mab stratified weights {w:?} must be nonnegative and sum to 1"));
        }
        v
    }
}

/// Per-defender trust state over its neighbors, indexed by position in
/// `neighbors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustLedger {
    pub neighbors: Vec<usize>,
    pub q: Vec<f64>,
    /// Discounted audit counts.
    pub n_disc: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
}

impl TrustLedger {
    pub fn new(neighbors: Vec<usize>, cfg: &MabConfig) -> Self {
        let k = neighbors.len();
        Self { neighbors, q: vec![cfg.q0; k], n_disc: vec![0.0; k], alpha: cfg.alpha, gamma: cfg.gamma, c: cfg.c }
    }

    pub fn position(&self, node: usize) -> Option<usize> {
        self.neighbors.iter().position(|&j| j == node)
    }

    /// `Q <- (1 - alpha) Q + alpha r` for the neighbor at `pos`.
    pub fn trust_update(&mut self, pos: usize, reward: f64) {
        self.q[pos] = (1.0 - self.alpha) * self.q[pos] + self.alpha * reward;
    }

    /// Discounts every count and adds one for each audited position.
    pub fn record_audits(&mut self, audited: &[usize]) {
        for n in &mut self.n_disc {
            *n *= self.gamma;
        }
        for &pos in audited {
            self.n_disc[pos] += 1.0;
        }
    }

    /// Discounted UCB per neighbor. Never-audited neighbors score `+inf`;
    /// `ln n_gamma` is clamped at zero.
    pub fn ucb_scores(&self) -> Vec<f64> {
        let total: f64 = self.n_disc.iter().sum();
        let log_total = if total > 0.0 { total.ln().max(0.0) } else { 0.0 };
        self.q
            .iter()
            .zip(&self.n_disc)
            .map(|(&q, &n)| if n > 0.0 { q + self.c * (2.0 * log_total / n).sqrt() } else { f64::INFINITY })
            .collect()
    }
}

/// Draws `k` distinct positions. Infinite weights are admitted first in
/// index order; the rest are sequential categorical draws proportional to
/// the remaining weights (uniform if they are all zero).
pub fn weighted_sample(weights: &[f64], k: usize, rng: &mut Rng) -> Vec<usize> {
    let k = k.min(weights.len());
    let mut chosen: Vec<usize> = (0..weights.len()).filter(|&i| weights[i].is_infinite()).take(k).collect();
    let mut pool: Vec<usize> = (0..weights.len()).filter(|&i| !weights[i].is_infinite()).collect();
    while chosen.len() < k {
        let total: f64 = pool.iter().map(|&i| weights[i].max(0.0)).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut at = pool.len() - 1;
            for (slot, &i) in pool.iter().enumerate() {
                let w = weights[i].max(0.0);
                if target < w {
                    at = slot;
                    break;
                }
                target -= w;
            }
            at
        } else {
            rng.random_range(0..pool.len())
        };
        chosen.push(pool.remove(pick));
    }
    chosen.sort_unstable();
    chosen
}

/// Outcome of one audited defense round, in neighbor ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MabRound {
    pub model: ParamVector,
    pub audited: Vec<usize>,
    pub trusted: Vec<usize>,
    pub aggregated: Vec<usize>,
    pub rows: Vec<AuditRow>,
    /// No neighbor cleared the trust threshold; `model` is the fallback.
    pub starved: bool,
}

/// Audit subsampling, trust update, thresholding and trust-weighted
/// aggregation subsampling for one defender. `models[k]` is the broadcast of
/// `ledger.neighbors[k]`; `score` evaluates the three metrics on it.
#[allow(clippy::too_many_arguments)]
pub fn mab_defense_round<F>(
    ledger: &mut TrustLedger,
    round: usize,
    defender: usize,
    models: &[&ParamVector],
    fallback: &ParamVector,
    cfg: &MabConfig,
    score: F,
    rng: &mut Rng,
) -> Result<MabRound>
where
    F: Fn(&ParamVector) -> Result<MetricScores>,
{
    let k = ledger.neighbors.len();
    if k == 0 || models.len() != k {
        return Err(Error::Input(format!("defender {defender} has {k} neighbors and {} models", models.len())));
    }
    let ucb = ledger.ucb_scores();
    let audit_count = (cfg.r_a * k as f64).ceil() as usize;
    let audited = weighted_sample(&ucb, audit_count, rng);
    ledger.record_audits(&audited);

    let scored = audited
        .iter()
        .map(|&pos| Ok((ledger.neighbors[pos], score(models[pos])?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = audit_rows(round, defender, &scored)?;
    for (&pos, row) in audited.iter().zip(&rows) {
        ledger.trust_update(pos, row.reward);
    }

    let trusted: Vec<usize> = audited.iter().copied().filter(|&pos| ledger.q[pos] > cfg.tau_agg).collect();
    let ids = |positions: &[usize]| positions.iter().map(|&p| ledger.neighbors[p]).collect::<Vec<_>>();
    if trusted.is_empty() {
        return Ok(MabRound {
            model: fallback.clone(),
            audited: ids(&audited),
            trusted: Vec::new(),
            aggregated: Vec::new(),
            rows,
            starved: true,
        });
    }
    let weights: Vec<f64> = trusted.iter().map(|&pos| ledger.q[pos]).collect();
    let take = (cfg.r_s * trusted.len() as f64).ceil() as usize;
    let aggregated: Vec<usize> = weighted_sample(&weights, take, rng).into_iter().map(|s| trusted[s]).collect();
    let chosen: Vec<&ParamVector> = aggregated.iter().map(|&pos| models[pos]).collect();
    Ok(MabRound {
        model: fedavg(&chosen)?,
        audited: ids(&audited),
        trusted: ids(&trusted),
        aggregated: ids(&aggregated),
        rows,
        starved: false,
    })
}

/// Realized `(self, per-defense-neighbor, per-other-neighbor)` weights. The
/// self weight is fixed; an empty neighbor group hands its mass to the other
/// group, and with no neighbors at all the node keeps its own model.
pub fn stratified_weights(cfg: &MabConfig, defense: usize, other: usize) -> (f64, f64, f64) {
    let neighbor_mass = cfg.w_defense + cfg.w_other;
    match (defense, other) {
        (0, 0) => (1.0, 0.0, 0.0),
        (0, o) => (cfg.w_self, 0.0, neighbor_mass / o as f64),
        (d, 0) => (cfg.w_self, neighbor_mass / d as f64, 0.0),
        (d, o) => (cfg.w_self, cfg.w_defense / d as f64, cfg.w_other / o as f64),
    }
}

pub fn stratified_aggregate(
    own: &ParamVector,
    defense: &[&ParamVector],
    other: &[&ParamVector],
    cfg: &MabConfig,
) -> Result<ParamVector> {
    for v in defense.iter().chain(other) {
        v.check_len(own)?;
    }
    let (ws, wd, wo) = stratified_weights(cfg, defense.len(), other.len());
    let mut out = own.scaled(ws);
    for v in defense {
        out.axpy(wd, v);
    }
    for v in other {
        out.axpy(wo, v);
    }
    Ok(out)
}
