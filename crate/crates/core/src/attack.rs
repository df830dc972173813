//! Camouflaged backdoor crafting: raw poisoning, alignment with a benign
//! reference update, and norm-bounded scaling.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::nn::{train_local, Dataset, Group, MlpSpec, ParamVector, TrainConfig};
use crate::seed;
use crate::{Error, Result};

/// Additive input pattern `x[c] += intensity * delta[c]`.
///
/// Application is purely additive: triggering an already triggered input
/// shifts it a second time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub coords: Vec<usize>,
    pub delta: Vec<f64>,
    pub intensity: f64,
}

impl Trigger {
    pub fn new(coords: Vec<usize>, delta: Vec<f64>, intensity: f64, d_in: usize) -> Result<Self> {
        if coords.len() != delta.len() {
            return Err(Error::Parameter("trigger coords and delta differ in length".into()));
        }
        let mut sorted = coords.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != coords.len() || coords.iter().any(|&c| c >= d_in) {
            return Err(Error::Parameter(format!("trigger coords must be distinct and below {d_in}")));
        }
        if !intensity.is_finite() || delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::Parameter("non-finite trigger".into()));
        }
        Ok(Self { coords, delta, intensity })
    }

    /// `size` unit shifts on the last coordinates of the input.
    pub fn tail(d_in: usize, size: usize, intensity: f64) -> Result<Self> {
        if size == 0 || size > d_in {
            return Err(Error::Parameter(format!("trigger size {size} for input dim {d_in}")));
        }
        Self::new((d_in - size..d_in).collect(), vec![1.0; size], intensity, d_in)
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        for (&c, &d) in self.coords.iter().zip(&self.delta) {
            x[c] += self.intensity * d;
        }
    }
}

pub fn apply_trigger(x: &[f64], trig: &Trigger) -> Vec<f64> {
    let mut out = x.to_vec();
    trig.apply_in_place(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    ConvexFusion,
    SubspaceProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleRule {
    /// `s = tau / |d|` with `tau = b_f * |ref|`.
    Exact,
    /// `s = min(1, tau / |d|)` with `tau = 6 * b_f * |ref|`.
    Capped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub y_source: Option<usize>,
    pub target: usize,
    pub poison_fraction: f64,
    pub mode: AlignMode,
    pub c_alpha: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub b_f: f64,
    pub scale_rule: ScaleRule,
    /// Residual weight a malicious node gives its neighbors.
    pub epsilon: f64,
    pub trigger_size: usize,
    pub intensity: f64,
    /// Epochs on the poisoned set per round.
    pub epochs: usize,
    /// Epochs of clean training used for the reference update.
    pub reference_epochs: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            y_source: None,
            target: 0,
            poison_fraction: 0.5,
            mode: AlignMode::ConvexFusion,
            c_alpha: 0.6,
            gamma0: 2.0,
            gamma1: 15.0,
            b_f: 1.0,
            scale_rule: ScaleRule::Exact,
            epsilon: 0.01,
            trigger_size: 4,
            intensity: 4.0,
            epochs: 2,
            reference_epochs: 1,
        }
    }
}

impl AttackConfig {
    /// Every violated constraint, for config validation.
    pub fn violations(&self, classes: usize, d_in: usize) -> Vec<String> {
        let mut v = Vec::new();
        if self.target >= classes {
            v.push(format!("attack.target {} is not a class (K={classes})", self.target));
        }
        if let Some(y) = self.y_source {
            if y >= classes {
                v.push(format!("attack.y_source {y} is not a class (K={classes})"));
            }
        }
        if !(self.poison_fraction > 0.0 && self.poison_fraction <= 1.0) {
            v.push(format!("attack.poison_fraction {} not in (0,1]", self.poison_fraction));
        }
        if !(0.0..=1.0).contains(&self.c_alpha) {
            v.push(format!("attack.c_alpha {} not in [0,1]", self.c_alpha));
        }
        if !(self.gamma0 > 0.0 && self.gamma1 > 0.0) {
            v.push("attack.gamma0 and attack.gamma1 must be positive".into());
        }
        if !(self.b_f > 0.0) {
            v.push(format!("attack.b_f {} must be positive", self.b_f));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            v.push(format!("attack.epsilon {} not in [0,1]", self.epsilon));
        }
        if self.trigger_size == 0 || self.trigger_size > d_in {
            v.push(format!("attack.trigger_size {} not in 1..={d_in}", self.trigger_size));
        }
        if !self.intensity.is_finite() {
            v.push("attack.intensity must be finite".into());
        }
        v
    }

    pub fn trigger(&self, d_in: usize) -> Result<Trigger> {
        Trigger::tail(d_in, self.trigger_size, self.intensity)
    }
}

/// Triggers and relabels `ceil(fraction * |eligible|)` randomly chosen
/// eligible samples. Returns the poisoned copy and the poisoned indices.
pub fn poison_dataset(data: &Dataset, cfg: &AttackConfig, trig: &Trigger, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if !(cfg.poison_fraction > 0.0 && cfg.poison_fraction <= 1.0) {
        return Err(Error::Parameter(format!("poison fraction {}", cfg.poison_fraction)));
    }
    let eligible: Vec<usize> = match cfg.y_source {
        Some(y) => data.indices_of_class(y),
        None => (0..data.len()).collect(),
    };
    if eligible.is_empty() {
        return Err(Error::Input("no samples eligible for poisoning".into()));
    }
    let count = ((cfg.poison_fraction * eligible.len() as f64).ceil() as usize).min(eligible.len());
    let mut rng = seed::rng(seed, &[seed::tag::ATTACK]);
    let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), count).into_iter().map(|k| eligible[k]).collect();
    chosen.sort_unstable();
    let mut out = data.clone();
    for &i in &chosen {
        trig.apply_in_place(out.input_mut(i));
        out.set_label(i, cfg.target);
    }
    Ok((out, chosen))
}

/// Parameter change from training `prev` on the poisoned set.
pub fn raw_backdoor_update(
    prev: &ParamVector,
    spec: &MlpSpec,
    poisoned: &Dataset,
    train: &TrainConfig,
    seed: u64,
) -> Result<ParamVector> {
    let trained = train_local(prev, spec, poisoned, train, seed)?;
    Ok(&trained - prev)
}

/// `c_alpha * mal + (1 - c_alpha) * reference`.
pub fn convex_fuse(mal: &ParamVector, reference: &ParamVector, c_alpha: f64) -> Result<ParamVector> {
    mal.check_len(reference)?;
    Ok(ParamVector(mal.0.iter().zip(&reference.0).map(|(m, r)| c_alpha * m + (1.0 - c_alpha) * r).collect()))
}

/// Body copies `gamma0 * reference`; entry and head keep the malicious
/// direction, capped at `gamma1` times the reference group norm.
pub fn subspace_project(
    mal: &ParamVector,
    reference: &ParamVector,
    spec: &MlpSpec,
    gamma0: f64,
    gamma1: f64,
) -> Result<ParamVector> {
    spec.check(mal)?;
    spec.check(reference)?;
    let mut out = ParamVector::zeros(spec.param_count());
    for group in Group::ALL {
        let m = spec.group(mal, group);
        let r = spec.group(reference, group);
        let dst = spec.group_mut(&mut out, group);
        match group {
            Group::Body => {
                for (d, x) in dst.iter_mut().zip(r) {
                    *d = gamma0 * x;
                }
            }
            Group::Entry | Group::Head => {
                let m_norm = norm(m);
                let factor = if m_norm == 0.0 { 1.0 } else { (gamma1 * norm(r) / m_norm).min(1.0) };
                for (d, x) in dst.iter_mut().zip(m) {
                    *d = factor * x;
                }
            }
        }
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm_threshold(ref_norm: f64, b_f: f64, rule: ScaleRule) -> f64 {
    match rule {
        ScaleRule::Exact => b_f * ref_norm,
        ScaleRule::Capped => 6.0 * b_f * ref_norm,
    }
}

/// Returns the scaled update and the factor `s` applied.
pub fn norm_bound_scale(update: &ParamVector, ref_norm: f64, b_f: f64, rule: ScaleRule) -> Result<(ParamVector, f64)> {
    let tau = norm_threshold(ref_norm, b_f, rule);
    let n = update.norm();
    let s = match rule {
        ScaleRule::Exact => {
            if n == 0.0 {
                return Err(Error::Parameter("exact rescaling of a zero update".into()));
            }
            tau / n
        }
        ScaleRule::Capped => {
            if n <= tau {
                1.0
            } else {
                tau / n
            }
        }
    };
    Ok((update.scaled(s), s))
}

/// One crafted malicious update and its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MaliciousUpdate {
    pub broadcast: ParamVector,
    pub raw_norm: f64,
    pub reference_norm: f64,
    pub transmitted_norm: f64,
    pub scale: f64,
}

/// Phases 1 to 3 from the node's previous retained model. The reference
/// update is one clean pass over the node's own data.
pub fn craft_malicious_update(
    prev: &ParamVector,
    spec: &MlpSpec,
    clean: &Dataset,
    cfg: &AttackConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<MaliciousUpdate> {
    let trig = cfg.trigger(spec.input_dim())?;
    let (poisoned, _) = poison_dataset(clean, cfg, &trig, seed)?;
    let mal_train = TrainConfig { epochs: cfg.epochs, ..*train };
    let mal = raw_backdoor_update(prev, spec, &poisoned, &mal_train, seed::derive(seed, &[seed::tag::ATTACK]))?;
    let ref_train = TrainConfig { epochs: cfg.reference_epochs, ..*train };
    let reference = &train_local(prev, spec, clean, &ref_train, seed::derive(seed, &[seed::tag::REFERENCE]))? - prev;
    let aligned = match cfg.mode {
        AlignMode::ConvexFusion => convex_fuse(&mal, &reference, cfg.c_alpha)?,
        AlignMode::SubspaceProjection => subspace_project(&mal, &reference, spec, cfg.gamma0, cfg.gamma1)?,
    };
    let (scaled, scale) = norm_bound_scale(&aligned, reference.norm(), cfg.b_f, cfg.scale_rule)?;
    Ok(MaliciousUpdate {
        broadcast: prev + &scaled,
        raw_norm: mal.norm(),
        reference_norm: reference.norm(),
        transmitted_norm: scaled.norm(),
        scale,
    })
}

/// State a malicious node keeps after a round: its own broadcast with weight
/// `1 - epsilon`, the rest spread uniformly over neighbor broadcasts.
pub fn self_isolate(own: &ParamVector, neighbors: &[&ParamVector], epsilon: f64) -> ParamVector {
    if neighbors.is_empty() || epsilon == 0.0 {
        return own.clone();
    }
    let mut out = own.scaled(1.0 - epsilon);
    let w = epsilon / neighbors.len() as f64;
    for nb in neighbors {
        out.axpy(w, nb);
    }
    out
}
