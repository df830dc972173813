//! Active auditing: probe-based metrics on a neighbor's model and the robust
//! consensus statistics that turn them into rewards.

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{forward, head_logits, softmax, MlpSpec, ParamVector};
use crate::seed;
use crate::{Error, Result};

pub const PROBE_AMPLITUDE: f64 = 3.0;
/// Lower clamp on probabilities inside the KL divergence.
pub const PROB_FLOOR: f64 = 1e-12;
/// Lower clamp on the MAD when the median deviation vanishes.
pub const MAD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Alternating,
    SignNoise,
    BlockShift,
}

/// Three base probes followed by their negations: `probes[k + 3] = -probes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub probes: Vec<Vec<f64>>,
    pub kinds: Vec<ProbeKind>,
}

pub fn gen_probes(d_in: usize, seed: u64) -> Result<ProbeSet> {
    if d_in < 2 {
        return Err(Error::Parameter(format!("probes need d_in >= 2, got {d_in}")));
    }
    let a = PROBE_AMPLITUDE;
    let alternating: Vec<f64> = (0..d_in).map(|i| if i % 2 == 0 { a } else { -a }).collect();
    let mut rng = seed::rng(seed, &[seed::tag::AUDIT_SEA]);
    let sign_noise: Vec<f64> = (0..d_in)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            if g < 0.0 {
                -a
            } else {
                a
            }
        })
        .collect();
    let block: Vec<f64> = (0..d_in)
        .map(|i| match 3 * i / d_in {
            1 => -a,
            _ => a,
        })
        .collect();
    let base = [alternating, sign_noise, block];
    let mut probes: Vec<Vec<f64>> = base.to_vec();
    probes.extend(base.iter().map(|p| p.iter().map(|v| -v).collect::<Vec<f64>>()));
    let kinds = [ProbeKind::Alternating, ProbeKind::SignNoise, ProbeKind::BlockShift];
    Ok(ProbeSet { probes, kinds: kinds.iter().chain(kinds.iter()).copied().collect() })
}

/// `C_max * (1 - H(p) / ln K)` for one probability vector.
pub fn entropy_anomaly(p: &[f64]) -> f64 {
    if p.iter().all(|&v| v == p[0]) {
        return 0.0;
    }
    let k = p.len() as f64;
    let c_max = p.iter().copied().fold(0.0, f64::max);
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum();
    (c_max * (1.0 - h / k.ln())).clamp(0.0, 1.0)
}

/// Worst-case entropy anomaly over every probe, scored independently.
pub fn rho_sea(params: &ParamVector, spec: &MlpSpec, probes: &ProbeSet) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in &probes.probes {
        worst = worst.max(entropy_anomaly(&forward(params, spec, x)?.probs));
    }
    Ok(worst)
}

/// `KL(p || q)` with both sides clamped at [`PROB_FLOOR`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let a = a.max(PROB_FLOOR);
            a * (a.ln() - b.max(PROB_FLOOR).ln())
        })
        .sum::<f64>()
        .max(0.0)
}

/// `exp(-kappa * mean_kl)`.
pub fn rs_score(mean_kl: f64, kappa: f64) -> f64 {
    (-kappa * mean_kl).exp()
}

/// Randomized-smoothing score: mean KL between the clean prediction at
/// `anchor` and `samples` predictions with Gaussian noise added to the latent
/// features, mapped through `exp(-kappa * mean)`.
pub fn rho_rs(
    params: &ParamVector,
    spec: &MlpSpec,
    anchor: &[f64],
    samples: usize,
    sigma: f64,
    kappa: f64,
    seed: u64,
) -> Result<f64> {
    if samples == 0 || !(sigma > 0.0) || !(kappa > 0.0) {
        return Err(Error::Parameter(format!("rho_rs needs B >= 1, sigma > 0, kappa > 0 (B={samples}, sigma={sigma}, kappa={kappa})")));
    }
    let trace = forward(params, spec, anchor)?;
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut rng = seed::rng(seed, &[seed::tag::AUDIT_RS]);
    let mut noisy = trace.z.clone();
    let mut total = 0.0;
    for _ in 0..samples {
        for (n, z) in noisy.iter_mut().zip(&trace.z) {
            *n = z + normal.sample(&mut rng);
        }
        total += kl_divergence(&trace.probs, &softmax(&head_logits(params, spec, &noisy)));
    }
    Ok(rs_score(total / samples as f64, kappa))
}

/// Feature-wise fourth standardized moment (population convention).
/// Returns 1 for a constant vector.
pub fn kurtosis(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    let mean = z.iter().sum::<f64>() / d;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    if !(var > 0.0) {
        return 1.0;
    }
    let m4 = z.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / d;
    m4 / (var * var)
}

/// Batch-averaged kurtosis of the latent features.
pub fn rho_ak(params: &ParamVector, spec: &MlpSpec, batch: &[Vec<f64>]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if spec.latent_dim() < 2 {
        return Err(Error::Parameter("kurtosis needs a latent width of at least 2".into()));
    }
    let mut total = 0.0;
    for x in batch {
        total += kurtosis(&forward(params, spec, x)?.z);
    }
    Ok(total / batch.len() as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustZ {
    pub z: Vec<f64>,
    /// The MAD was zero and the fallback scale was used.
    pub degenerate: bool,
}

/// `|m_j - median(m)| / MAD(m)`. A zero MAD is replaced by the mean absolute
/// deviation from the median, floored at [`MAD_FLOOR`].
pub fn robust_z(values: &[f64]) -> Result<RobustZ> {
    if values.is_empty() {
        return Err(Error::Input("robust_z of an empty list".into()));
    }
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let mut mad = median(&dev);
    let degenerate = !(mad > 0.0);
    if degenerate {
        mad = (dev.iter().sum::<f64>() / dev.len() as f64).max(MAD_FLOOR);
    }
    Ok(RobustZ { z: dev.iter().map(|d| d / mad).collect(), degenerate })
}

pub fn reward(z_sea: f64, z_rs: f64, z_ak: f64) -> f64 {
    (-(z_sea + z_rs + z_ak)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Noise draws per randomized-smoothing evaluation.
    pub rs_samples: usize,
    pub sigma_rs: f64,
    pub kappa_rs: f64,
    /// Clean samples in the kurtosis batch.
    pub ak_batch: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { rs_samples: 16, sigma_rs: 0.5, kappa_rs: 5.0, ak_batch: 16 }
    }
}

impl AuditConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.rs_samples == 0 {
            v.push("audit.rs_samples must be at least 1".into());
        }
        if !(self.sigma_rs > 0.0) {
            v.push(format!("audit.sigma_rs {} must be positive", self.sigma_rs));
        }
        if !(self.kappa_rs > 0.0) {
            v.push(format!("audit.kappa_rs {} must be positive", self.kappa_rs));
        }
        if self.ak_batch == 0 {
            v.push("audit.ak_batch must be at least 1".into());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub rho_sea: f64,
    pub rho_rs: f64,
    pub rho_ak: f64,
}

/// Defender-private inputs shared by every neighbor audited in one round.
#[derive(Debug, Clone)]
pub struct AuditContext {
    pub probes: ProbeSet,
    pub anchor: Vec<f64>,
    pub batch: Vec<Vec<f64>>,
    /// Seed of the latent-noise stream; reused for every neighbor so their
    /// scores see the same perturbations.
    pub noise_seed: u64,
}

pub fn score_model(params: &ParamVector, spec: &MlpSpec, ctx: &AuditContext, cfg: &AuditConfig) -> Result<MetricScores> {
    Ok(MetricScores {
        rho_sea: rho_sea(params, spec, &ctx.probes)?,
        rho_rs: rho_rs(params, spec, &ctx.anchor, cfg.rs_samples, cfg.sigma_rs, cfg.kappa_rs, ctx.noise_seed)?,
        rho_ak: rho_ak(params, spec, &ctx.batch)?,
    })
}

/// One line of the per-round audit CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub round: usize,
    pub defender_id: usize,
    pub neighbor_id: usize,
    pub rho_sea: f64,
    pub rho_rs: f64,
    pub rho_ak: f64,
    pub z_sea: f64,
    pub z_rs: f64,
    pub z_ak: f64,
    pub reward: f64,
}

/// Robust Z across the audited set and the resulting rewards.
pub fn audit_rows(round: usize, defender: usize, scored: &[(usize, MetricScores)]) -> Result<Vec<AuditRow>> {
    let pick = |f: fn(&MetricScores) -> f64| scored.iter().map(|(_, s)| f(s)).collect::<Vec<f64>>();
    let z_sea = robust_z(&pick(|s| s.rho_sea))?.z;
    let z_rs = robust_z(&pick(|s| s.rho_rs))?.z;
    let z_ak = robust_z(&pick(|s| s.rho_ak))?.z;
    Ok(scored
        .iter()
        .enumerate()
        .map(|(k, &(neighbor_id, s))| AuditRow {
            round,
            defender_id: defender,
            neighbor_id,
            rho_sea: s.rho_sea,
            rho_rs: s.rho_rs,
            rho_ak: s.rho_ak,
            z_sea: z_sea[k],
            z_rs: z_rs[k],
            z_ak: z_ak[k],
            reward: reward(z_sea[k], z_rs[k], z_ak[k]),
        })
        .collect())
}
