use serde::Serialize;

use crate::attack::Trigger;
use crate::nn::{evaluate, Dataset, MlpSpec, ParamVector};
use crate::{Error, Result};

use super::scenario::adversarial_set;

/// Fraction of triggered non-target holdout samples classified as `target`.
pub fn compute_asr(params: &ParamVector, spec: &MlpSpec, holdout: &Dataset, trigger: &Trigger, target: usize) -> Result<f64> {
    evaluate(params, spec, &adversarial_set(holdout, trigger, target)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KendallTau {
    pub tau: f64,
    /// One side was constant, so tau is undefined and reported as 0.
    pub degenerate: bool,
}

/// Tie-corrected Kendall tau-b by pairwise concordance counting.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<KendallTau> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), actual: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::Input("kendall tau needs at least two points".into()));
    }
    let (mut concordant, mut discordant, mut ties_a, mut ties_b, mut pairs) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            pairs += 1;
            let da = (a[i] - a[j]).partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal) as i64;
            let db = (b[i] - b[j]).partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal) as i64;
            if da == 0 {
                ties_a += 1;
            }
            if db == 0 {
                ties_b += 1;
            }
            match da * db {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let denom = (((pairs - ties_a) * (pairs - ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return Ok(KendallTau { tau: 0.0, degenerate: true });
    }
    Ok(KendallTau { tau: (concordant - discordant) as f64 / denom, degenerate: false })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
