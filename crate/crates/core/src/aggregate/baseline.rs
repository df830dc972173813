use rand_distr::{Distribution, Normal};

use crate::audit::median;
use crate::nn::ParamVector;
use crate::seed;
use crate::{Error, Result};

/// Trim fraction used whenever a baseline falls back to trimmed mean.
pub const DEFAULT_TRIM: f64 = 0.2;

/// Aggregator output plus which inputs contributed and whether a fallback
/// path was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregated {
    pub value: ParamVector,
    pub selected: Vec<usize>,
    pub fallback: bool,
}

fn check_layout(updates: &[&ParamVector]) -> Result<usize> {
    let first = updates.first().ok_or(Error::EmptyUpdates)?;
    for u in updates {
        u.check_len(first)?;
    }
    Ok(first.len())
}

pub fn fedavg(updates: &[&ParamVector]) -> Result<ParamVector> {
    let p = check_layout(updates)?;
    let mut out = ParamVector::zeros(p);
    let w = 1.0 / updates.len() as f64;
    for u in updates {
        out.axpy(w, u);
    }
    Ok(out)
}

/// Per coordinate: drop the `floor(beta * n)` smallest and largest values and
/// average the rest.
pub fn trimmed_mean(updates: &[&ParamVector], beta: f64) -> Result<ParamVector> {
    let p = check_layout(updates)?;
    let n = updates.len();
    let k = (beta * n as f64).floor() as usize;
    if !(0.0..1.0).contains(&beta) || 2 * k >= n {
        return Err(Error::Parameter(format!("trim fraction {beta} removes every one of {n} values")));
    }
    let mut column = vec![0.0; n];
    let mut out = vec![0.0; p];
    for (c, o) in out.iter_mut().enumerate() {
        for (slot, u) in column.iter_mut().zip(updates) {
            *slot = u.0[c];
        }
        column.sort_by(f64::total_cmp);
        let kept = &column[k..n - k];
        *o = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    Ok(ParamVector(out))
}

/// Krum score of each update: sum of its `n - f - 2` smallest squared
/// distances to the others.
pub fn krum_scores(updates: &[&ParamVector], f: usize) -> Vec<f64> {
    let n = updates.len();
    let keep = n.saturating_sub(f + 2);
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| updates[i].distance_sq(updates[j])).collect();
            d.sort_by(f64::total_cmp);
            d[..keep.min(d.len())].iter().sum()
        })
        .collect()
}

/// Krum (`m = 1`) or Multi-Krum (`m > 1`). Ties go to the lowest index.
/// With fewer than `2f + 3` inputs the precondition fails and trimmed mean
/// is used instead.
pub fn krum(updates: &[&ParamVector], f: usize, m: usize) -> Result<Aggregated> {
    check_layout(updates)?;
    let n = updates.len();
    if n < 2 * f + 3 {
        log::warn!("krum needs at least {} inputs, got {n}; using trimmed mean", 2 * f + 3);
        return Ok(Aggregated {
            value: trimmed_mean(updates, DEFAULT_TRIM)?,
            selected: (0..n).collect(),
            fallback: true,
        });
    }
    let scores = krum_scores(updates, f);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(m.clamp(1, n));
    let chosen: Vec<&ParamVector> = order.iter().map(|&i| updates[i]).collect();
    Ok(Aggregated { value: fedavg(&chosen)?, selected: order, fallback: false })
}

/// Cosine-weighted, norm-clipped average. Each update is weighted by
/// `max(0, cos(update, reference))` and clipped to `clip` times the median
/// update norm. If every weight is zero the reference is returned.
pub fn cos_l2(updates: &[&ParamVector], reference: &ParamVector, clip: f64) -> Result<Aggregated> {
    let p = check_layout(updates)?;
    reference.check_len(updates[0])?;
    if reference.norm() == 0.0 {
        return Err(Error::Parameter("cos_l2 needs a nonzero reference".into()));
    }
    let norms: Vec<f64> = updates.iter().map(|u| u.norm()).collect();
    let bound = clip * median(&norms);
    let mut out = ParamVector::zeros(p);
    let mut total = 0.0;
    let mut selected = Vec::new();
    for (i, u) in updates.iter().enumerate() {
        let w = u.cosine(reference).max(0.0);
        if w <= 0.0 {
            continue;
        }
        let s = if norms[i] > bound { bound / norms[i] } else { 1.0 };
        out.axpy(w * s, u);
        total += w;
        selected.push(i);
    }
    if total == 0.0 {
        return Ok(Aggregated { value: reference.clone(), selected, fallback: true });
    }
    Ok(Aggregated { value: out.scaled(1.0 / total), selected, fallback: false })
}

/// Simplified FLAME-style filter: drop updates whose mean cosine distance to
/// the others exceeds median + MAD of those means, clip survivors to the
/// median norm, average, then add `N(0, sigma^2)` noise per coordinate.
/// Fewer than three inputs, or an empty survivor set, fall back to trimmed
/// mean.
pub fn flame_lite(updates: &[&ParamVector], sigma: f64, seed: u64) -> Result<Aggregated> {
    let p = check_layout(updates)?;
    let n = updates.len();
    let fallback = |selected: Vec<usize>| -> Result<Aggregated> {
        Ok(Aggregated { value: trimmed_mean(updates, DEFAULT_TRIM)?, selected, fallback: true })
    };
    if n < 3 {
        return fallback((0..n).collect());
    }
    let mean_dist: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| 1.0 - updates[i].cosine(updates[j])).sum::<f64>() / (n - 1) as f64)
        .collect();
    let med = median(&mean_dist);
    let mad = median(&mean_dist.iter().map(|d| (d - med).abs()).collect::<Vec<_>>());
    let survivors: Vec<usize> = (0..n).filter(|&i| mean_dist[i] <= med + mad).collect();
    if survivors.is_empty() {
        return fallback(survivors);
    }
    let norms: Vec<f64> = updates.iter().map(|u| u.norm()).collect();
    let bound = median(&norms);
    let mut out = ParamVector::zeros(p);
    let w = 1.0 / survivors.len() as f64;
    for &i in &survivors {
        let s = if norms[i] > bound { bound / norms[i] } else { 1.0 };
        out.axpy(w * s, updates[i]);
    }
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        let mut rng = seed::rng(seed, &[seed::tag::AGGREGATE]);
        for v in out.as_mut_slice() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(Aggregated { value: out, selected: survivors, fallback: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector(v.to_vec())
    }

    #[test]
    fn fedavg_examples() {
        let v = pv(&[1.0, -2.0]);
        assert_eq!(fedavg(&[&v]).unwrap(), v);
        assert_eq!(fedavg(&[&v, &v.scaled(-1.0)]).unwrap(), pv(&[0.0, 0.0]));
        let (a, b, c) = (pv(&[1.0; 3]), pv(&[2.0; 3]), pv(&[3.0; 3]));
        assert_eq!(fedavg(&[&a, &b, &c]).unwrap(), pv(&[2.0; 3]));
        assert!(matches!(fedavg(&[]), Err(Error::EmptyUpdates)));
        assert!(matches!(fedavg(&[&a, &v]), Err(Error::LayoutMismatch)));
    }

    #[test]
    fn trimmed_examples() {
        let vals: Vec<ParamVector> = [0.0, 1.0, 2.0, 3.0, 100.0].iter().map(|&x| pv(&[x])).collect();
        let refs: Vec<&ParamVector> = vals.iter().collect();
        assert_eq!(trimmed_mean(&refs, 0.2).unwrap(), pv(&[2.0]));
        let diff = &trimmed_mean(&refs, 0.0).unwrap() - &fedavg(&refs).unwrap();
        assert!(diff.norm() < 1e-12);
        assert!(trimmed_mean(&refs, 0.6).is_err());
    }

    #[test]
    fn krum_examples() {
        let mut vals: Vec<ParamVector> = (0..5).map(|i| pv(&[i as f64 * 0.01, 0.0])).collect();
        vals.push(pv(&[50.0, 50.0]));
        let refs: Vec<&ParamVector> = vals.iter().collect();
        let out = krum(&refs, 1, 1).unwrap();
        assert!(!out.fallback && out.selected[0] != 5);
        let same = vec![pv(&[1.0]); 5];
        let refs: Vec<&ParamVector> = same.iter().collect();
        assert_eq!(krum(&refs, 1, 1).unwrap().selected, vec![0]);
        let all = krum(&refs, 1, 5).unwrap();
        assert_eq!(all.value, fedavg(&refs).unwrap());
        assert!(krum(&refs[..4], 1, 1).unwrap().fallback);
    }

    #[test]
    fn cos_l2_examples() {
        let r = pv(&[1.0, 0.0]);
        let a = pv(&[2.0, 0.0]);
        let b = pv(&[4.0, 0.0]);
        let out = cos_l2(&[&a, &b], &r, 1.0).unwrap();
        // median norm 3: b clipped to 3, then plain mean.
        assert_eq!(out.value, pv(&[2.5, 0.0]));
        let orth = pv(&[0.0, 1.0]);
        let anti = pv(&[-1.0, 0.0]);
        let out = cos_l2(&[&a, &orth, &anti], &r, 10.0).unwrap();
        assert_eq!(out.selected, vec![0]);
        let none = cos_l2(&[&orth, &anti], &r, 1.0).unwrap();
        assert!(none.fallback && none.value == r);
    }

    #[test]
    fn flame_examples() {
        let v = pv(&[1.0, 2.0]);
        let out = flame_lite(&[&v, &v, &v], 0.0, 0).unwrap();
        assert_eq!(out.value, v);
        let mut vals: Vec<ParamVector> = (0..5).map(|i| pv(&[1.0, 0.1 * i as f64])).collect();
        vals.push(pv(&[-1.0, -0.2]));
        let refs: Vec<&ParamVector> = vals.iter().collect();
        let out = flame_lite(&refs, 0.0, 0).unwrap();
        assert!(!out.selected.contains(&5));
        let med = median(&refs.iter().map(|u| u.norm()).collect::<Vec<_>>());
        assert!(out.value.norm() <= med + 1e-12);
    }
}
