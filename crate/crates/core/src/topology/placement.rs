use serde::Serialize;

use super::{hybrid_scores, Graph};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefensePlacement {
    /// Defense nodes in admission order.
    pub defense_set: Vec<usize>,
    /// Covered nodes, ascending.
    pub coverage: Vec<usize>,
    /// Per-node score that drove the placement (hybrid score or initial gain).
    pub scores: Vec<f64>,
    /// Set when fewer than `budget` nodes had positive marginal gain.
    pub under_budget: bool,
}

impl DefensePlacement {
    pub fn coverage_fraction(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.coverage.len() as f64 / n as f64
        }
    }
}

/// `|(N_v ∪ {v}) \ covered|`.
pub fn marginal_gain(g: &Graph, v: usize, covered: &[bool]) -> usize {
    usize::from(!covered[v]) + g.neighbors(v).iter().filter(|&&u| !covered[u]).count()
}

fn admit(g: &Graph, v: usize, covered: &mut [bool]) {
    covered[v] = true;
    for &u in g.neighbors(v) {
        covered[u] = true;
    }
}

/// Union of closed neighbourhoods of `defense`, ascending.
pub fn coverage(g: &Graph, defense: &[usize]) -> Vec<usize> {
    let mut covered = vec![false; g.n()];
    for &v in defense {
        admit(g, v, &mut covered);
    }
    (0..g.n()).filter(|&u| covered[u]).collect()
}

pub fn coverage_fraction(g: &Graph, defense: &[usize]) -> f64 {
    if g.n() == 0 {
        return 0.0;
    }
    coverage(g, defense).len() as f64 / g.n() as f64
}

/// Greedy coverage over the `k0` best hybrid-score candidates, visited in
/// descending score order (ties by lower id); a candidate is admitted only
/// when it covers at least one new node.
pub fn place_defense_scale_free(g: &Graph, budget: usize, k0: usize, k: usize, alpha0: f64) -> DefensePlacement {
    assert!(budget <= g.n(), "budget exceeds node count");
    let scores = hybrid_scores(g, k, alpha0);
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k0.max(budget).min(g.n()));

    let mut covered = vec![false; g.n()];
    let mut defense = Vec::with_capacity(budget);
    for v in order {
        if defense.len() == budget {
            break;
        }
        if marginal_gain(g, v, &covered) > 0 {
            admit(g, v, &mut covered);
            defense.push(v);
        }
    }
    finish(g, defense, covered, scores, budget)
}

/// Localized greedy coverage. Each step admits the node with the largest
/// marginal gain, preferring strict local maxima (gain above every
/// non-defense neighbour's gain) and then the lowest id.
pub fn place_defense_random_regular(g: &Graph, budget: usize) -> DefensePlacement {
    assert!(budget <= g.n(), "budget exceeds node count");
    let mut covered = vec![false; g.n()];
    let mut in_defense = vec![false; g.n()];
    let mut defense = Vec::with_capacity(budget);
    let scores: Vec<f64> = (0..g.n()).map(|v| marginal_gain(g, v, &covered) as f64).collect();
    while defense.len() < budget {
        let gain: Vec<usize> =
            (0..g.n()).map(|v| if in_defense[v] { 0 } else { marginal_gain(g, v, &covered) }).collect();
        let best = gain.iter().copied().max().unwrap_or(0);
        if best == 0 {
            break;
        }
        let is_local_max = |v: usize| g.neighbors(v).iter().all(|&u| gain[v] > gain[u]);
        let pick = (0..g.n())
            .filter(|&v| !in_defense[v] && gain[v] == best)
            .min_by_key(|&v| (!is_local_max(v), v))
            .expect("best gain is attained");
        admit(g, pick, &mut covered);
        in_defense[pick] = true;
        defense.push(pick);
    }
    finish(g, defense, covered, scores, budget)
}

fn finish(g: &Graph, defense: Vec<usize>, covered: Vec<bool>, scores: Vec<f64>, budget: usize) -> DefensePlacement {
    DefensePlacement {
        under_budget: defense.len() < budget,
        defense_set: defense,
        coverage: (0..g.n()).filter(|&u| covered[u]).collect(),
        scores,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NonEclipseCheck {
    pub node: usize,
    pub malicious_neighbors: usize,
    /// `ceil(|N_i| / 2)`; the check passes when the count is strictly below.
    pub limit: usize,
    pub ok: bool,
}

/// Non-eclipse report for every non-malicious node.
pub fn validate_non_eclipse(g: &Graph, malicious: &[usize]) -> Vec<NonEclipseCheck> {
    let mut is_mal = vec![false; g.n()];
    for &m in malicious {
        is_mal[m] = true;
    }
    (0..g.n())
        .filter(|&v| !is_mal[v])
        .map(|v| {
            let count = g.neighbors(v).iter().filter(|&&u| is_mal[u]).count();
            let limit = g.degree(v).div_ceil(2);
            NonEclipseCheck { node: v, malicious_neighbors: count, limit, ok: count < limit }
        })
        .collect()
}
