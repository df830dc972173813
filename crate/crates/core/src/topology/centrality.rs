use std::collections::VecDeque;

use super::Graph;

/// Shortest-path counts and distances from `s` (BFS, unit weights).
fn path_counts(g: &Graph, s: usize) -> (Vec<usize>, Vec<f64>) {
    let n = g.n();
    let mut dist = vec![usize::MAX; n];
    let mut sigma = vec![0.0; n];
    let mut queue = VecDeque::new();
    dist[s] = 0;
    sigma[s] = 1.0;
    queue.push_back(s);
    while let Some(u) = queue.pop_front() {
        for &w in g.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[u] + 1 {
                sigma[w] += sigma[u];
            }
        }
    }
    (dist, sigma)
}

/// Betweenness of `v` restricted to its `k`-hop induced ego graph, summed
/// over ordered pairs `(s, t)` of other ego-graph nodes.
pub fn ego_betweenness(g: &Graph, v: usize, k: usize) -> f64 {
    assert!(k >= 1, "ego radius must be at least 1");
    let nodes = g.k_hop_nodes(v, k);
    let ego = g.induced(&nodes);
    let center = nodes.binary_search(&v).expect("center in its own ego graph");
    let (dist_v, sigma_v) = path_counts(&ego, center);
    let mut total = 0.0;
    for s in (0..ego.n()).filter(|&s| s != center) {
        let (dist_s, sigma_s) = path_counts(&ego, s);
        for t in (0..ego.n()).filter(|&t| t != center && t != s) {
            if dist_s[t] == usize::MAX || dist_s[center] == usize::MAX || dist_v[t] == usize::MAX {
                continue;
            }
            if dist_s[center] + dist_v[t] == dist_s[t] {
                total += sigma_s[center] * sigma_v[t] / sigma_s[t];
            }
        }
    }
    total
}

/// Degree of `v` inside its `k`-hop ego graph over `|ego| - 1`.
pub fn local_degree_centrality(g: &Graph, v: usize, k: usize) -> f64 {
    let size = g.k_hop_nodes(v, k).len();
    if size <= 1 {
        0.0
    } else {
        g.degree(v) as f64 / (size - 1) as f64
    }
}

/// Hybrid placement score for every node: `alpha0` times the min-max
/// normalized ego-betweenness plus `1 - alpha0` times the local degree
/// centrality.
pub fn hybrid_scores(g: &Graph, k: usize, alpha0: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&alpha0), "alpha0 must lie in [0, 1]");
    let ego: Vec<f64> = (0..g.n()).map(|v| ego_betweenness(g, v, k)).collect();
    let lo = ego.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ego.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    (0..g.n())
        .map(|v| {
            let ego_norm = if span > 0.0 { (ego[v] - lo) / span } else { 0.0 };
            alpha0 * ego_norm + (1.0 - alpha0) * local_degree_centrality(g, v, k)
        })
        .collect()
}

pub fn hybrid_score(g: &Graph, v: usize, k: usize, alpha0: f64) -> f64 {
    hybrid_scores(g, k, alpha0)[v]
}
