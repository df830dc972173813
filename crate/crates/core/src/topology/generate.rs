use rand::Rng as _;

use super::{Graph, GraphKind};
use crate::seed;
use crate::{Error, Result};

pub const MAX_CONNECT_ATTEMPTS: u64 = 100;

/// Barabási–Albert preferential attachment grown from a single seed edge
/// `(0, 1)`. Node `v >= 2` attaches to `min(m_attach, v)` distinct existing
/// nodes drawn with probability proportional to their current degree.
pub fn gen_scale_free(n: usize, m_attach: usize, seed: u64) -> Result<Graph> {
    if m_attach < 1 || n <= m_attach {
        return Err(Error::Parameter(format!("scale-free graph needs n > m_attach >= 1 (n={n}, m_attach={m_attach})")));
    }
    let mut rng = seed::rng(seed, &[seed::tag::GRAPH]);
    let mut degree = vec![0usize; n];
    let mut edges = vec![(0, 1)];
    degree[0] = 1;
    degree[1] = 1;
    for v in 2..n {
        let want = m_attach.min(v);
        let mut chosen: Vec<usize> = Vec::with_capacity(want);
        while chosen.len() < want {
            let total: usize = (0..v).filter(|u| !chosen.contains(u)).map(|u| degree[u]).sum();
            let mut ticket = rng.random_range(0..total);
            let pick = (0..v)
                .filter(|u| !chosen.contains(u))
                .find(|&u| {
                    if ticket < degree[u] {
                        true
                    } else {
                        ticket -= degree[u];
                        false
                    }
                })
                .expect("ticket within total degree");
            chosen.push(pick);
        }
        for u in chosen {
            edges.push((u, v));
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    Graph::from_edges(n, &edges, GraphKind::ScaleFree)
}

/// Uniform-ish random `d`-regular graph by incremental stub pairing,
/// regenerated until simple and connected.
pub fn gen_random_regular(n: usize, d: usize, seed: u64) -> Result<Graph> {
    if d >= n || !(n * d).is_multiple_of(2) || d == 0 {
        return Err(Error::Parameter(format!("random-regular graph needs 0 < d < n and n*d even (n={n}, d={d})")));
    }
    for attempt in 0..MAX_CONNECT_ATTEMPTS {
        let mut rng = seed::rng(seed, &[seed::tag::GRAPH, attempt]);
        if let Some(edges) = pair_stubs(n, d, &mut rng) {
            let g = Graph::from_edges(n, &edges, GraphKind::RandomRegular)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
    }
    Err(Error::Generation(format!(
        "no connected simple {d}-regular graph on {n} nodes after {MAX_CONNECT_ATTEMPTS} attempts"
    )))
}

fn pair_stubs(n: usize, d: usize, rng: &mut seed::Rng) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::with_capacity(n * d / 2);
    while !stubs.is_empty() {
        let mut placed = false;
        for _ in 0..(4 * stubs.len()) {
            let i = rng.random_range(0..stubs.len());
            let j = rng.random_range(0..stubs.len());
            let (a, b) = (stubs[i], stubs[j]);
            if i == j || a == b || adj[a][b] {
                continue;
            }
            adj[a][b] = true;
            adj[b][a] = true;
            edges.push((a.min(b), a.max(b)));
            let (hi, lo) = (i.max(j), i.min(j));
            stubs.swap_remove(hi);
            stubs.swap_remove(lo);
            placed = true;
            break;
        }
        if !placed {
            return None;
        }
    }
    Some(edges)
}

/// 4-neighbourhood lattice, row-major node ids.
pub fn gen_grid(rows: usize, cols: usize) -> Result<Graph> {
    if rows * cols < 2 {
        return Err(Error::Parameter(format!("grid needs at least 2 nodes (got {rows}x{cols})")));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Graph::from_edges(rows * cols, &edges, GraphKind::Grid)
}
