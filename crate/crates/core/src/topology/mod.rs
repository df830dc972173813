//! Communication graphs, mixing matrices, local centralities and defense
//! placement.

mod centrality;
mod generate;
mod placement;

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use centrality::{ego_betweenness, hybrid_score, hybrid_scores, local_degree_centrality};
pub use generate::{gen_grid, gen_random_regular, gen_scale_free, MAX_CONNECT_ATTEMPTS};
pub use placement::{
    coverage, coverage_fraction, marginal_gain, place_defense_random_regular, place_defense_scale_free,
    validate_non_eclipse, DefensePlacement, NonEclipseCheck,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    ScaleFree,
    RandomRegular,
    Grid,
    Custom,
}

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    kind: GraphKind,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops and
    /// out-of-range endpoints. Duplicate edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], kind: GraphKind) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Parameter(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::Parameter(format!("self-loop at node {a}")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adj, kind })
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    /// Hop distances from `source`; `None` marks unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &w in &self.adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n() == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Nodes within `k` hops of `v`, ascending, including `v`.
    pub fn k_hop_nodes(&self, v: usize, k: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n()];
        let mut queue = VecDeque::new();
        dist[v] = 0;
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            if dist[u] == k {
                continue;
            }
            for &w in &self.adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        (0..self.n()).filter(|&u| dist[u] != usize::MAX).collect()
    }

    /// Subgraph induced by `nodes` (relabelled to `0..nodes.len()` in the
    /// given order).
    pub fn induced(&self, nodes: &[usize]) -> Graph {
        let mut index = vec![usize::MAX; self.n()];
        for (i, &u) in nodes.iter().enumerate() {
            index[u] = i;
        }
        let adj = nodes
            .iter()
            .map(|&u| {
                let mut list: Vec<usize> =
                    self.adj[u].iter().filter(|&&w| index[w] != usize::MAX).map(|&w| index[w]).collect();
                list.sort_unstable();
                list
            })
            .collect();
        Graph { adj, kind: GraphKind::Custom }
    }

    /// Serializes to the edge-list text format: `n <count>` followed by one
    /// `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n());
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }
}

impl FromStr for Graph {
    type Err = Error;

    /// Parses the edge-list format. Blank lines and `#` comments are skipped.
    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let mut parts = header.split_whitespace();
        let n = match (parts.next(), parts.next(), parts.next()) {
            (Some("n"), Some(count), None) => {
                count.parse::<usize>().map_err(|e| Error::Parse(format!("bad node count: {e}")))?
            }
            _ => return Err(Error::Parse(format!("expected `n <count>` header, got `{header}`"))),
        };
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected `i j`", lineno + 1)));
            }
            let parse = |f: &str| {
                f.parse::<usize>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            edges.push((parse(fields[0])?, parse(fields[1])?));
        }
        Graph::from_edges(n, &edges, GraphKind::Custom)
    }
}

/// Static symmetric mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(pub DMatrix<f64>);

impl MixingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

/// Metropolis–Hastings weights: `1 / (1 + max(d_i, d_j))` on edges and the
/// remaining mass on the diagonal.
pub fn build_mixing_matrix(g: &Graph) -> MixingMatrix {
    let n = g.n();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for &j in g.neighbors(i) {
            let wij = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
            w[(i, j)] = wij;
            off += wij;
        }
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix(w)
}
