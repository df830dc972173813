use std::io::Read;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Row-major `N x d_in` inputs with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, classes: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || inputs.len() != dim * labels.len() {
            return Err(Error::Dimension { expected: dim * labels.len(), actual: inputs.len() });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature value".into()));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Input(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self { dim, classes, inputs, labels })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        Self { dim, classes, inputs: Vec::new(), labels: Vec::new() }
    }

    /// Reads CSV with a header row; the last column is the integer label.
    /// `classes` of `None` means one more than the largest label seen.
    pub fn from_csv<R: Read>(reader: R, classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let width = rdr.headers()?.len();
        if width < 2 {
            return Err(Error::Parse("need at least one feature column and a label column".into()));
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (col, field) in record.iter().enumerate() {
                if col + 1 == width {
                    let y = field
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("row {}: bad label {field:?}", row + 1)))?;
                    labels.push(y);
                } else {
                    let v = field
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {}: bad value {field:?}", row + 1)))?;
                    inputs.push(v);
                }
            }
        }
        let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Self::new(width - 1, classes, inputs, labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn set_label(&mut self, i: usize, y: usize) {
        assert!(y < self.classes, "label out of range");
        self.labels[i] = y;
    }

    pub fn push(&mut self, x: &[f64], y: usize) {
        assert_eq!(x.len(), self.dim);
        assert!(y < self.classes, "label out of range");
        self.inputs.extend_from_slice(x);
        self.labels.push(y);
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::empty(self.dim, self.classes);
        for &i in indices {
            out.push(self.input(i), self.label(i));
        }
        out
    }

    pub fn indices_of_class(&self, y: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == y).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobConfig {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Distance of each class mean from the origin along its own axis.
    pub separation: f64,
    pub noise: f64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self { classes: 5, dim: 32, per_class: 200, separation: 3.0, noise: 1.0 }
    }
}

/// `per_class` samples around `separation * e_k` for each class `k`, with
/// isotropic Gaussian noise. Samples are interleaved by class.
pub fn gaussian_blobs(cfg: &BlobConfig, seed: u64) -> Dataset {
    assert!(cfg.classes >= 2 && cfg.classes <= cfg.dim, "need 2 <= classes <= dim");
    let mut rng = seed::rng(seed, &[seed::tag::DATA]);
    let normal = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
    let mut data = Dataset::empty(cfg.dim, cfg.classes);
    let mut x = vec![0.0; cfg.dim];
    for _ in 0..cfg.per_class {
        for y in 0..cfg.classes {
            for (j, v) in x.iter_mut().enumerate() {
                let mean = if j == y { cfg.separation } else { 0.0 };
                *v = mean + normal.sample(&mut rng);
            }
            data.push(&x, y);
        }
    }
    data
}

const PARTITION_ATTEMPTS: u64 = 100;

/// Label-skewed split: each class is divided among `nodes` in proportions
/// drawn from `Dirichlet(beta)`. Draws are repeated until every node holds at
/// least `min_size` samples.
pub fn dirichlet_partition(
    data: &Dataset,
    nodes: usize,
    beta: f64,
    min_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if nodes == 0 || !(beta > 0.0) {
        return Err(Error::Parameter(format!("nodes={nodes}, beta={beta}")));
    }
    if min_size * nodes > data.len() {
        return Err(Error::Parameter(format!(
            "{} samples cannot give {nodes} nodes {min_size} each",
            data.len()
        )));
    }
    let gamma = Gamma::new(beta, 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
    for attempt in 0..PARTITION_ATTEMPTS {
        let mut rng = seed::rng(seed, &[seed::tag::DATA, attempt]);
        let mut parts = vec![Vec::new(); nodes];
        for y in 0..data.classes() {
            let mut idx = data.indices_of_class(y);
            idx.shuffle(&mut rng);
            let weights: Vec<f64> = (0..nodes).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = weights.iter().sum();
            let mut start = 0;
            let mut acc = 0.0;
            for (node, w) in weights.iter().enumerate() {
                acc += w;
                let end = if node + 1 == nodes {
                    idx.len()
                } else {
                    ((acc / total) * idx.len() as f64).floor() as usize
                };
                let end = end.clamp(start, idx.len());
                parts[node].extend_from_slice(&idx[start..end]);
                start = end;
            }
        }
        if parts.iter().all(|p| p.len() >= min_size) {
            for p in &mut parts {
                p.sort_unstable();
            }
            return Ok(parts);
        }
    }
    Err(Error::Generation(format!(
        "no Dirichlet({beta}) split gave every node {min_size} samples after {PARTITION_ATTEMPTS} attempts"
    )))
}
