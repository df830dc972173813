use std::ops::Range;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, ParamVector};
use crate::seed;
use crate::{Error, Result};

/// Named layer groups: the first layer, the final (head) layer and the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Entry,
    Body,
    Head,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Entry, Group::Body, Group::Head];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerInfo {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs` weight block.
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerInfo {
    pub fn end(&self) -> usize {
        self.bias_offset + self.outputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    dims: Vec<usize>,
    layers: Vec<LayerInfo>,
}

impl MlpSpec {
    /// `dims = [d_in, h_1, ..., h_{L-1}, K]` with at least one hidden layer.
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::Parameter("an MLP needs input, at least one hidden layer and output".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Parameter(format!("zero-width layer in {dims:?}")));
        }
        if *dims.last().unwrap() < 2 {
            return Err(Error::Parameter("at least two classes required".into()));
        }
        let mut offset = 0;
        let layers = dims
            .windows(2)
            .map(|w| {
                let info = LayerInfo {
                    inputs: w[0],
                    outputs: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = info.end();
                info
            })
            .collect();
        Ok(Self { dims: dims.to_vec(), layers })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Width of the latent representation fed to the head.
    pub fn latent_dim(&self) -> usize {
        self.dims[self.dims.len() - 2]
    }

    pub fn layers(&self) -> &[LayerInfo] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.last().unwrap().end()
    }

    pub fn group_of_layer(&self, layer: usize) -> Group {
        if layer == 0 {
            Group::Entry
        } else if layer + 1 == self.layers.len() {
            Group::Head
        } else {
            Group::Body
        }
    }

    /// Coordinates owned by `group`; groups are contiguous and partition the
    /// parameter vector. `Body` is empty for single-hidden-layer networks.
    pub fn group_range(&self, group: Group) -> Range<usize> {
        let last = self.layers.len() - 1;
        match group {
            Group::Entry => 0..self.layers[0].end(),
            Group::Body => self.layers[0].end()..self.layers[last].weight_offset,
            Group::Head => self.layers[last].weight_offset..self.layers[last].end(),
        }
    }

    pub fn group<'a>(&self, params: &'a ParamVector, group: Group) -> &'a [f64] {
        &params.as_slice()[self.group_range(group)]
    }

    pub fn group_mut<'a>(&self, params: &'a mut ParamVector, group: Group) -> &'a mut [f64] {
        let range = self.group_range(group);
        &mut params.as_mut_slice()[range]
    }

    pub fn group_vector(&self, params: &ParamVector, group: Group) -> ParamVector {
        ParamVector(self.group(params, group).to_vec())
    }

    pub fn check(&self, params: &ParamVector) -> Result<()> {
        if params.len() == self.param_count() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.param_count(), actual: params.len() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// L2 penalty coefficient; adds `weight_decay * theta` to every gradient.
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 2, lr: 0.05, batch: 16, weight_decay: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input to the last hidden layer.
    pub r: Vec<f64>,
    /// Latent features (output of the last hidden layer).
    pub z: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// He-normal weights (`N(0, 2 / fan_in)`), zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> ParamVector {
    let mut rng = seed::rng(seed, &[seed::tag::INIT]);
    let mut values = vec![0.0; spec.param_count()];
    for layer in spec.layers() {
        let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("positive std");
        for w in &mut values[layer.weight_offset..layer.bias_offset] {
            *w = normal.sample(&mut rng);
        }
    }
    ParamVector(values)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `-log softmax(logits)[label]`, computed stably.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

fn affine(params: &[f64], layer: &LayerInfo, input: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let w = &params[layer.weight_offset..layer.bias_offset];
    let b = &params[layer.bias_offset..layer.end()];
    for o in 0..layer.outputs {
        let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
        out.push(b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>());
    }
}

/// Activations of every layer: `acts[0]` is the input, `acts[L]` the logits.
fn forward_all(params: &[f64], spec: &MlpSpec, x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(spec.layers().len() + 1);
    acts.push(x.to_vec());
    let last = spec.layers().len() - 1;
    for (l, layer) in spec.layers().iter().enumerate() {
        let mut out = Vec::with_capacity(layer.outputs);
        affine(params, layer, &acts[l], &mut out);
        if l < last {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        acts.push(out);
    }
    acts
}

pub fn forward(params: &ParamVector, spec: &MlpSpec, x: &[f64]) -> Result<ForwardTrace> {
    spec.check(params)?;
    if x.len() != spec.input_dim() {
        return Err(Error::Dimension { expected: spec.input_dim(), actual: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite input".into()));
    }
    let mut acts = forward_all(params.as_slice(), spec, x);
    let logits = acts.pop().unwrap();
    let z = acts.pop().unwrap();
    let r = acts.pop().unwrap();
    let probs = softmax(&logits);
    Ok(ForwardTrace { r, z, logits, probs })
}

/// Applies only the head layer to latent features `z`.
pub fn head_logits(params: &ParamVector, spec: &MlpSpec, z: &[f64]) -> Vec<f64> {
    let head = spec.layers().last().unwrap();
    let mut out = Vec::with_capacity(head.outputs);
    affine(params.as_slice(), head, z, &mut out);
    out
}

pub fn predict(params: &ParamVector, spec: &MlpSpec, x: &[f64]) -> usize {
    argmax(forward_all(params.as_slice(), spec, x).last().unwrap())
}

/// Accumulates the cross-entropy gradient of one sample into `grad`;
/// returns the sample loss.
fn backprop_sample(params: &[f64], spec: &MlpSpec, x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let acts = forward_all(params, spec, x);
    let logits = acts.last().unwrap();
    let loss = cross_entropy(logits, label);
    let mut delta = softmax(logits);
    delta[label] -= 1.0;
    for (l, layer) in spec.layers().iter().enumerate().rev() {
        let input = &acts[l];
        for o in 0..layer.outputs {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = layer.weight_offset + o * layer.inputs;
            for (g, x) in grad[row..row + layer.inputs].iter_mut().zip(input) {
                *g += d * x;
            }
            grad[layer.bias_offset + o] += d;
        }
        if l == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.inputs];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &params[layer.weight_offset + o * layer.inputs..layer.weight_offset + (o + 1) * layer.inputs];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        // ReLU derivative on the previous layer's output.
        for (p, a) in prev.iter_mut().zip(input) {
            if *a <= 0.0 {
                *p = 0.0;
            }
        }
        delta = prev;
    }
    loss
}

/// Mean loss and gradient over the samples at `indices`.
pub fn gradient(params: &ParamVector, spec: &MlpSpec, data: &Dataset, indices: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; spec.param_count()];
    let mut loss = 0.0;
    for &i in indices {
        loss += backprop_sample(params.as_slice(), spec, data.input(i), data.label(i), &mut grad);
    }
    let scale = 1.0 / indices.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

/// Mean cross-entropy over the whole dataset.
pub fn loss(params: &ParamVector, spec: &MlpSpec, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = (0..data.len())
        .map(|i| cross_entropy(forward_all(params.as_slice(), spec, data.input(i)).last().unwrap(), data.label(i)))
        .sum();
    Ok(total / data.len() as f64)
}

/// Mini-batch SGD on cross-entropy. The shuffle stream is fully determined by
/// `seed`.
pub fn train_local(
    params: &ParamVector,
    spec: &MlpSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ParamVector> {
    spec.check(params)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.lr > 0.0) || cfg.batch == 0 || !(cfg.weight_decay >= 0.0) {
        return Err(Error::Parameter(format!("invalid training config {cfg:?}")));
    }
    let mut rng = seed::rng(seed, &[seed::tag::TRAIN]);
    let mut current = params.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            let (_, grad) = gradient(&current, spec, data, batch);
            for (p, g) in current.as_mut_slice().iter_mut().zip(&grad) {
                *p -= cfg.lr * (g + cfg.weight_decay * *p);
            }
        }
    }
    Ok(current)
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn evaluate(params: &ParamVector, spec: &MlpSpec, data: &Dataset) -> Result<f64> {
    spec.check(params)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = (0..data.len()).filter(|&i| predict(params, spec, data.input(i)) == data.label(i)).count();
    Ok(correct as f64 / data.len() as f64)
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_COORDS: usize = 200;

/// Maximum relative error between the backprop gradient and central finite
/// differences on up to 200 random coordinates.
pub fn grad_check(params: &ParamVector, spec: &MlpSpec, data: &Dataset, seed: u64) -> f64 {
    let all: Vec<usize> = (0..data.len()).collect();
    grad_check_with(params, spec, data, seed, |p| gradient(p, spec, data, &all).1)
}

/// [`grad_check`] against an arbitrary analytic gradient.
pub fn grad_check_with(
    params: &ParamVector,
    spec: &MlpSpec,
    data: &Dataset,
    seed: u64,
    analytic: impl Fn(&ParamVector) -> Vec<f64>,
) -> f64 {
    let grad = analytic(params);
    let mut rng = seed::rng(seed, &[]);
    let mut coords: Vec<usize> = (0..params.len()).collect();
    coords.shuffle(&mut rng);
    coords.truncate(GRAD_CHECK_COORDS);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for c in coords {
        let original = probe.as_slice()[c];
        probe.as_mut_slice()[c] = original + GRAD_CHECK_STEP;
        let plus = loss(&probe, spec, data).unwrap_or(f64::NAN);
        probe.as_mut_slice()[c] = original - GRAD_CHECK_STEP;
        let minus = loss(&probe, spec, data).unwrap_or(f64::NAN);
        probe.as_mut_slice()[c] = original;
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let rel = (grad[c] - numeric).abs() / grad[c].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
