use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::MabConfig;
use crate::attack::AttackConfig;
use crate::audit::AuditConfig;
use crate::nn::{MlpSpec, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    ScaleFree,
    RandomRegular,
    Grid,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphSource,
    pub n: usize,
    /// Edges added per new node in the scale-free generator.
    pub m_attach: usize,
    /// Degree of the random-regular generator.
    pub degree: usize,
    pub rows: usize,
    pub cols: usize,
    /// Edge-list file when `kind = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { kind: GraphSource::ScaleFree, n: 20, m_attach: 2, degree: 5, rows: 4, cols: 5, path: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Hybrid-centrality coverage on scale-free graphs, localized greedy
    /// coverage otherwise.
    TopologyAware,
    /// Uniform draw from benign nodes that satisfy the non-eclipse rule.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleConfig {
    pub malicious_ratio: f64,
    pub defense_ratio: f64,
    pub placement: Placement,
    /// Ego-network radius for the hybrid score.
    pub hops: usize,
    pub alpha0: f64,
    /// Candidate pool size for scale-free placement.
    pub k0: usize,
}

impl Default for RoleConfig {
    fn default() -> Self {
        Self { malicious_ratio: 0.3, defense_ratio: 0.2, placement: Placement::TopologyAware, hops: 2, alpha0: 0.5, k0: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 32] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Blobs,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub noise: f64,
    /// Dirichlet concentration of the label skew across nodes.
    pub beta: f64,
    pub min_per_node: usize,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Blobs,
            classes: 5,
            dim: 32,
            train_per_class: 200,
            test_per_class: 100,
            separation: 3.0,
            noise: 1.0,
            beta: 0.5,
            min_per_node: 10,
            train_csv: None,
            test_csv: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fedavg,
    Krum,
    MultiKrum,
    TrimmedMean,
    CosL2,
    FlameLite,
    Mab,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Fedavg => "FedAvg",
            PolicyKind::Krum => "Krum",
            PolicyKind::MultiKrum => "Multi-Krum",
            PolicyKind::TrimmedMean => "TrimmedMean",
            PolicyKind::CosL2 => "CosL2",
            PolicyKind::FlameLite => "FLAME-lite",
            PolicyKind::Mab => "MAB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub trim: f64,
    pub krum_f: usize,
    pub multi_krum_m: usize,
    pub cos_clip: f64,
    pub flame_sigma: f64,
    pub mab: MabConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Mab,
            trim: 0.2,
            krum_f: 1,
            multi_krum_m: 3,
            cos_clip: 2.0,
            flame_sigma: 0.0,
            mab: MabConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    pub lambda: f64,
    pub injection: f64,
    /// Round at which the bound profile is evaluated; defaults to `rounds`.
    pub t: Option<usize>,
    /// Smoothness constant `L` in the `1 + eta L` error factor.
    pub lipschitz: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self { lambda: crate::diffusion::DEFAULT_DECAY, injection: crate::diffusion::DEFAULT_INJECTION, t: None, lipschitz: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub rounds: usize,
    pub graph: GraphConfig,
    pub roles: RoleConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub policy: PolicyConfig,
    pub attack: AttackConfig,
    pub audit: AuditConfig,
    pub diffusion: DiffusionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 3,
            rounds: 15,
            graph: GraphConfig::default(),
            roles: RoleConfig::default(),
            model: ModelConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            policy: PolicyConfig::default(),
            attack: AttackConfig::default(),
            audit: AuditConfig::default(),
            diffusion: DiffusionConfig::default(),
        }
    }
}

/// Annotated example of every configuration key with its default value.
pub const SCHEMA: &str = r#"# Experiment configuration (TOML). Every key is optional.
seed = 1                    # global seed; every random stream derives from it
trials = 3                  # seeds used by benchmark/correlate: seed, seed+1, ...
rounds = 15                 # communication rounds T

[graph]
kind = "scale_free"         # scale_free | random_regular | grid | file
n = 20                      # nodes (scale_free, random_regular)
m_attach = 2                # scale-free attachment count
degree = 5                  # random-regular degree
rows = 4                    # grid rows
cols = 5                    # grid columns
# path = "graph.txt"        # edge list for kind = "file": `n <count>` then `i j` lines

[roles]
malicious_ratio = 0.3       # q_m; q_m * n must be an integer
defense_ratio = 0.2         # defense budget as a fraction of n (rounded)
placement = "topology_aware" # topology_aware | random
hops = 2                    # ego-network radius k
alpha0 = 0.5                # hybrid-score weight on ego betweenness
k0 = 8                      # scale-free candidate pool

[model]
hidden = [64, 32]           # hidden widths; input = data.dim, output = data.classes

[data]
source = "blobs"            # blobs | csv
classes = 5
dim = 32
train_per_class = 200
test_per_class = 100
separation = 3.0            # class mean = separation * e_class
noise = 1.0
beta = 0.5                  # Dirichlet label skew across nodes
min_per_node = 10
# train_csv = "train.csv"   # header row, last column = integer label
# test_csv = "test.csv"

[train]
epochs = 2
lr = 0.05
batch = 16
weight_decay = 0.1          # L2 penalty added to every gradient

[policy]
kind = "mab"                # fedavg | krum | multi_krum | trimmed_mean | cos_l2 | flame_lite | mab
trim = 0.2                  # trimmed_mean beta
krum_f = 1
multi_krum_m = 3
cos_clip = 2.0              # cos_l2 clip, multiple of the median norm
flame_sigma = 0.0           # flame_lite noise std

[policy.mab]
r_a = 0.9                   # audit subsampling ratio
r_s = 0.8                   # aggregation subsampling ratio
tau_agg = 0.4               # trust threshold
c = 0.5                     # UCB exploration constant
alpha = 0.3                 # EWMA rate
gamma = 0.95                # audit-count discount
q0 = 0.5                    # initial trust
w_self = 0.5                # stratified weights for non-defense nodes
w_defense = 0.45
w_other = 0.05

[attack]
# y_source = 1              # poison only this class (default: any class)
target = 0
poison_fraction = 0.5
mode = "convex_fusion"      # convex_fusion | subspace_projection
c_alpha = 0.6
gamma0 = 2.0
gamma1 = 15.0
b_f = 1.0
scale_rule = "exact"        # exact: tau = b_f |ref| | capped: min(1, 6 b_f |ref| / |d|)
epsilon = 0.01              # residual neighbor weight of a malicious node
trigger_size = 4            # trigger on the last coordinates
intensity = 4.0
epochs = 2
reference_epochs = 1

[audit]
rs_samples = 16
sigma_rs = 0.5
kappa_rs = 5.0
ak_batch = 16

[diffusion]
lambda = 0.3
injection = 1.0
# t = 15                    # bound evaluation round (default: rounds)
lipschitz = 1.0
"#;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.graph.path, &mut cfg.data.train_csv, &mut cfg.data.test_csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn model_spec(&self) -> Result<MlpSpec> {
        let mut dims = vec![self.data.dim];
        dims.extend(&self.model.hidden);
        dims.push(self.data.classes);
        MlpSpec::new(&dims)
    }

    /// Node count implied by the graph section (file graphs report 0 until
    /// loaded).
    pub fn node_count(&self) -> usize {
        match self.graph.kind {
            GraphSource::Grid => self.graph.rows * self.graph.cols,
            GraphSource::File => 0,
            _ => self.graph.n,
        }
    }

    pub fn malicious_count(&self, n: usize) -> usize {
        (self.roles.malicious_ratio * n as f64).round() as usize
    }

    pub fn defense_budget(&self, n: usize) -> usize {
        (self.roles.defense_ratio * n as f64).round() as usize
    }

    /// Every violated constraint; empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let g = &self.graph;
        match g.kind {
            GraphSource::ScaleFree if !(g.n > g.m_attach && g.m_attach >= 1) => {
                v.push(format!("graph: scale_free needs n > m_attach >= 1 (n={}, m_attach={})", g.n, g.m_attach))
            }
            GraphSource::RandomRegular if g.degree == 0 || g.degree >= g.n || (g.n * g.degree) % 2 == 1 => {
                v.push(format!("graph: random_regular needs 0 < degree < n and n*degree even (n={}, degree={})", g.n, g.degree))
            }
            GraphSource::Grid if g.rows * g.cols < 2 => v.push("graph: grid needs at least two cells".into()),
            GraphSource::File if g.path.is_none() => v.push("graph: kind = \"file\" requires graph.path".into()),
            _ => {}
        }
        let r = &self.roles;
        if !(0.0..1.0).contains(&r.malicious_ratio) {
            v.push(format!("roles.malicious_ratio {} not in [0,1)", r.malicious_ratio));
        }
        if !(0.0..=1.0).contains(&r.defense_ratio) {
            v.push(format!("roles.defense_ratio {} not in [0,1]", r.defense_ratio));
        }
        let n = self.node_count();
        if n > 0 {
            let q = r.malicious_ratio * n as f64;
            if (q - q.round()).abs() > 1e-9 {
                v.push(format!("roles.malicious_ratio * n = {q} is not an integer"));
            }
            if self.malicious_count(n) + self.defense_budget(n) > n {
                v.push("roles: malicious and defense nodes exceed the node count".into());
            }
        }
        if !(0.0..=1.0).contains(&r.alpha0) {
            v.push(format!("roles.alpha0 {} not in [0,1]", r.alpha0));
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            v.push("model.hidden needs at least one nonzero width".into());
        }
        let d = &self.data;
        if d.classes < 2 {
            v.push("data.classes must be at least 2".into());
        }
        match d.source {
            DataSource::Blobs => {
                if d.classes > d.dim {
                    v.push(format!("data: blobs need classes <= dim ({} > {})", d.classes, d.dim));
                }
                if d.train_per_class == 0 || d.test_per_class == 0 {
                    v.push("data: train_per_class and test_per_class must be positive".into());
                }
                if !(d.noise >= 0.0) || !d.separation.is_finite() {
                    v.push("data: noise must be nonnegative and separation finite".into());
                }
            }
            DataSource::Csv => {
                if d.train_csv.is_none() || d.test_csv.is_none() {
                    v.push("data: source = \"csv\" requires train_csv and test_csv".into());
                }
            }
        }
        if !(d.beta > 0.0) {
            v.push(format!("data.beta {} must be positive", d.beta));
        }
        if !(self.train.lr > 0.0) || self.train.batch == 0 {
            v.push("train: lr must be positive and batch at least 1".into());
        }
        let p = &self.policy;
        if !(0.0..0.5).contains(&p.trim) {
            v.push(format!("policy.trim {} not in [0,0.5)", p.trim));
        }
        if p.multi_krum_m == 0 {
            v.push("policy.multi_krum_m must be at least 1".into());
        }
        if !(p.cos_clip > 0.0) {
            v.push("policy.cos_clip must be positive".into());
        }
        if !(p.flame_sigma >= 0.0) {
            v.push("policy.flame_sigma must be nonnegative".into());
        }
        v.extend(p.mab.violations());
        if d.dim >= 2 {
            v.extend(self.attack.violations(d.classes, d.dim));
        }
        v.extend(self.audit.violations());
        let f = &self.diffusion;
        if !(f.lambda > 0.0 && f.lambda < 1.0) {
            v.push(format!("diffusion.lambda {} not in (0,1)", f.lambda));
        }
        if !(f.injection >= 0.0) || !(f.lipschitz >= 0.0) {
            v.push("diffusion: injection and lipschitz must be nonnegative".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
