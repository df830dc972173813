use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, GraphSource, Placement, PolicyKind};
use super::metrics::{kendall_tau, mean_std};
use super::run::{run_scenario, Role, RunSummary};
use super::scenario::build_scenario;
use crate::diffusion::DiffusionSystem;
use crate::topology::build_mixing_matrix;
use crate::{Error, Result};

/// Scaling factors swept by default in the correlation study.
pub const DEFAULT_SWEEP: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 3.0];

fn trial_seed(cfg: &ExperimentConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRun {
    pub b_f: f64,
    pub trial: usize,
    pub seed: u64,
    pub tau: f64,
    pub degenerate: bool,
    pub mean_asr: f64,
    pub mean_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationNode {
    pub b_f: f64,
    pub trial: usize,
    pub node: usize,
    pub distance: Option<usize>,
    pub bound: f64,
    pub asr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub runs: Vec<CorrelationRun>,
    pub nodes: Vec<CorrelationNode>,
    pub mean_tau: f64,
}

/// Undefended runs across a `b_f` sweep; each run correlates the benign
/// nodes' diffusion bound at round `t` with their final ASR.
pub fn correlation_experiment(cfg: &ExperimentConfig, sweep: &[f64], trials: usize) -> Result<CorrelationReport> {
    if sweep.is_empty() || trials == 0 {
        return Err(Error::Parameter("correlation needs a nonempty sweep and at least one trial".into()));
    }
    let mut base = cfg.clone();
    base.policy.kind = PolicyKind::Fedavg;
    base.validate()?;
    let jobs: Vec<(f64, usize)> = sweep.iter().flat_map(|&b| (0..trials).map(move |k| (b, k))).collect();
    let results: Vec<(CorrelationRun, Vec<CorrelationNode>)> = jobs
        .par_iter()
        .map(|&(b_f, trial)| {
            let mut run_cfg = base.clone();
            run_cfg.attack.b_f = b_f;
            run_cfg.seed = trial_seed(cfg, trial);
            run_cfg.validate()?;
            let sc = build_scenario(&run_cfg, run_cfg.seed)?;
            let result = run_scenario(&run_cfg, &sc)?;
            let system = DiffusionSystem::from_roles(
                &build_mixing_matrix(&sc.graph),
                &sc.roles.malicious,
                run_cfg.diffusion.lambda,
                run_cfg.diffusion.injection,
            )?;
            let t = run_cfg.diffusion.t.unwrap_or(run_cfg.rounds);
            let profile = system.bound_profile(t)?;
            let nearest: Vec<Option<usize>> = {
                let dists: Vec<Vec<Option<usize>>> = sc.roles.malicious.iter().map(|&s| sc.graph.bfs_distances(s)).collect();
                (0..sc.graph.n()).map(|i| dists.iter().filter_map(|d| d[i]).min()).collect()
            };
            let benign: Vec<usize> = (0..sc.graph.n()).filter(|&i| result.roles[i] != Role::Malicious).collect();
            if benign.len() < 2 {
                return Err(Error::Config(vec!["correlation needs at least two benign nodes".into()]));
            }
            let bounds: Vec<f64> = benign.iter().map(|&i| profile[i].unwrap_or(0.0)).collect();
            let asr: Vec<f64> = benign.iter().map(|&i| result.summary.node_asr[i]).collect();
            let tau = kendall_tau(&bounds, &asr)?;
            let nodes = benign
                .iter()
                .zip(bounds.iter().zip(&asr))
                .map(|(&node, (&bound, &a))| CorrelationNode { b_f, trial, node, distance: nearest[node], bound, asr: a })
                .collect();
            Ok((
                CorrelationRun {
                    b_f,
                    trial,
                    seed: run_cfg.seed,
                    tau: tau.tau,
                    degenerate: tau.degenerate,
                    mean_asr: result.summary.final_asr,
                    mean_acc: result.summary.final_acc,
                },
                nodes,
            ))
        })
        .collect::<Result<_>>()?;
    let (runs, nodes): (Vec<_>, Vec<Vec<_>>) = results.into_iter().unzip();
    let mean_tau = runs.iter().map(|r| r.tau).sum::<f64>() / runs.len() as f64;
    Ok(CorrelationReport { runs, nodes: nodes.concat(), mean_tau })
}

/// One benchmark row: an aggregation policy and, for the audited defense,
/// how defenders are placed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyVariant {
    pub label: String,
    pub kind: PolicyKind,
    pub placement: Placement,
}

impl PolicyVariant {
    pub fn new(kind: PolicyKind) -> Self {
        Self { label: kind.label().to_string(), kind, placement: Placement::TopologyAware }
    }

    pub fn mab(placement: Placement) -> Self {
        let label = match placement {
            Placement::TopologyAware => "MAB(topology-aware)",
            Placement::Random => "MAB(random placement)",
        };
        Self { label: label.to_string(), kind: PolicyKind::Mab, placement }
    }
}

pub fn default_policies() -> Vec<PolicyVariant> {
    let mut v: Vec<PolicyVariant> = [
        PolicyKind::Fedavg,
        PolicyKind::Krum,
        PolicyKind::MultiKrum,
        PolicyKind::TrimmedMean,
        PolicyKind::CosL2,
        PolicyKind::FlameLite,
    ]
    .into_iter()
    .map(PolicyVariant::new)
    .collect();
    v.push(PolicyVariant::mab(Placement::TopologyAware));
    v.push(PolicyVariant::mab(Placement::Random));
    v
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.1, 0.2, 0.3];
pub const DEFAULT_TOPOLOGIES: [GraphSource; 2] = [GraphSource::ScaleFree, GraphSource::RandomRegular];

pub fn topology_name(kind: GraphSource) -> &'static str {
    match kind {
        GraphSource::ScaleFree => "scale_free",
        GraphSource::RandomRegular => "random_regular",
        GraphSource::Grid => "grid",
        GraphSource::File => "file",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRun {
    pub policy: String,
    pub topology: String,
    pub ratio: f64,
    pub trial: usize,
    pub seed: u64,
    pub final_acc: f64,
    pub final_asr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkCell {
    pub policy: String,
    pub topology: String,
    pub ratio: f64,
    pub trials: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub asr_mean: f64,
    pub asr_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub runs: Vec<BenchmarkRun>,
    pub cells: Vec<BenchmarkCell>,
}

impl BenchmarkReport {
    pub fn cell(&self, policy: &str, topology: GraphSource, ratio: f64) -> Option<&BenchmarkCell> {
        self.cells
            .iter()
            .find(|c| c.policy == policy && c.topology == topology_name(topology) && (c.ratio - ratio).abs() < 1e-12)
    }

    /// Aligned text table with percentages, `mean (std)`.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24} {:<15} {:>5}  {:>16}  {:>16}\n", "policy", "topology", "q_m", "ACC % (std)", "ASR % (std)");
        for c in &self.cells {
            out.push_str(&format!(
                "{:<24} {:<15} {:>5.2}  {:>7.2} ({:>05.2})  {:>7.2} ({:>05.2})\n",
                c.policy,
                c.topology,
                c.ratio,
                100.0 * c.acc_mean,
                100.0 * c.acc_std,
                100.0 * c.asr_mean,
                100.0 * c.asr_std
            ));
        }
        out
    }
}

/// Final ACC/ASR for every (policy, topology, ratio, trial); trials share
/// graph, data and malicious set across policies.
pub fn benchmark(
    cfg: &ExperimentConfig,
    policies: &[PolicyVariant],
    topologies: &[GraphSource],
    ratios: &[f64],
    trials: usize,
) -> Result<BenchmarkReport> {
    if trials == 0 {
        return Err(Error::Parameter("benchmark needs at least one trial".into()));
    }
    let mut jobs = Vec::new();
    for &topology in topologies {
        for &ratio in ratios {
            for policy in policies {
                for trial in 0..trials {
                    let mut c = cfg.clone();
                    c.graph.kind = topology;
                    c.roles.malicious_ratio = ratio;
                    c.policy.kind = policy.kind;
                    c.roles.placement = policy.placement;
                    c.seed = trial_seed(cfg, trial);
                    c.validate()?;
                    jobs.push((policy.label.clone(), topology, ratio, trial, c));
                }
            }
        }
    }
    let runs: Vec<BenchmarkRun> = jobs
        .par_iter()
        .map(|(label, topology, ratio, trial, c)| {
            let summary: RunSummary = run_scenario(c, &build_scenario(c, c.seed)?)?.summary;
            Ok(BenchmarkRun {
                policy: label.clone(),
                topology: topology_name(*topology).to_string(),
                ratio: *ratio,
                trial: *trial,
                seed: c.seed,
                final_acc: summary.final_acc,
                final_asr: summary.final_asr,
            })
        })
        .collect::<Result<_>>()?;
    let mut cells: Vec<BenchmarkCell> = Vec::new();
    for chunk in runs.chunks(trials) {
        let acc: Vec<f64> = chunk.iter().map(|r| r.final_acc).collect();
        let asr: Vec<f64> = chunk.iter().map(|r| r.final_asr).collect();
        let (acc_mean, acc_std) = mean_std(&acc);
        let (asr_mean, asr_std) = mean_std(&asr);
        let first = &chunk[0];
        cells.push(BenchmarkCell {
            policy: first.policy.clone(),
            topology: first.topology.clone(),
            ratio: first.ratio,
            trials: chunk.len(),
            acc_mean,
            acc_std,
            asr_mean,
            asr_std,
        });
    }
    Ok(BenchmarkReport { runs, cells })
}
