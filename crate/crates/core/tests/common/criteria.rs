//! One check per acceptance criterion. Each returns whether it held and a
//! short line of measured values.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dfl_core::aggregate::{fedavg, krum, mab_defense_round, trimmed_mean, MabConfig, TrustLedger};
use dfl_core::audit::{entropy_anomaly, kurtosis, median, rho_ak, robust_z, rs_score, MetricScores};
use dfl_core::diffusion::DiffusionSystem;
use dfl_core::nn::{forward, init_params, MlpSpec, ParamVector};
use dfl_core::seed;
use dfl_core::sim::{
    benchmark, correlation_experiment, BenchmarkReport, ExperimentConfig, GraphSource, Placement, PolicyKind,
    PolicyVariant, DEFAULT_SWEEP,
};
use dfl_core::topology::{build_mixing_matrix, gen_grid, gen_random_regular, gen_scale_free, Graph};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{argmin_reward, audit_fixture, audit_fixture_rows, MALICIOUS};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    Outcome { pass, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Random connected graph with at most 30 nodes, cycling through generators.
pub fn random_graph(k: u64) -> Graph {
    let mut rng = seed::rng(k, &[0xD1F]);
    match k % 3 {
        0 => gen_scale_free(rng.random_range(4..=30), rng.random_range(1..=3), k).unwrap(),
        1 => {
            let d = rng.random_range(2..=5);
            let mut n = rng.random_range(d + 2..=30);
            if n * d % 2 == 1 {
                n -= 1;
            }
            gen_random_regular(n, d, k).unwrap()
        }
        _ => gen_grid(rng.random_range(2..=5), rng.random_range(2..=6)).unwrap(),
    }
}

pub fn diffusion_soundness() -> Outcome {
    timed(|| {
        let (mut worst_rho, mut worst_gap, mut worst_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
        for k in 0..200u64 {
            let g = random_graph(k);
            let source = seed::rng(k, &[0x50]).random_range(0..g.n());
            let sys = DiffusionSystem::from_roles(&build_mixing_matrix(&g), &[source], 0.3, 1.0).unwrap();
            worst_rho = worst_rho.max(sys.spectral_radius().unwrap().value);
            let mut s = dfl_core::diffusion::InfectionState::zero(g.n());
            for t in 1..=50 {
                s = sys.step(&s).unwrap();
                let bound = sys.bound_profile(t).unwrap();
                for (i, b) in bound.iter().enumerate() {
                    if let Some(b) = b {
                        worst_excess = worst_excess.max(s.s[i] - b);
                    }
                }
            }
            let stationary = sys.stationary().unwrap();
            worst_gap = worst_gap.max((stationary - sys.iterate(500)).amax());
        }
        let pass = worst_rho < 1.0 && worst_excess <= 1e-12 && worst_gap <= 1e-8;
        (
            pass,
            format!(
                "max rho {worst_rho:.4} (< 1), max s_i(t) - bound {worst_excess:.2e} (<= 0), stationary vs 500 steps {worst_gap:.2e} (<= 1e-8)"
            ),
        )
    })
}

pub fn metric_units() -> Outcome {
    timed(|| {
        let sea = entropy_anomaly(&[0.6, 0.1, 0.1, 0.1, 0.1]);
        let kappa = 5.0;
        let rs = rs_score(std::f64::consts::LN_2 / kappa, kappa);
        let mut rng = seed::rng(7, &[0xA4]);
        let z: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let kurt = kurtosis(&z);
        let mad = robust_z(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap().z[4];
        let pass = (sea - 0.1424).abs() <= 1e-4 && (rs - 0.5).abs() <= 1e-9 && (kurt - 3.0).abs() <= 0.2 && mad == 97.0;
        (pass, format!("sea {sea:.5} (0.1424), rs {rs:.12} (0.5), gaussian kurtosis {kurt:.3} (3 +- 0.2), Z(100) {mad}"))
    })
}

/// `rho_ak` of `params` and of a copy whose most often active latent neuron
/// has its incoming row scaled to 50x the median row norm of that layer.
pub fn planted_neuron_ratio(params: &ParamVector, spec: &MlpSpec, batch: &[Vec<f64>]) -> (f64, f64) {
    let layer = spec.layers()[spec.layers().len() - 2];
    let row = |r: usize| layer.weight_offset + r * layer.inputs..layer.weight_offset + (r + 1) * layer.inputs;
    let row_norm = |r: usize| params.0[row(r)].iter().map(|v| v * v).sum::<f64>().sqrt();
    let norms: Vec<f64> = (0..layer.outputs).map(row_norm).collect();
    let z: Vec<Vec<f64>> = batch.iter().map(|x| forward(params, spec, x).unwrap().z).collect();
    // Firing count first, summed activation to break ties.
    let key = |r: usize| (z.iter().filter(|v| v[r] > 0.0).count(), z.iter().map(|v| v[r]).sum::<f64>());
    let target = (0..layer.outputs)
        .max_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        })
        .unwrap();
    let mut planted = params.clone();
    let factor = 50.0 * median(&norms) / norms[target];
    planted.0[row(target)].iter_mut().for_each(|v| *v *= factor);
    (rho_ak(params, spec, batch).unwrap(), rho_ak(&planted, spec, batch).unwrap())
}

pub fn planted_backdoor() -> Outcome {
    timed(|| {
        let (mut fresh_min, mut warm_min) = (f64::INFINITY, f64::INFINITY);
        let mut hits = 0;
        for s in 0..10u64 {
            let f = audit_fixture(s);
            let (b, p) = planted_neuron_ratio(&init_params(&f.spec, s), &f.spec, &f.ctx.batch);
            fresh_min = fresh_min.min(p / b);
            let (b, p) = planted_neuron_ratio(&f.base, &f.spec, &f.ctx.batch);
            warm_min = warm_min.min(p / b);
            hits += (argmin_reward(&audit_fixture_rows(&f)) == MALICIOUS) as usize;
        }
        (
            fresh_min >= 5.0 && hits >= 9,
            format!(
                "rho_ak planted/benign min over 10 seeds {fresh_min:.2} (>= 5; trained model for reference {warm_min:.2}), poisoned model min reward in {hits}/10 seeds (>= 9)"
            ),
        )
    })
}

pub fn random_updates(rng: &mut seed::Rng, n: usize, p: usize) -> Vec<ParamVector> {
    (0..n).map(|_| ParamVector((0..p).map(|_| rng.random_range(-5.0..5.0)).collect())).collect()
}

/// Brute-force Krum: full distance table, explicit sort, lowest index on ties.
pub fn krum_oracle(updates: &[ParamVector], f: usize, m: usize) -> Vec<usize> {
    let n = updates.len();
    let dist = |a: &ParamVector, b: &ParamVector| a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut scored: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&updates[i], &updates[j])).collect();
            d.sort_by(f64::total_cmp);
            (d[..n - f - 2].iter().sum(), i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(m).map(|(_, i)| i).collect()
}

pub fn trimmed_oracle(updates: &[ParamVector], beta: f64) -> ParamVector {
    let n = updates.len();
    let k = (beta * n as f64).floor() as usize;
    ParamVector(
        (0..updates[0].len())
            .map(|c| {
                let mut col: Vec<f64> = updates.iter().map(|u| u.0[c]).collect();
                col.sort_by(f64::total_cmp);
                col[k..n - k].iter().sum::<f64>() / (n - 2 * k) as f64
            })
            .collect(),
    )
}

/// Largest gap, in rounds, between consecutive audits of any neighbor over a
/// `rounds`-round run in which one neighbor always looks anomalous.
pub fn ucb_max_gap(rounds: usize, neighbors: usize, r_a: f64, seed_base: u64) -> usize {
    let cfg = MabConfig { r_a, ..MabConfig::default() };
    let mut ledger = TrustLedger::new((1..=neighbors).collect(), &cfg);
    let models: Vec<ParamVector> = (0..neighbors).map(|k| ParamVector(vec![k as f64])).collect();
    let refs: Vec<&ParamVector> = models.iter().collect();
    let own = ParamVector(vec![0.0]);
    let mut last = vec![0usize; neighbors];
    let mut gap = 0;
    let mut rng = seed::rng(seed_base, &[0x0CB]);
    for round in 1..=rounds {
        let noise = seed::derive(seed_base, &[round as u64]);
        let score = |m: &ParamVector| -> dfl_core::Result<MetricScores> {
            let k = m.0[0] as u64;
            let mut r = seed::rng(noise, &[k]);
            let bump = if k == 0 { 50.0 } else { 0.0 };
            Ok(MetricScores { rho_sea: r.random::<f64>() + bump, rho_rs: r.random(), rho_ak: 3.0 + r.random::<f64>() })
        };
        let out = mab_defense_round(&mut ledger, round, 0, &refs, &own, &cfg, score, &mut rng).unwrap();
        for id in out.audited {
            let pos = id - 1;
            gap = gap.max(round - last[pos]);
            last[pos] = round;
        }
    }
    for &l in &last {
        gap = gap.max(rounds + 1 - l);
    }
    gap
}

pub fn aggregator_oracles() -> Outcome {
    timed(|| {
        let mut rng = seed::rng(11, &[0xA66]);
        let mut mismatches = 0;
        for _ in 0..100 {
            let f = rng.random_range(0..=3usize);
            let n = rng.random_range((2 * f + 3).max(3)..=9);
            let p = rng.random_range(1..=8);
            let m = rng.random_range(1..=n);
            let ups = random_updates(&mut rng, n, p);
            let refs: Vec<&ParamVector> = ups.iter().collect();
            let got = krum(&refs, f, m).unwrap();
            let want = krum_oracle(&ups, f, m);
            let chosen: Vec<&ParamVector> = want.iter().map(|&i| &ups[i]).collect();
            if got.selected != want || got.value != fedavg(&chosen).unwrap() {
                mismatches += 1;
            }
            let beta = rng.random_range(0.0..0.49);
            if trimmed_mean(&refs, beta).unwrap() != trimmed_oracle(&ups, beta) {
                mismatches += 1;
            }
        }
        let gap = ucb_max_gap(200, 8, 0.3, 5);
        (mismatches == 0 && gap <= 100, format!("{mismatches} oracle mismatches in 100 instances, longest audit gap {gap} rounds (<= 100)"))
    })
}

/// Scale-free FedAvg setting of the correlation study.
pub fn correlation_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.policy.kind = PolicyKind::Fedavg;
    cfg.graph.kind = GraphSource::ScaleFree;
    cfg.roles.malicious_ratio = 0.1;
    cfg
}

pub fn correlation() -> Outcome {
    timed(|| {
        let report = correlation_experiment(&correlation_config(), &DEFAULT_SWEEP, 3).unwrap();
        (report.mean_tau >= 0.3, format!("mean Kendall tau {:.4} over {} runs (>= 0.3)", report.mean_tau, report.runs.len()))
    })
}

pub fn benchmark_variants() -> Vec<PolicyVariant> {
    vec![PolicyVariant::new(PolicyKind::Fedavg), PolicyVariant::mab(Placement::TopologyAware), PolicyVariant::mab(Placement::Random)]
}

pub const TOPOLOGIES: [GraphSource; 2] = [GraphSource::ScaleFree, GraphSource::RandomRegular];

fn cell(report: &BenchmarkReport, variant: &PolicyVariant, topology: GraphSource, ratio: f64) -> (f64, f64) {
    let c = report.cell(&variant.label, topology, ratio).unwrap();
    (c.acc_mean, c.asr_mean)
}

pub fn defense_benchmark() -> Outcome {
    timed(|| {
        let v = benchmark_variants();
        let report = benchmark(&ExperimentConfig::default(), &v, &TOPOLOGIES, &[0.3], 3).unwrap();
        let mut pass = true;
        let mut parts = Vec::new();
        for topo in TOPOLOGIES {
            let (fa_acc, fa_asr) = cell(&report, &v[0], topo, 0.3);
            let (ta_acc, ta_asr) = cell(&report, &v[1], topo, 0.3);
            let (_, rd_asr) = cell(&report, &v[2], topo, 0.3);
            let ok_asr = ta_asr <= 0.5 * fa_asr && ta_asr <= rd_asr;
            let ok_acc = (ta_acc - fa_acc).abs() <= 0.05;
            pass &= ok_asr && ok_acc;
            parts.push(format!(
                "{}: ASR mab {:.3} fedavg {:.3} random {:.3} [{}], ACC mab {:.3} fedavg {:.3} [{}]",
                dfl_core::sim::topology_name(topo),
                ta_asr,
                fa_asr,
                rd_asr,
                if ok_asr { "ok" } else { "fail" },
                ta_acc,
                fa_acc,
                if ok_acc { "ok" } else { "fail" }
            ));
        }
        (pass, parts.join("; "))
    })
}

pub fn utility_preservation() -> Outcome {
    timed(|| {
        let v = benchmark_variants();
        let report = benchmark(&ExperimentConfig::default(), &v[..2], &TOPOLOGIES, &[0.0], 3).unwrap();
        let mut pass = true;
        let mut parts = Vec::new();
        for topo in TOPOLOGIES {
            let (fa_acc, _) = cell(&report, &v[0], topo, 0.0);
            let (ta_acc, _) = cell(&report, &v[1], topo, 0.0);
            let ok = (ta_acc - fa_acc).abs() <= 0.03;
            pass &= ok;
            parts.push(format!("{}: ACC mab {ta_acc:.3} fedavg {fa_acc:.3} [{}]", dfl_core::sim::topology_name(topo), if ok { "ok" } else { "fail" }));
        }
        (pass, parts.join("; "))
    })
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Runs the CLI into a fresh directory and returns every output file.
pub fn cli_outputs(args: &[&str], threads: usize, config: &Path) -> Vec<(String, Vec<u8>)> {
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_dfl"))
        .args(args)
        .arg(config)
        .args(["--seed", "3", "--threads", &threads.to_string(), "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    dir_bytes(out.path())
}

pub fn determinism() -> Outcome {
    timed(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("run.toml");
        std::fs::write(&config, "rounds = 6\ntrials = 1\n").unwrap();
        let mut same = true;
        let mut files = 0;
        for args in [&["simulate"][..], &["correlate", "--sweep", "0.5,3"][..]] {
            let a = cli_outputs(args, 1, &config);
            let b = cli_outputs(args, 1, &config);
            let c = cli_outputs(args, 4, &config);
            same &= a == b && a == c && !a.is_empty();
            files += a.len();
        }
        (same, format!("{files} output files byte-identical across repeat runs and 1 vs 4 threads"))
    })
}
