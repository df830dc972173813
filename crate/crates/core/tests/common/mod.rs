//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

pub mod criteria;

use dfl_core::attack::{poison_dataset, raw_backdoor_update, AttackConfig};
use dfl_core::audit::{audit_rows, gen_probes, score_model, AuditConfig, AuditContext, AuditRow};
use dfl_core::nn::{gaussian_blobs, init_params, train_local, BlobConfig, Dataset, MlpSpec, ParamVector, TrainConfig};
use dfl_core::seed;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

pub const DIMS: [usize; 4] = [32, 64, 32, 5];

/// A warm model, a defender's local data and six neighbors of which the last
/// is an uncamouflaged (phase-1 only) backdoored model.
pub struct AuditFixture {
    pub spec: MlpSpec,
    pub base: ParamVector,
    pub defender_data: Dataset,
    pub neighbors: Vec<ParamVector>,
    pub ctx: AuditContext,
}

pub const MALICIOUS: usize = 5;

/// Epochs of centralized training for the shared starting model.
pub const WARMUP_EPOCHS: usize = 10;

pub fn audit_fixture(s: u64) -> AuditFixture {
    let spec = MlpSpec::new(&DIMS).unwrap();
    let data = gaussian_blobs(&BlobConfig::default(), seed::derive(s, &[1]));
    let train = TrainConfig::default();
    let base = train_local(&init_params(&spec, s), &spec, &data, &TrainConfig { epochs: WARMUP_EPOCHS, ..train }, s)
        .unwrap();
    // Same-distribution shards: the fixture isolates what the metrics see.
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(s, &[2]));
    let locals: Vec<Dataset> = order.chunks(data.len().div_ceil(7)).map(|c| data.subset(c)).collect();
    let mut neighbors: Vec<ParamVector> = (1..6)
        .map(|k| train_local(&base, &spec, &locals[k], &train, seed::derive(s, &[3, k as u64])).unwrap())
        .collect();
    let attack = AttackConfig::default();
    let trig = attack.trigger(spec.input_dim()).unwrap();
    let (poisoned, _) = poison_dataset(&locals[6], &attack, &trig, seed::derive(s, &[4])).unwrap();
    let delta = raw_backdoor_update(&base, &spec, &poisoned, &train, seed::derive(s, &[5])).unwrap();
    neighbors.push(&base + &delta);

    let defender_data = locals[0].clone();
    let mut rng = seed::rng(s, &[6]);
    let anchor: Vec<f64> = (0..spec.input_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ctx = AuditContext {
        probes: gen_probes(spec.input_dim(), seed::derive(s, &[7])).unwrap(),
        anchor,
        batch: (0..16.min(defender_data.len())).map(|i| defender_data.input(i).to_vec()).collect(),
        noise_seed: seed::derive(s, &[8]),
    };
    AuditFixture { spec, base, defender_data, neighbors, ctx }
}

pub fn audit_fixture_rows(f: &AuditFixture) -> Vec<AuditRow> {
    let cfg = AuditConfig::default();
    let scored: Vec<_> = f
        .neighbors
        .iter()
        .enumerate()
        .map(|(k, m)| (k, score_model(m, &f.spec, &f.ctx, &cfg).unwrap()))
        .collect();
    audit_rows(1, 0, &scored).unwrap()
}

/// Index of the lowest reward; ties go to the lowest index.
pub fn argmin_reward(rows: &[AuditRow]) -> usize {
    let mut best = 0;
    for (k, r) in rows.iter().enumerate() {
        if r.reward < rows[best].reward {
            best = k;
        }
    }
    best
}
