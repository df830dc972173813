use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, PolicyKind};
use super::scenario::{build_scenario, Scenario};
use crate::aggregate::{
    cos_l2, error_radius, fedavg, flame_lite, krum, mab_defense_round, malicious_row, stratified_aggregate,
    stratified_weights, trimmed_mean, uniform_row, ErrorRadius, MixingRows, TrustLedger,
};
use crate::attack::{craft_malicious_update, self_isolate};
use crate::audit::{gen_probes, score_model, AuditContext, AuditRow};
use crate::nn::{evaluate, train_local, ParamVector};
use crate::seed::{self, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Malicious,
    Defense,
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRound {
    pub round: usize,
    pub node: usize,
    pub role: Role,
    pub acc: f64,
    pub asr: f64,
    pub broadcast_checksum: String,
    /// Checksum of the realized mixing row; empty for nonlinear aggregators.
    pub row_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaliciousLog {
    pub round: usize,
    pub node: usize,
    pub raw_norm: f64,
    pub reference_norm: f64,
    pub transmitted_norm: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionLog {
    pub round: usize,
    pub defender: usize,
    pub audited: Vec<usize>,
    pub trusted: Vec<usize>,
    pub aggregated: Vec<usize>,
    pub starved: bool,
    pub rho_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Means over non-malicious nodes.
    pub mean_acc: f64,
    pub mean_asr: f64,
    pub nodes: Vec<NodeRound>,
    pub audits: Vec<AuditRow>,
    pub selections: Vec<SelectionLog>,
    pub malicious: Vec<MaliciousLog>,
    pub error_radius: Option<ErrorRadius>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub rounds: usize,
    pub final_acc: f64,
    pub final_asr: f64,
    pub node_acc: Vec<f64>,
    pub node_asr: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub roles: Vec<Role>,
    pub records: Vec<RoundRecord>,
    pub summary: RunSummary,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let scenario = build_scenario(cfg, cfg.seed)?;
    run_scenario(cfg, &scenario)
}

fn checksum_hex(v: u64) -> String {
    format!("{v:016x}")
}

struct NodeOutput {
    model: ParamVector,
    row: Option<Vec<(usize, f64)>>,
    audits: Vec<AuditRow>,
    selection: Option<SelectionLog>,
}

/// Runs every round of `cfg` on a prepared scenario.
pub fn run_scenario(cfg: &ExperimentConfig, sc: &Scenario) -> Result<RunResult> {
    let n = sc.graph.n();
    let roles: Vec<Role> = (0..n)
        .map(|i| {
            if sc.roles.malicious.contains(&i) {
                Role::Malicious
            } else if sc.defense.contains(&i) {
                Role::Defense
            } else {
                Role::Standard
            }
        })
        .collect();
    let mut models = vec![sc.init.clone(); n];
    let mut last_update: Vec<Option<ParamVector>> = vec![None; n];
    let mut ledgers: Vec<Option<TrustLedger>> = (0..n)
        .map(|i| (roles[i] == Role::Defense).then(|| TrustLedger::new(sc.graph.neighbors(i).to_vec(), &cfg.policy.mab)))
        .collect();
    let mut records = Vec::with_capacity(cfg.rounds);

    for round in 1..=cfg.rounds {
        let t = round as u64;
        // Broadcast phase: local training or attack crafting from the
        // previous retained model.
        let outputs: Vec<(ParamVector, Option<MaliciousLog>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let node_seed = seed::derive(sc.seed, &[tag::TRAIN, i as u64, t]);
                if roles[i] == Role::Malicious {
                    let m = craft_malicious_update(&models[i], &sc.spec, &sc.parts[i], &cfg.attack, &cfg.train, node_seed)?;
                    let log = MaliciousLog {
                        round,
                        node: i,
                        raw_norm: m.raw_norm,
                        reference_norm: m.reference_norm,
                        transmitted_norm: m.transmitted_norm,
                        scale: m.scale,
                    };
                    Ok((m.broadcast, Some(log)))
                } else {
                    Ok((train_local(&models[i], &sc.spec, &sc.parts[i], &cfg.train, node_seed)?, None))
                }
            })
            .collect::<Result<_>>()?;
        let (broadcasts, mal_logs): (Vec<ParamVector>, Vec<Option<MaliciousLog>>) = outputs.into_iter().unzip();
        let sent: Vec<u64> = broadcasts.iter().map(|b| b.checksum()).collect();

        // Aggregation phase: every node reads only the broadcast snapshot.
        let outputs: Vec<NodeOutput> = ledgers
            .par_iter_mut()
            .enumerate()
            .map(|(i, ledger)| aggregate_node(cfg, sc, &roles, i, round, &models[i], &broadcasts, last_update[i].as_ref(), ledger.as_mut()))
            .collect::<Result<_>>()?;
        for (i, b) in broadcasts.iter().enumerate() {
            if b.checksum() != sent[i] {
                return Err(Error::Consistency(format!("broadcast of node {i} changed during aggregation")));
            }
        }

        let linear = matches!(cfg.policy.kind, PolicyKind::Fedavg | PolicyKind::Mab);
        let mut rows = MixingRows::new(n);
        if linear {
            for (i, out) in outputs.iter().enumerate() {
                rows.set_row(i, out.row.as_deref().expect("linear policies report rows"));
            }
            rows.check_stochastic()?;
        }
        let radius = (cfg.policy.kind == PolicyKind::Mab)
            .then(|| error_radius(&rows.w, &sc.defense, cfg.train.lr * cfg.diffusion.lipschitz));

        let mut audits = Vec::new();
        let mut selections = Vec::new();
        for (i, out) in outputs.into_iter().enumerate() {
            last_update[i] = Some(&out.model - &models[i]);
            models[i] = out.model;
            audits.extend(out.audits);
            if let Some(mut s) = out.selection {
                s.rho_err = radius.map(|r| r.rho_err);
                selections.push(s);
            }
        }

        let (acc, asr) = evaluate_all(sc, &models)?;
        let nodes = (0..n)
            .map(|i| NodeRound {
                round,
                node: i,
                role: roles[i],
                acc: acc[i],
                asr: asr[i],
                broadcast_checksum: checksum_hex(sent[i]),
                row_checksum: if linear { checksum_hex(rows.row_checksum(i)) } else { String::new() },
            })
            .collect();
        let (mean_acc, mean_asr) = benign_means(&roles, &acc, &asr);
        records.push(RoundRecord {
            round,
            mean_acc,
            mean_asr,
            nodes,
            audits,
            selections,
            malicious: mal_logs.into_iter().flatten().collect(),
            error_radius: radius,
        });
    }

    let (acc, asr) = evaluate_all(sc, &models)?;
    let (final_acc, final_asr) = benign_means(&roles, &acc, &asr);
    Ok(RunResult {
        roles,
        records,
        summary: RunSummary { seed: sc.seed, rounds: cfg.rounds, final_acc, final_asr, node_acc: acc, node_asr: asr },
    })
}

fn evaluate_all(sc: &Scenario, models: &[ParamVector]) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs: Vec<(f64, f64)> = models
        .par_iter()
        .map(|m| Ok((evaluate(m, &sc.spec, &sc.test)?, evaluate(m, &sc.spec, &sc.adversarial)?)))
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

fn benign_means(roles: &[Role], acc: &[f64], asr: &[f64]) -> (f64, f64) {
    let benign: Vec<usize> = (0..roles.len()).filter(|&i| roles[i] != Role::Malicious).collect();
    let k = benign.len().max(1) as f64;
    (benign.iter().map(|&i| acc[i]).sum::<f64>() / k, benign.iter().map(|&i| asr[i]).sum::<f64>() / k)
}

#[allow(clippy::too_many_arguments)]
fn aggregate_node(
    cfg: &ExperimentConfig,
    sc: &Scenario,
    roles: &[Role],
    i: usize,
    round: usize,
    prev: &ParamVector,
    broadcasts: &[ParamVector],
    last_update: Option<&ParamVector>,
    ledger: Option<&mut TrustLedger>,
) -> Result<NodeOutput> {
    let nbrs = sc.graph.neighbors(i);
    let own = &broadcasts[i];
    let plain = |model: ParamVector, row: Option<Vec<(usize, f64)>>| NodeOutput { model, row, audits: Vec::new(), selection: None };

    if roles[i] == Role::Malicious {
        let others: Vec<&ParamVector> = nbrs.iter().map(|&j| &broadcasts[j]).collect();
        return Ok(plain(self_isolate(own, &others, cfg.attack.epsilon), Some(malicious_row(i, nbrs, cfg.attack.epsilon))));
    }

    let mut closed: Vec<usize> = nbrs.to_vec();
    closed.push(i);
    closed.sort_unstable();
    let round_seed = |t: u64| seed::derive(sc.seed, &[t, i as u64, round as u64]);

    match cfg.policy.kind {
        PolicyKind::Fedavg => {
            let members: Vec<&ParamVector> = closed.iter().map(|&j| &broadcasts[j]).collect();
            Ok(plain(fedavg(&members)?, Some(uniform_row(&closed))))
        }
        PolicyKind::Mab => {
            if let Some(ledger) = ledger {
                let ctx = audit_context(cfg, sc, i, round)?;
                let models: Vec<&ParamVector> = ledger.neighbors.iter().map(|&j| &broadcasts[j]).collect();
                let mut rng = seed::rng(round_seed(tag::SAMPLING), &[]);
                let out = mab_defense_round(
                    ledger,
                    round,
                    i,
                    &models,
                    own,
                    &cfg.policy.mab,
                    |m| score_model(m, &sc.spec, &ctx, &cfg.audit),
                    &mut rng,
                )?;
                let row = if out.starved { vec![(i, 1.0)] } else { uniform_row(&out.aggregated) };
                let selection = SelectionLog {
                    round,
                    defender: i,
                    audited: out.audited,
                    trusted: out.trusted,
                    aggregated: out.aggregated,
                    starved: out.starved,
                    rho_err: None,
                };
                Ok(NodeOutput { model: out.model, row: Some(row), audits: out.rows, selection: Some(selection) })
            } else {
                let (def, other): (Vec<usize>, Vec<usize>) = nbrs.iter().partition(|&&j| roles[j] == Role::Defense);
                let dv: Vec<&ParamVector> = def.iter().map(|&j| &broadcasts[j]).collect();
                let ov: Vec<&ParamVector> = other.iter().map(|&j| &broadcasts[j]).collect();
                let model = stratified_aggregate(own, &dv, &ov, &cfg.policy.mab)?;
                let (ws, wd, wo) = stratified_weights(&cfg.policy.mab, def.len(), other.len());
                let mut row = vec![(i, ws)];
                row.extend(def.iter().map(|&j| (j, wd)));
                row.extend(other.iter().map(|&j| (j, wo)));
                Ok(plain(model, Some(row)))
            }
        }
        kind => {
            let updates: Vec<ParamVector> = closed.iter().map(|&j| &broadcasts[j] - prev).collect();
            let refs: Vec<&ParamVector> = updates.iter().collect();
            let p = &cfg.policy;
            let agg = match kind {
                PolicyKind::Krum => krum(&refs, p.krum_f, 1)?.value,
                PolicyKind::MultiKrum => krum(&refs, p.krum_f, p.multi_krum_m)?.value,
                PolicyKind::TrimmedMean => trimmed_mean(&refs, p.trim)?,
                PolicyKind::CosL2 => {
                    let local = own - prev;
                    let reference = last_update.filter(|u| u.norm() > 0.0).unwrap_or(&local);
                    if reference.norm() > 0.0 {
                        cos_l2(&refs, reference, p.cos_clip)?.value
                    } else {
                        fedavg(&refs)?
                    }
                }
                PolicyKind::FlameLite => flame_lite(&refs, p.flame_sigma, round_seed(tag::AGGREGATE))?.value,
                PolicyKind::Fedavg | PolicyKind::Mab => unreachable!(),
            };
            Ok(plain(prev + &agg, None))
        }
    }
}

/// Defender-private probes, shared anchor, and a clean batch from the
/// defender's own data for one round.
fn audit_context(cfg: &ExperimentConfig, sc: &Scenario, defender: usize, round: usize) -> Result<AuditContext> {
    let key = [defender as u64, round as u64];
    let probes = gen_probes(sc.spec.input_dim(), seed::derive(sc.seed, &[tag::AUDIT_SEA, key[0], key[1]]))?;
    let local = &sc.parts[defender];
    let take = cfg.audit.ak_batch.min(local.len());
    let mut rng = seed::rng(sc.seed, &[tag::AUDIT_AK, key[0], key[1]]);
    let mut picks = index::sample(&mut rng, local.len(), take).into_vec();
    picks.sort_unstable();
    Ok(AuditContext {
        probes,
        anchor: sc.anchor.clone(),
        batch: picks.iter().map(|&k| local.input(k).to_vec()).collect(),
        noise_seed: seed::derive(sc.seed, &[tag::AUDIT_RS, key[0], key[1]]),
    })
}
