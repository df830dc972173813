use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};

use super::config::{DataSource, ExperimentConfig, GraphSource, Placement};
use crate::attack::Trigger;
use crate::nn::{dirichlet_partition, gaussian_blobs, init_params, BlobConfig, Dataset, MlpSpec, ParamVector};
use crate::seed::{self, tag};
use crate::topology::{
    gen_grid, gen_random_regular, gen_scale_free, place_defense_random_regular, place_defense_scale_free,
    validate_non_eclipse, Graph, GraphKind,
};
use crate::{Error, Result};

/// Attempts at drawing a malicious set that leaves every defender
/// non-eclipsed.
pub const ROLE_ATTEMPTS: u64 = 1000;

pub fn build_graph(cfg: &ExperimentConfig, seed: u64) -> Result<Graph> {
    let g = &cfg.graph;
    let graph_seed = seed::derive(seed, &[tag::GRAPH]);
    match g.kind {
        GraphSource::ScaleFree => gen_scale_free(g.n, g.m_attach, graph_seed),
        GraphSource::RandomRegular => gen_random_regular(g.n, g.degree, graph_seed),
        GraphSource::Grid => gen_grid(g.rows, g.cols),
        GraphSource::File => {
            let path = g.path.as_ref().ok_or_else(|| Error::Config(vec!["graph.path missing".into()]))?;
            let graph: Graph = std::fs::read_to_string(path)?.parse()?;
            if !graph.is_connected() {
                return Err(Error::NotConnected);
            }
            Ok(graph)
        }
    }
}

/// Training pool and clean test set.
pub fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let d = &cfg.data;
    match d.source {
        DataSource::Blobs => {
            let blob = |per_class| BlobConfig {
                classes: d.classes,
                dim: d.dim,
                per_class,
                separation: d.separation,
                noise: d.noise,
            };
            Ok((
                gaussian_blobs(&blob(d.train_per_class), seed::derive(seed, &[tag::DATA, 0])),
                gaussian_blobs(&blob(d.test_per_class), seed::derive(seed, &[tag::DATA, 1])),
            ))
        }
        DataSource::Csv => {
            let open = |p: &Option<std::path::PathBuf>| -> Result<Dataset> {
                let path = p.as_ref().ok_or_else(|| Error::Config(vec!["csv path missing".into()]))?;
                Dataset::from_csv(std::fs::File::open(path)?, Some(d.classes))
            };
            let (train, test) = (open(&d.train_csv)?, open(&d.test_csv)?);
            for set in [&train, &test] {
                if set.dim() != d.dim {
                    return Err(Error::Dimension { expected: d.dim, actual: set.dim() });
                }
            }
            Ok((train, test))
        }
    }
}

/// Triggered copies of every test sample whose label is not the target,
/// relabelled to the target.
pub fn adversarial_set(holdout: &Dataset, trigger: &Trigger, target: usize) -> Result<Dataset> {
    let mut adv = Dataset::empty(holdout.dim(), holdout.classes());
    for i in (0..holdout.len()).filter(|&i| holdout.label(i) != target) {
        let mut x = holdout.input(i).to_vec();
        trigger.apply_in_place(&mut x);
        adv.push(&x, target);
    }
    if adv.is_empty() {
        return Err(Error::Input("no non-target samples for the adversarial set".into()));
    }
    Ok(adv)
}

/// Topology-aware defense set for `g`.
pub fn topology_defense(g: &Graph, cfg: &ExperimentConfig, budget: usize) -> Vec<usize> {
    let r = &cfg.roles;
    let placement = match g.kind() {
        GraphKind::ScaleFree => place_defense_scale_free(g, budget, r.k0.max(budget), r.hops, r.alpha0),
        _ => place_defense_random_regular(g, budget),
    };
    if placement.under_budget {
        log::warn!("defense placement stopped at {} of {budget} nodes", placement.defense_set.len());
    }
    let mut set = placement.defense_set;
    set.sort_unstable();
    set
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roles {
    pub malicious: Vec<usize>,
    pub topology_defense: Vec<usize>,
    pub random_defense: Vec<usize>,
}

/// Draws the malicious set outside the topology-aware defense set such that
/// no defender is eclipsed, then a random-placement defense set among benign
/// nodes that also satisfy the rule.
pub fn assign_roles(g: &Graph, cfg: &ExperimentConfig, seed: u64) -> Result<Roles> {
    let n = g.n();
    let budget = cfg.defense_budget(n);
    let topo = topology_defense(g, cfg, budget);
    let count = cfg.malicious_count(n);
    let candidates: Vec<usize> = (0..n).filter(|v| !topo.contains(v)).collect();
    if count > candidates.len() {
        return Err(Error::Config(vec![format!("{count} malicious nodes do not fit beside {} defenders", topo.len())]));
    }
    let defenders_ok = |mal: &[usize], defense: &[usize]| {
        validate_non_eclipse(g, mal).iter().filter(|c| defense.contains(&c.node)).all(|c| c.ok)
    };
    let mut malicious = None;
    for attempt in 0..ROLE_ATTEMPTS {
        let mut rng = seed::rng(seed, &[tag::ROLES, attempt]);
        let mut pick: Vec<usize> = index::sample(&mut rng, candidates.len(), count).into_iter().map(|k| candidates[k]).collect();
        pick.sort_unstable();
        if defenders_ok(&pick, &topo) {
            malicious = Some(pick);
            break;
        }
    }
    if malicious.is_none() {
        let mut order = candidates.clone();
        order.shuffle(&mut seed::rng(seed, &[tag::ROLES, ROLE_ATTEMPTS]));
        malicious = non_eclipse_search(g, &order, count, &topo).map(|mut m| {
            m.sort_unstable();
            m
        });
    }
    let malicious = malicious.ok_or_else(|| {
        Error::Config(vec![format!("no malicious set of size {count} keeps every defender non-eclipsed")])
    })?;
    let checks = validate_non_eclipse(g, &malicious);
    let mut eligible: Vec<usize> = checks.iter().filter(|c| c.ok).map(|c| c.node).collect();
    eligible.shuffle(&mut seed::rng(seed, &[tag::ROLES, u64::MAX]));
    let mut random_defense: Vec<usize> = eligible.into_iter().take(budget).collect();
    random_defense.sort_unstable();
    if random_defense.len() < budget {
        log::warn!("random placement found only {} eligible defenders", random_defense.len());
    }
    Ok(Roles { malicious, topology_defense: topo, random_defense })
}

/// Exhaustive backtracking over `order` for `count` nodes that leave every
/// defender strictly under its eclipse limit.
fn non_eclipse_search(g: &Graph, order: &[usize], count: usize, defense: &[usize]) -> Option<Vec<usize>> {
    fn go(
        g: &Graph,
        order: &[usize],
        start: usize,
        left: usize,
        slack: &mut [usize],
        pick: &mut Vec<usize>,
    ) -> bool {
        if left == 0 {
            return true;
        }
        for k in start..order.len() {
            if order.len() - k < left {
                return false;
            }
            let v = order[k];
            let hits: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| slack[u] != usize::MAX).collect();
            if hits.iter().any(|&u| slack[u] == 0) {
                continue;
            }
            hits.iter().for_each(|&u| slack[u] -= 1);
            pick.push(v);
            if go(g, order, k + 1, left - 1, slack, pick) {
                return true;
            }
            pick.pop();
            hits.iter().for_each(|&u| slack[u] += 1);
        }
        false
    }
    // Remaining malicious neighbors each defender tolerates; MAX marks non-defenders.
    let mut slack = vec![usize::MAX; g.n()];
    for &d in defense {
        slack[d] = g.degree(d).div_ceil(2).saturating_sub(1);
    }
    let mut pick = Vec::with_capacity(count);
    go(g, order, 0, count, &mut slack, &mut pick).then_some(pick)
}

/// Everything an experiment run needs that does not change between rounds.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub graph: Graph,
    pub spec: MlpSpec,
    pub parts: Vec<Dataset>,
    pub test: Dataset,
    pub adversarial: Dataset,
    pub trigger: Trigger,
    pub roles: Roles,
    /// Defense nodes actually running the audited policy.
    pub defense: Vec<usize>,
    pub init: ParamVector,
    /// Shared randomized-smoothing anchor input.
    pub anchor: Vec<f64>,
}

pub fn build_scenario(cfg: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    let graph = build_graph(cfg, seed)?;
    let n = graph.n();
    let q = cfg.roles.malicious_ratio * n as f64;
    if (q - q.round()).abs() > 1e-9 {
        return Err(Error::Config(vec![format!("roles.malicious_ratio * n = {q} is not an integer")]));
    }
    let spec = cfg.model_spec()?;
    let (train, test) = load_data(cfg, seed)?;
    let parts = dirichlet_partition(&train, n, cfg.data.beta, cfg.data.min_per_node, seed::derive(seed, &[tag::DATA, 2]))?
        .iter()
        .map(|idx| train.subset(idx))
        .collect();
    let trigger = cfg.attack.trigger(cfg.data.dim)?;
    let adversarial = adversarial_set(&test, &trigger, cfg.attack.target)?;
    let roles = assign_roles(&graph, cfg, seed)?;
    let defense = match (cfg.policy.kind, cfg.roles.placement) {
        (super::config::PolicyKind::Mab, Placement::TopologyAware) => roles.topology_defense.clone(),
        (super::config::PolicyKind::Mab, Placement::Random) => roles.random_defense.clone(),
        _ => Vec::new(),
    };
    let mut rng = seed::rng(seed, &[tag::ANCHOR]);
    let anchor = (0..cfg.data.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(Scenario {
        seed,
        init: init_params(&spec, seed::derive(seed, &[tag::INIT])),
        graph,
        spec,
        parts,
        test,
        adversarial,
        trigger,
        roles,
        defense,
        anchor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_respect_constraints() {
        let cfg = ExperimentConfig::default();
        for seed in 0..5 {
            let g = build_graph(&cfg, seed).unwrap();
            let roles = assign_roles(&g, &cfg, seed).unwrap();
            assert_eq!(roles.malicious.len(), 6);
            assert_eq!(roles.topology_defense.len(), 4);
            assert!(roles.malicious.iter().all(|m| !roles.topology_defense.contains(m)));
            assert!(roles.malicious.iter().all(|m| !roles.random_defense.contains(m)));
            for c in validate_non_eclipse(&g, &roles.malicious) {
                if roles.topology_defense.contains(&c.node) || roles.random_defense.contains(&c.node) {
                    assert!(c.ok);
                }
            }
        }
    }

    #[test]
    fn search_is_exact_on_a_star() {
        let edges: Vec<_> = (1..=6).map(|l| (0, l)).collect();
        let g = Graph::from_edges(7, &edges, GraphKind::Custom).unwrap();
        let order: Vec<usize> = (1..=6).collect();
        // Hub of degree 6 tolerates at most 2 malicious leaves.
        assert_eq!(non_eclipse_search(&g, &order, 2, &[0]).unwrap().len(), 2);
        assert!(non_eclipse_search(&g, &order, 3, &[0]).is_none());
    }

    #[test]
    fn random_regular_roles_always_resolve() {
        let mut cfg = ExperimentConfig::default();
        cfg.graph.kind = GraphSource::RandomRegular;
        for seed in 0..10 {
            let g = build_graph(&cfg, seed).unwrap();
            let roles = assign_roles(&g, &cfg, seed).unwrap();
            let checks = validate_non_eclipse(&g, &roles.malicious);
            assert!(checks.iter().filter(|c| roles.topology_defense.contains(&c.node)).all(|c| c.ok));
        }
    }

    #[test]
    fn adversarial_set_excludes_target() {
        let cfg = ExperimentConfig::default();
        let (_, test) = load_data(&cfg, 1).unwrap();
        let trig = cfg.attack.trigger(cfg.data.dim).unwrap();
        let adv = adversarial_set(&test, &trig, 0).unwrap();
        assert_eq!(adv.len(), test.len() - test.indices_of_class(0).len());
        assert!(adv.labels().iter().all(|&y| y == 0));
    }
}
