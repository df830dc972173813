mod common;

use common::criteria::{krum_oracle, random_graph, trimmed_oracle};
use dfl_core::aggregate::{krum, stratified_weights, trimmed_mean, weighted_sample, MabConfig, TrustLedger};
use dfl_core::attack::{apply_trigger, convex_fuse, norm_bound_scale, ScaleRule, Trigger};
use dfl_core::audit::{gen_probes, rho_sea, robust_z};
use dfl_core::diffusion::{DiffusionSystem, InfectionState};
use dfl_core::nn::{init_params, softmax, MlpSpec, ParamVector};
use dfl_core::seed;
use dfl_core::sim::{kendall_tau, run_experiment, ExperimentConfig};
use dfl_core::topology::build_mixing_matrix;
use proptest::prelude::*;

fn vectors(n: std::ops::RangeInclusive<usize>, p: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<ParamVector>> {
    (n, p).prop_flat_map(|(n, p)| {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, p).prop_map(ParamVector), n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..12)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trimmed_mean_matches_sorting_oracle(ups in vectors(3..=15, 1..=8), beta in 0.0f64..0.5) {
        let refs: Vec<&ParamVector> = ups.iter().collect();
        let k = (beta * ups.len() as f64).floor() as usize;
        prop_assume!(2 * k < ups.len());
        prop_assert_eq!(trimmed_mean(&refs, beta).unwrap(), trimmed_oracle(&ups, beta));
    }

    #[test]
    fn krum_matches_oracle(ups in vectors(5..=9, 1..=6), f in 0usize..=3, m in 1usize..=9) {
        prop_assume!(ups.len() >= 2 * f + 3);
        let m = m.min(ups.len());
        let refs: Vec<&ParamVector> = ups.iter().collect();
        prop_assert_eq!(krum(&refs, f, m).unwrap().selected, krum_oracle(&ups, f, m));
    }

    #[test]
    fn krum_never_picks_a_far_outlier(ups in vectors(5..=9, 1..=6), shift in 1e3f64..1e6) {
        let mut ups = ups;
        let last = ups.len() - 1;
        ups[last].0.iter_mut().for_each(|v| *v += shift);
        let refs: Vec<&ParamVector> = ups.iter().collect();
        prop_assert!(!krum(&refs, 1, 1).unwrap().selected.contains(&last));
    }

    #[test]
    fn robust_z_ignores_shift_and_scale(v in prop::collection::vec(-100.0f64..100.0, 3..20), a in 0.1f64..10.0, b in -50.0f64..50.0) {
        let z = robust_z(&v).unwrap();
        prop_assume!(!z.degenerate);
        let moved: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        let zm = robust_z(&moved).unwrap();
        for (x, y) in z.z.iter().zip(&zm.z) {
            prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn trust_stays_in_unit_interval_and_contracts(rewards in prop::collection::vec(0.0f64..=1.0, 1..50), alpha in 0.01f64..1.0) {
        let cfg = MabConfig { alpha, ..MabConfig::default() };
        let mut a = TrustLedger::new(vec![1], &cfg);
        let mut b = TrustLedger::new(vec![1], &cfg);
        b.q[0] = 1.0;
        for &r in &rewards {
            let gap = (a.q[0] - b.q[0]).abs();
            a.trust_update(0, r);
            b.trust_update(0, r);
            prop_assert!((0.0..=1.0).contains(&a.q[0]));
            prop_assert!((a.q[0] - b.q[0]).abs() <= (1.0 - alpha) * gap + 1e-15);
        }
    }

    #[test]
    fn stratified_weights_sum_to_one(d in 0usize..10, o in 0usize..10) {
        let cfg = MabConfig::default();
        let (s, wd, wo) = stratified_weights(&cfg, d, o);
        prop_assert!((s + d as f64 * wd + o as f64 * wo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_sample_is_distinct_and_admits_infinite_first(
        weights in prop::collection::vec(prop_oneof![Just(f64::INFINITY), 0.0f64..5.0], 1..12),
        k in 0usize..14,
        s in any::<u64>(),
    ) {
        let picked = weighted_sample(&weights, k, &mut seed::rng(s, &[]));
        let mut dedup = picked.clone();
        dedup.dedup();
        prop_assert_eq!(picked.len(), k.min(weights.len()));
        prop_assert_eq!(dedup.len(), picked.len());
        let infinite = weights.iter().filter(|w| w.is_infinite()).count();
        let got = picked.iter().filter(|&&i| weights[i].is_infinite()).count();
        prop_assert_eq!(got, infinite.min(picked.len()));
    }

    #[test]
    fn diffusion_stays_under_the_bound(k in 0u64..10_000, lambda in 0.05f64..0.95, u in 0.1f64..5.0) {
        let g = random_graph(k);
        let source = (k as usize) % g.n();
        let sys = DiffusionSystem::from_roles(&build_mixing_matrix(&g), &[source], lambda, u).unwrap();
        let mut s = InfectionState::zero(g.n());
        for t in 1..=20 {
            s = sys.step(&s).unwrap();
            for (i, b) in sys.bound_profile(t).unwrap().iter().enumerate() {
                if let Some(b) = b {
                    prop_assert!(s.s[i] <= b * (1.0 + 1e-12) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn mixing_matrix_is_symmetric_and_stochastic(k in 0u64..10_000) {
        let w = build_mixing_matrix(&random_graph(k));
        let n = w.0.nrows();
        for i in 0..n {
            prop_assert!((w.0.row(i).sum() - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert!(w.get(i, j) >= 0.0);
                prop_assert_eq!(w.get(i, j), w.get(j, i));
            }
        }
    }

    #[test]
    fn kendall_tau_is_bounded_and_symmetric(pairs in prop::collection::vec((0u8..6, 0u8..6), 2..25)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let ab = kendall_tau(&a, &b).unwrap();
        let ba = kendall_tau(&b, &a).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab.tau));
        prop_assert_eq!(ab.tau, ba.tau);
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        prop_assert!((kendall_tau(&a, &neg).unwrap().tau + ab.tau).abs() < 1e-12);
    }

    #[test]
    fn kendall_tau_of_a_strictly_monotone_map_is_one(v in prop::collection::vec(-1e3f64..1e3, 2..25)) {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        v.dedup();
        prop_assume!(v.len() >= 2);
        let w: Vec<f64> = v.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        prop_assert_eq!(kendall_tau(&v, &w).unwrap().tau, 1.0);
    }

    #[test]
    fn convex_fusion_moves_toward_the_reference(ups in vectors(2..=2, 2..=10), c in 0.0f64..=1.0) {
        let fused = convex_fuse(&ups[0], &ups[1], c).unwrap();
        prop_assume!(ups[0].norm() > 1e-6 && ups[1].norm() > 1e-6 && fused.norm() > 1e-6);
        prop_assert!(fused.cosine(&ups[1]) >= ups[0].cosine(&ups[1]) - 1e-9);
    }

    #[test]
    fn exact_scaling_hits_the_target_norm(ups in vectors(1..=1, 1..=20), r in 0.01f64..100.0, b in 0.1f64..5.0) {
        prop_assume!(ups[0].norm() > 1e-6);
        let (scaled, _) = norm_bound_scale(&ups[0], r, b, ScaleRule::Exact).unwrap();
        prop_assert!((scaled.norm() - b * r).abs() <= 1e-9 * b * r);
        let (capped, s) = norm_bound_scale(&ups[0], r, b, ScaleRule::Capped).unwrap();
        prop_assert!(s <= 1.0 && capped.norm() <= 6.0 * b * r * (1.0 + 1e-12));
    }

    #[test]
    fn trigger_shift_has_the_expected_norm(x in prop::collection::vec(-5.0f64..5.0, 8..40), size in 1usize..8, iota in 0.1f64..10.0) {
        let trig = Trigger::tail(x.len(), size, iota).unwrap();
        let shifted = apply_trigger(&x, &trig);
        let diff: f64 = shifted.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((diff - iota * (size as f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn entropy_anomaly_is_a_unit_score(s in any::<u64>()) {
        let spec = MlpSpec::new(&[8, 6, 4, 3]).unwrap();
        let params = init_params(&spec, s);
        let probes = gen_probes(8, s).unwrap();
        let rho = rho_sea(&params, &spec, &probes).unwrap();
        prop_assert!((0.0..=1.0).contains(&rho));
    }
}

#[test]
fn zero_rounds_yield_no_records() {
    let cfg = ExperimentConfig { rounds: 0, ..ExperimentConfig::default() };
    let run = run_experiment(&cfg).unwrap();
    assert!(run.records.is_empty());
}
