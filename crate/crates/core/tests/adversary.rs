mod common;

use eta_diffusion::adversary::{
    depth_bound, expected_drawings, expected_drawings_exact, expected_drawings_f64, jordan_center_attack, observations,
    reproduce_table2, token_capture_expectation, AttackOptions, AttackerSet, Knowledge, PackInterpretation, PoolMode,
};
use eta_diffusion::graph::{generate_k_growing, Graph, NodeSet};
use eta_diffusion::protocol::{run_on_graph, PassRule, ScheduleSource, SimConfig};
use eta_diffusion::Error;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{enumerated_drawings, monte_carlo_drawings};

#[test]
fn drawings_match_monte_carlo() {
    let exact = expected_drawings(20, 4, 3, 2).unwrap();
    let mc = monte_carlo_drawings(20, 4, 3, 2, 1_000_000, 7);
    assert!(((mc - exact) / exact).abs() < 0.01, "formula {exact}, simulated {mc}");
}

#[test]
fn drawings_match_enumeration_on_tiny_instances() {
    for n in 2..=8 {
        for a in 1..=3.min(n - 1) {
            for pack in 1..=2.min(n) {
                for ell in 1..=a {
                    let formula = expected_drawings(n, a, pack, ell).unwrap();
                    let oracle = enumerated_drawings(n, a, pack, ell);
                    assert!((formula - oracle).abs() < 1e-9, "n {n} a {a} pack {pack} ell {ell}: {formula} vs {oracle}");
                }
            }
        }
    }
}

#[test]
fn floating_and_exact_paths_agree() {
    for (n, a, pack, ell) in [(100, 5, 3, 5), (1000, 50, 5, 5), (1000, 50, 10, 3)] {
        let exact = expected_drawings_exact(n, a, pack, ell).unwrap().to_f64().unwrap();
        let float = expected_drawings_f64(n, a, pack, ell).unwrap();
        assert!(((float - exact) / exact).abs() < 1e-6, "{n} {a} {pack} {ell}: {float} vs {exact}");
    }
    // Large instances go through exact arithmetic regardless of n.
    let exact = expected_drawings_exact(10_000, 500, 3, 9).unwrap().to_f64().unwrap();
    assert_eq!(expected_drawings(10_000, 500, 3, 9).unwrap(), exact);
    assert!(exact > 1.0);
}

proptest! {
    #[test]
    fn depth_bound_decreases_in_eta(z in 1.0f64..1e6, eta in 2usize..30) {
        prop_assert!(depth_bound(z, eta + 1).unwrap() <= depth_bound(z, eta).unwrap() + 1e-12);
    }

    #[test]
    fn depth_bound_inverts_the_tree_count(eta in 2usize..12, levels in 1u32..6) {
        let eta_f = eta as f64;
        let without_root = (eta_f + 1.0) * (eta_f.powi(levels as i32) - 1.0) / (eta_f - 1.0);
        let t = depth_bound(without_root, eta).unwrap();
        prop_assert!((t - (levels as f64 + 1.0)).abs() < 1e-9);
    }
}

#[test]
fn table_with_pack_tied_to_eta() {
    let t = reproduce_table2(0.05, &[100, 1000, 10_000], &[3, 5, 10], PackInterpretation::TiedToEta).unwrap();
    let csv = t.to_csv();
    assert!(csv.starts_with("eta,100,1000,10000\n3,"));
    for (eta, target) in [(3, 4.3), (5, 2.5), (10, 1.6)] {
        let d = t.cell(100, eta).unwrap().depth;
        assert!((d - target).abs() <= 0.5, "eta {eta}: {d}");
    }
    for n in [100, 1000, 10_000] {
        let col: Vec<f64> = [3, 5, 10].iter().map(|&e| t.cell(n, e).unwrap().depth).collect();
        assert!(col.windows(2).all(|w| w[0] > w[1]), "n {n}: {col:?}");
    }
}

#[test]
fn table_is_monotone_for_fixed_connections() {
    for (c, pack) in [(8.0, 3), (8.0, 8), (4.0, 2)] {
        let t = reproduce_table2(0.05, &[100, 1000, 10_000], &[3, 5, 10], PackInterpretation::Fixed { c, pack }).unwrap();
        for n in [100, 1000, 10_000] {
            let col: Vec<f64> = [3, 5, 10].iter().map(|&e| t.cell(n, e).unwrap().depth).collect();
            assert!(col.windows(2).all(|w| w[0] > w[1]), "c {c} pack {pack} n {n}: {col:?}");
        }
    }
}

#[test]
fn capture_expectation_stays_above_six_for_small_fractions() {
    for n in [101, 500, 10_000] {
        let a = (0.166 * n as f64).floor() as usize;
        assert!(token_capture_expectation(n, a).unwrap() > 6.0);
    }
}

fn path(n: usize) -> Graph {
    let edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
    Graph::from_edges(n, &edges).unwrap()
}

#[test]
fn flood_on_a_path_is_pinned_by_both_ends() {
    let g = path(9);
    let attackers = AttackerSet::new(NodeSet::from_iter([0, 8]), 9).unwrap();
    let cfg = SimConfig { depth: Some(1), origin: Some(4), latency_shape: 0.0, ..SimConfig::default() };
    let out = run_on_graph(&g, &cfg, PassRule::for_config(&cfg, 9, 1).unwrap()).unwrap();
    let obs = observations(&out.trace, &attackers);
    let opts = AttackOptions { pool: PoolMode::AllHonest, knowledge: Knowledge::ReceiptsAndLinks };
    let report = jordan_center_attack(&obs, &g, &attackers, 4, opts).unwrap();
    assert!(report.candidates.contains(4));
    assert!(report.success);
    assert_eq!(report.rank, Some(1));
}

#[test]
fn no_observations_is_an_error() {
    let g = path(3);
    let attackers = AttackerSet::new(NodeSet::from_iter([0]), 3).unwrap();
    assert!(matches!(
        jordan_center_attack(&[], &g, &attackers, 1, AttackOptions::default()),
        Err(Error::NoData)
    ));
}

/// With a single observer and no link knowledge, the attack can only guess
/// among the observer's honest neighbours.
#[test]
fn single_observer_guesses_uniformly_among_its_neighbours() {
    let g = generate_k_growing(300, 4, 5).unwrap();
    let opts = AttackOptions { pool: PoolMode::AllHonest, knowledge: Knowledge::ReceiptsOnly };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut hits, mut expected, mut inside) = (0.0, 0.0, 0);
    for seed in 0..3000u64 {
        // Source drawn uniformly among the observer's neighbours.
        let observer = rng.random_range(0..300);
        let source = *g.neighbors(observer).choose(&mut rng).unwrap();
        let cfg = SimConfig { depth: Some(1), origin: Some(source), seed, ..SimConfig::default() };
        let rule = PassRule::for_config(&cfg, 300, 4).unwrap();
        let out = run_on_graph(&g, &cfg, rule).unwrap();
        let attackers = AttackerSet::new(NodeSet::from_iter([observer]), 300).unwrap();
        let report = jordan_center_attack(&observations(&out.trace, &attackers), &g, &attackers, out.source, opts).unwrap();
        let expected_set: NodeSet = g.neighbors(observer).iter().copied().collect();
        assert_eq!(report.candidates, expected_set);
        inside += 1;
        expected += 1.0 / report.candidate_count as f64;
        if report.success {
            hits += 1.0;
        }
    }
    let rate = hits / inside as f64;
    let predicted = expected / inside as f64;
    assert!((rate - predicted).abs() < 0.05, "rate {rate}, predicted {predicted}");
}

#[test]
fn diffusion_beats_flooding_on_a_small_paired_sample() {
    let g = generate_k_growing(500, 6, 21).unwrap();
    let (mut ad, mut flood) = (0, 0);
    for seed in 0..150u64 {
        let base = SimConfig { eta: 3, depth: Some(4), seed, ..SimConfig::default() };
        let rule = PassRule::for_config(&base, 500, 6).unwrap();
        let out_ad = run_on_graph(&g, &base, rule).unwrap();
        let attackers = AttackerSet::uniform(500, 25, &[out_ad.source], seed ^ 0xa77).unwrap();
        let plain = SimConfig { depth: Some(1), origin: Some(out_ad.source), schedule: ScheduleSource::Fixed { p: vec![] }, ..base };
        let out_flood = run_on_graph(&g, &plain, PassRule::for_config(&plain, 500, 6).unwrap()).unwrap();
        let opts = AttackOptions::default();
        let r_ad = jordan_center_attack(&observations(&out_ad.trace, &attackers), &g, &attackers, out_ad.source, opts).unwrap();
        let r_fl = jordan_center_attack(&observations(&out_flood.trace, &attackers), &g, &attackers, out_ad.source, opts).unwrap();
        ad += r_ad.success as usize;
        flood += r_fl.success as usize;
    }
    assert!(ad < flood, "diffusion {ad}, flood {flood}");
}

#[test]
fn uniform_placement_respects_exclusions() {
    let a = AttackerSet::uniform(50, 10, &[3, 4], 1).unwrap();
    assert_eq!(a.len(), 10);
    assert!(!a.contains(3) && !a.contains(4));
    assert!((a.beta - 0.2).abs() < 1e-12);
    assert!(AttackerSet::uniform(5, 5, &[], 1).is_err());
}
