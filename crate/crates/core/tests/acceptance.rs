//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line before asserting.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1` for a readable report.

mod common;

use std::time::{Duration, Instant};

use common::{enumerated_drawings, monte_carlo_drawings, regular_tree, step, truncated};
use eta_diffusion::adversary::{
    expected_drawings, reproduce_table2, AttackOptions, AttackerSet, PackInterpretation, PoolMode,
};
use eta_diffusion::cli::paired_attack;
use eta_diffusion::distmodel::{
    discretize, estimate_mu, estimate_sigma, measure_graph, ModelConstants, NormalParams, DEFAULT_EPSILON,
};
use eta_diffusion::forwarding::{ideal_probabilities, schedule, target_state, TargetState};
use eta_diffusion::graph::generate_k_growing;
use eta_diffusion::protocol::{
    run_on_graph, run_simulation, tree_bound, EventKind, PassRule, ScheduleSource, SimConfig, Simulation, Variant,
};
use eta_diffusion::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

fn report(id: u32, name: &str, ok: bool, detail: impl AsRef<str>) {
    println!("{} {id:>2} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
}

/// Dirichlet(1, ..., 1) weights over `len` distances.
fn random_distribution(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Increasing-on-average weights, which are feasible far more often than flat ones.
fn growing_distribution(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut log_w = 0.0;
    let w: Vec<f64> = (0..len)
        .map(|_| {
            log_w += rng.random_range(-0.3..1.5);
            f64::exp(log_w)
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_01_forwarding_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut accepted, mut drawn, mut worst) = (0, 0, 0.0f64);
    while accepted < 10_000 {
        drawn += 1;
        let len = rng.random_range(2..=12);
        let f = if drawn % 2 == 0 { random_distribution(&mut rng, len) } else { growing_distribution(&mut rng, len) };
        let s = match ideal_probabilities(&f, len) {
            Ok(s) => s,
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        accepted += 1;
        let mut state = vec![1.0];
        for (i, m) in s.per_step.iter().enumerate() {
            state = step(&state, &m.p);
            let t = i + 2;
            worst = worst.max(max_abs_diff(&state, &truncated(&f, t)));
            worst = worst.max(max_abs_diff(&state, &target_state(&f, t).unwrap().probs));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-10 && elapsed < Duration::from_secs(10);
    report(1, "forwarding exactness", ok, format!("{accepted} feasible of {drawn} drawn, max error {worst:.2e}, {elapsed:.2?}"));
    assert!(ok);
}

#[test]
fn criterion_02_hand_derived_schedule() {
    let f = [0.1, 0.3, 0.6];
    let s = ideal_probabilities(&f, 3).unwrap();
    let p = &s.per_step[1].p;
    let next = step(&[0.25, 0.75], p);
    let ok = (p[0] - 0.6).abs() < 1e-12
        && (p[1] - 0.8).abs() < 1e-12
        && (s.combined[1] - 0.75).abs() < 1e-12
        && max_abs_diff(&next, &f) < 1e-12
        && max_abs_diff(&s.targets[1].probs, &[0.25, 0.75]) < 1e-12;
    report(2, "hand-derived schedule", ok, format!("p_2 = {p:?}, combined {}, next {next:?}", s.combined[1]));
    assert!(ok);
}

/// Smallest achievable deviation at step 2 for a three-point target, by scanning
/// the first-step probability and solving the second step exactly.
fn grid_optimum(f: &[f64]) -> f64 {
    let ideal = truncated(f, 2);
    let mut best = f64::INFINITY;
    let steps = 100_000;
    for i in 0..=steps {
        let x = i as f64 / steps as f64;
        // From (1 - x, x), reaching f needs p(1) = f2 / x and p(0) = 1 - f0 / (1 - x).
        let reach_far = x > 0.0 && f[2] / x <= 1.0 + 1e-12;
        let keep_near = x < 1.0 && f[0] / (1.0 - x) <= 1.0 + 1e-12;
        if reach_far && keep_near {
            best = best.min((x - ideal[1]).abs());
        }
    }
    best
}

#[test]
fn criterion_03_smoothing_validity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut cases, mut support3, mut worst_final, mut worst_gap) = (0, 0, 0.0f64, 0.0f64);
    let mut all_in_range = true;
    while cases < 1000 {
        let len = if cases % 4 == 0 { 3 } else { rng.random_range(3..=12) };
        let f = random_distribution(&mut rng, len);
        if !matches!(ideal_probabilities(&f, len), Err(Error::Infeasible { .. })) {
            continue;
        }
        cases += 1;
        let s = schedule(&f, len, true).unwrap();
        all_in_range &= s.per_step.iter().flat_map(|m| &m.p).all(|p| (0.0..=1.0).contains(p));
        let mut state = vec![1.0];
        let mut states = vec![state.clone()];
        for m in &s.per_step {
            state = step(&state, &m.p);
            states.push(state.clone());
        }
        worst_final = worst_final.max(max_abs_diff(&state, &f));
        if len == 3 {
            support3 += 1;
            let achieved = 0.5 * states[1].iter().zip(truncated(&f, 2)).map(|(a, b)| (a - b).abs()).sum::<f64>();
            worst_gap = worst_gap.max((achieved - grid_optimum(&f)).abs());
        }
    }
    let ok = all_in_range && worst_final <= 1e-9 && worst_gap <= 1e-3;
    report(
        3,
        "smoothing validity",
        ok,
        format!("{cases} infeasible, probabilities in range {all_in_range}, final error {worst_final:.2e}, support-3 ({support3}) gap to grid optimum {worst_gap:.2e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_04_normal_model_adequacy() {
    let start = Instant::now();
    let cells: Vec<(usize, usize, u64)> = [500, 2000, 5000]
        .iter()
        .flat_map(|&n| [2, 4, 6].into_iter().flat_map(move |k| (1..=5).map(move |s| (n, k, s))))
        .collect();
    let rows: Vec<_> = cells.par_iter().map(|&(n, k, s)| measure_graph(n, k, s).unwrap()).collect();
    let mu_model = ModelConstants::published_mu();
    let (mut worst_mu, mut mu_fail, mut sigma_fail) = (0.0f64, Vec::new(), Vec::new());
    let (mut sigma_lo, mut sigma_hi) = (f64::INFINITY, 0.0f64);
    for r in &rows {
        let err = (r.mu_hat - estimate_mu(r.n, r.k, &mu_model).unwrap()).abs();
        worst_mu = worst_mu.max(err);
        if err > 0.25 {
            mu_fail.push((r.n, r.k));
        }
        sigma_lo = sigma_lo.min(r.sigma_hat);
        sigma_hi = sigma_hi.max(r.sigma_hat);
        if !(0.25..=0.8).contains(&r.sigma_hat) {
            sigma_fail.push((r.n, r.k, (r.sigma_hat * 1000.0).round() / 1000.0));
        }
    }
    mu_fail.dedup();
    let elapsed = start.elapsed();
    let ok = mu_fail.is_empty() && sigma_fail.is_empty() && elapsed < Duration::from_secs(300);
    report(
        4,
        "normal-model adequacy",
        ok,
        format!(
            "{} graphs, max |mu - M2| {worst_mu:.3}, sigma in [{sigma_lo:.3}, {sigma_hi:.3}], mu misses {mu_fail:?}, sigma misses {sigma_fail:?}, {elapsed:.2?}",
            rows.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_estimator_substitution() {
    let mu = estimate_mu(2000, 6, &ModelConstants::published_mu()).unwrap();
    let sigma = estimate_sigma(2000, 6, &ModelConstants::published_sigma()).unwrap();
    let ok = (mu - 3.33).abs() <= 0.01 && (sigma - 0.649).abs() <= 0.005;
    report(5, "estimator substitution", ok, format!("M(2000, 6) = {mu:.4}, S(2000, 6) = {sigma:.4}"));
    assert!(ok);
}

#[test]
fn criterion_06_discretization() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut count, mut worst_sum) = (0, 0.0f64);
    let mut exact = true;
    for n in [10usize, 50, 100, 500, 2000, 10_000, 100_000] {
        for k in 1..=10usize.min(n / 3) {
            let mut params = vec![NormalParams::estimate(n, k, &ModelConstants::published_mu(), &ModelConstants::published_sigma()).unwrap()];
            for _ in 0..5 {
                params.push(NormalParams::new(rng.random_range(1.0..8.0), rng.random_range(0.1..2.0)).unwrap());
            }
            for p in params {
                let d = match discretize(p, n, k, DEFAULT_EPSILON) {
                    Ok(d) => d,
                    Err(Error::InfeasibleDiscretization(_)) => continue,
                    Err(e) => panic!("{e}"),
                };
                count += 1;
                let m = d.mass();
                worst_sum = worst_sum.max((m.iter().sum::<f64>() - 1.0).abs());
                let unit = (k * (2 * n - k - 1)) as f64 / (n * n) as f64;
                exact &= m[0] == 1.0 / n as f64 && m[1] == unit;
            }
        }
    }
    let ok = worst_sum <= 1e-9 && exact;
    report(6, "discretization", ok, format!("{count} distributions, max |sum - 1| {worst_sum:.2e}, fixed masses exact {exact}"));
    assert!(ok);
}

#[test]
fn criterion_07_table_reproduction() {
    let ns = [100, 1000, 10_000];
    let etas = [3, 5, 10];
    let calibrated = reproduce_table2(0.05, &ns, &etas, PackInterpretation::TiedToEta).unwrap();
    let column: Vec<f64> = etas.iter().map(|&e| calibrated.cell(100, e).unwrap().depth).collect();
    let column_ok = column.iter().zip([4.3, 2.5, 1.6]).all(|(d, t)| (d - t).abs() <= 0.5);

    let mut monotone = true;
    for interp in [
        PackInterpretation::TiedToEta,
        PackInterpretation::Fixed { c: 8.0, pack: 3 },
        PackInterpretation::Fixed { c: 8.0, pack: 8 },
        PackInterpretation::Fixed { c: 4.0, pack: 2 },
        PackInterpretation::Fixed { c: 12.0, pack: 5 },
    ] {
        let t = reproduce_table2(0.05, &ns, &etas, interp).unwrap();
        for n in ns {
            let col: Vec<f64> = etas.iter().map(|&e| t.cell(n, e).unwrap().depth).collect();
            monotone &= col.windows(2).all(|w| w[0] > w[1]);
        }
    }

    let formula = expected_drawings(20, 4, 3, 2).unwrap();
    let mc = monte_carlo_drawings(20, 4, 3, 2, 1_000_000, 7);
    let mc_rel = ((mc - formula) / formula).abs();
    let mut enum_worst = 0.0f64;
    for n in 2..=8 {
        for a in 1..=3.min(n - 1) {
            for pack in 1..=2.min(n) {
                for ell in 1..=a {
                    let e = expected_drawings(n, a, pack, ell).unwrap();
                    enum_worst = enum_worst.max((e - enumerated_drawings(n, a, pack, ell)).abs());
                }
            }
        }
    }
    let ok = column_ok && monotone && mc_rel <= 0.01 && enum_worst <= 1e-9;
    report(
        7,
        "table reproduction",
        ok,
        format!(
            "n = 100 column {column:.2?} (c = pack = eta), monotone {monotone}, Monte-Carlo rel. error {mc_rel:.2e}, enumeration error {enum_worst:.2e}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_08_token_capture() {
    let (n, attackers_count, runs) = (500usize, 25usize, 1000u64);
    let passes: Vec<usize> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let g = generate_k_growing(n, 6, 10_000 + run).unwrap();
            let origin = ChaCha8Rng::seed_from_u64(run).random_range(0..n);
            let attackers = AttackerSet::uniform(n, attackers_count, &[origin], run ^ 0xacce).unwrap();
            let cfg = SimConfig {
                n,
                k: 6,
                depth: Some(400),
                origin: Some(origin),
                schedule: ScheduleSource::Fixed { p: vec![1.0] },
                seed: run,
                ..SimConfig::default()
            };
            let rule = PassRule::for_config(&cfg, n, 6).unwrap();
            let out = Simulation::new(&g, &cfg, rule).unwrap().run_until(|r| {
                r.kind == EventKind::Receive && r.message.variant() == Variant::Token && attackers.contains(r.actor)
            });
            assert!(!out.completed, "token never reached an attacker");
            out.trace.count(EventKind::TokenPass)
        })
        .collect();
    let mean = passes.iter().sum::<usize>() as f64 / runs as f64;
    let expected = (n - 1) as f64 / attackers_count as f64;
    let ratio = mean / expected;
    let ok = (0.9..=1.1).contains(&ratio);
    report(8, "token capture", ok, format!("mean passes {mean:.2} vs (n - 1)/|A| = {expected:.2}, ratio {ratio:.3}"));
    assert!(ok);
}

#[test]
fn criterion_09_privacy_improvement() {
    let start = Instant::now();
    let runs = 500u64;
    let results: Vec<_> = (0..runs)
        .into_par_iter()
        .map(|seed| {
            let g = generate_k_growing(1000, 6, seed + 1).unwrap();
            let cfg = SimConfig { n: 1000, k: 6, eta: 3, depth: Some(4), seed, ..SimConfig::default() };
            let wide = AttackOptions { pool: PoolMode::AllHonest, ..AttackOptions::default() };
            let r = paired_attack(&g, &cfg, 0.05, wide).unwrap();
            (paired_attack(&g, &cfg, 0.05, AttackOptions::default()).unwrap(), r.diffusion.candidate_count, r.flood.candidate_count)
        })
        .collect();
    // Informational only: the same runs with the candidate pool widened to every honest node.
    let wide_ad = results.iter().map(|r| r.1).sum::<usize>() as f64 / runs as f64;
    let wide_fl = results.iter().map(|r| r.2).sum::<usize>() as f64 / runs as f64;
    let results: Vec<_> = results.into_iter().map(|r| r.0).collect();
    let rate = |f: &dyn Fn(&eta_diffusion::cli::PairedAttack) -> bool| results.iter().filter(|r| f(r)).count() as f64 / runs as f64;
    let size = |f: &dyn Fn(&eta_diffusion::cli::PairedAttack) -> usize| results.iter().map(f).sum::<usize>() as f64 / runs as f64;
    let (ad, fl) = (rate(&|r| r.diffusion.success), rate(&|r| r.flood.success));
    let (ad_size, fl_size) = (size(&|r| r.diffusion.candidate_count), size(&|r| r.flood.candidate_count));
    let elapsed = start.elapsed();
    let ok = ad < fl && ad_size >= 2.0 * fl_size && elapsed < Duration::from_secs(600);
    report(
        9,
        "privacy improvement",
        ok,
        format!(
            "success diffusion {ad:.3} vs flood {fl:.3}; mean centre size {ad_size:.2} vs {fl_size:.2} (ratio {:.2}); widened pool {wide_ad:.2} vs {wide_fl:.2}; {elapsed:.2?}",
            ad_size / fl_size
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_10_protocol_structure() {
    let mut tree_ok = true;
    for (eta, depth) in [(2, 2), (2, 4), (3, 3), (3, 4), (4, 3)] {
        let g = regular_tree(eta, depth + 2);
        let cfg = SimConfig { eta, depth: Some(depth), origin: Some(0), schedule: ScheduleSource::Fixed { p: vec![0.0] }, ..SimConfig::default() };
        let out = run_on_graph(&g, &cfg, PassRule::for_config(&cfg, g.n(), 1).unwrap()).unwrap();
        tree_ok &= out.diffusion_reach.len() as u64 == tree_bound(eta, depth);
    }
    let mut bounded = true;
    for seed in 0..20 {
        let cfg = SimConfig { n: 1000, k: 6, eta: 5, depth: Some(4), schedule: ScheduleSource::Fixed { p: vec![0.0] }, seed, graph_seed: seed, ..SimConfig::default() };
        let (_, out) = run_simulation(&cfg).unwrap();
        bounded &= out.diffusion_reach.len() as u64 <= tree_bound(5, 4);
    }
    let mut flood_all = true;
    for seed in 0..10 {
        let cfg = SimConfig { n: 400, k: 4, depth: Some(1), seed, graph_seed: seed, ..SimConfig::default() };
        let (_, out) = run_simulation(&cfg).unwrap();
        flood_all &= out.infected.len() == 400 && out.flood_start == Some(0.0);
    }
    let cfg = SimConfig { n: 500, k: 6, eta: 3, depth: Some(5), seed: 77, ..SimConfig::default() };
    let a = run_simulation(&cfg).unwrap().1.trace.to_csv().unwrap();
    let b = run_simulation(&cfg).unwrap().1.trace.to_csv().unwrap();
    let reproducible = a == b;
    let ok = tree_ok && bounded && flood_all && reproducible;
    report(
        10,
        "protocol structure",
        ok,
        format!("tree ball equals bound {tree_ok}, bounded on random graphs {bounded}, depth-1 floods all {flood_all}, byte-reproducible {reproducible}"),
    );
    assert!(ok);
}

#[test]
fn initial_state_is_the_source() {
    assert_eq!(TargetState::initial().probs, vec![1.0]);
}
