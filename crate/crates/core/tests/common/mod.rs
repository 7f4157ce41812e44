//! Oracles shared by integration tests.
#![allow(dead_code)]

use eta_diffusion::graph::Graph;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Draws packs of distinct nodes until `ell` distinct attackers (ids `0..a`) have shown up.
pub fn monte_carlo_drawings(n: usize, a: usize, pack: usize, ell: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0u64;
    let mut seen = vec![false; a];
    for _ in 0..trials {
        seen.iter_mut().for_each(|s| *s = false);
        let (mut got, mut draws) = (0, 0u64);
        while got < ell {
            draws += 1;
            for v in sample(&mut rng, n, pack) {
                if v < a && !seen[v] {
                    seen[v] = true;
                    got += 1;
                }
            }
        }
        total += draws;
    }
    total as f64 / trials as f64
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Expected drawings from the absorbing chain over "attackers collected so far",
/// with transition counts obtained by listing every pack.
pub fn enumerated_drawings(n: usize, a: usize, pack: usize, ell: usize) -> f64 {
    let packs = subsets(n, pack);
    let total = packs.len() as f64;
    let mut e = vec![0.0; ell + a + 1];
    for m in (0..ell).rev() {
        // Collected attackers are 0..m; fresh ones are m..a.
        let mut counts = vec![0usize; pack + 1];
        for p in &packs {
            counts[p.iter().filter(|&&v| v >= m && v < a).count()] += 1;
        }
        let stay = counts[0] as f64 / total;
        let onward: f64 = (1..=pack).map(|r| counts[r] as f64 / total * e[(m + r).min(ell)]).sum();
        e[m] = (1.0 + onward) / (1.0 - stay);
    }
    e[0]
}

/// Tree where the root and every internal node have exactly `eta + 1` neighbours.
pub fn regular_tree(eta: usize, levels: usize) -> Graph {
    let mut edges = Vec::new();
    let mut frontier = vec![0usize];
    let mut next_id = 1;
    for level in 0..levels {
        let mut next = Vec::new();
        for &v in &frontier {
            let children = if level == 0 { eta + 1 } else { eta };
            for _ in 0..children {
                edges.push((v, next_id));
                next.push(next_id);
                next_id += 1;
            }
        }
        frontier = next;
    }
    Graph::from_edges(next_id, &edges).unwrap()
}

/// `f` truncated to distances `0..t` and renormalized.
pub fn truncated(f: &[f64], t: usize) -> Vec<f64> {
    let head = &f[..t.min(f.len())];
    let s: f64 = head.iter().sum();
    head.iter().map(|x| x / s).collect()
}

/// One step of the outward-or-stay chain written as a dense matrix product.
pub fn step(state: &[f64], p: &[f64]) -> Vec<f64> {
    let t = state.len();
    let mut m = vec![vec![0.0; t]; t + 1];
    for i in 0..t {
        m[i][i] = 1.0 - p[i];
        m[i + 1][i] = p[i];
    }
    m.iter().map(|row| row.iter().zip(state).map(|(a, b)| a * b).sum()).collect()
}
