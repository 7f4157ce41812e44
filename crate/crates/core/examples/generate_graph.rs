//! Grow a k-growing graph and print its hop-distance histogram.
//!
//! cargo run --example generate_graph -- 2000 6 1

use eta_diffusion::graph::{generate_k_growing, k_growing_edge_count, pooled_histogram, SourceSample};

fn main() -> eta_diffusion::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (n, k, seed) = match args[..] {
        [n, k, seed, ..] => (n as usize, k as usize, seed),
        _ => (2000, 6, 1),
    };
    let g = generate_k_growing(n, k, seed)?;
    println!("n = {n}, k = {k}, seed = {seed}");
    println!("edges = {} (expected {})", g.edge_count(), k_growing_edge_count(n, k));
    println!("mean degree = {:.3}, connected = {}", g.mean_degree(), g.is_connected());

    let h = pooled_histogram(&g, SourceSample::default_for(n))?;
    let pairs = (h.total() - n as u64) as f64;
    println!("mean distance = {:.4}", h.mean_excluding_self());
    for (d, &c) in h.counts.iter().enumerate().skip(1) {
        let share = c as f64 / pairs;
        println!("{d:>3} {share:>8.5} {}", "#".repeat((share * 60.0).round() as usize));
    }
    Ok(())
}
