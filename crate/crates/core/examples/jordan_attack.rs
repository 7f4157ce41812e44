//! Colluding observers run the Jordan-centre estimator against a diffusion
//! broadcast and against a plain flood from the same source.

use eta_diffusion::cli::paired_attack;
use eta_diffusion::adversary::AttackOptions;
use eta_diffusion::graph::generate_k_growing;
use eta_diffusion::protocol::SimConfig;

fn main() -> eta_diffusion::Result<()> {
    let g = generate_k_growing(1000, 6, 3)?;
    let runs = 100;
    let (mut ad, mut flood, mut ad_size, mut flood_size) = (0, 0, 0, 0);
    for seed in 0..runs {
        let cfg = SimConfig { eta: 3, depth: Some(4), seed, ..SimConfig::default() };
        let r = paired_attack(&g, &cfg, 0.05, AttackOptions::default())?;
        ad += r.diffusion.success as usize;
        flood += r.flood.success as usize;
        ad_size += r.diffusion.candidate_count;
        flood_size += r.flood.candidate_count;
    }
    let runs = runs as f64;
    println!("5% observers, {runs} runs");
    println!("diffusion: success {:.3}, mean centre size {:.2}", ad as f64 / runs, ad_size as f64 / runs);
    println!("flood:     success {:.3}, mean centre size {:.2}", flood as f64 / runs, flood_size as f64 / runs);
    Ok(())
}
