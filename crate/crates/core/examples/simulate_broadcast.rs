//! One broadcast on a random graph: who held the token, how far the diffusion
//! phase spread, and the first lines of the event trace.

use eta_diffusion::protocol::{run_simulation, EventKind, SimConfig};

fn main() -> eta_diffusion::Result<()> {
    let cfg = SimConfig {
        n: 1000,
        k: 6,
        eta: 3,
        depth: Some(4),
        seed: 7,
        ..SimConfig::default()
    };
    let (g, out) = run_simulation(&cfg)?;
    println!("graph: {} nodes, {} edges", g.n(), g.edge_count());
    println!("source {} passed the token along {:?}", out.source, out.token_path);
    println!("diffusion reach {} nodes, flood started at {:?}", out.diffusion_reach.len(), out.flood_start);
    println!("all {} nodes infected by t = {:.3}", out.infected.len(), out.end_time);
    for kind in [EventKind::TokenPass, EventKind::Keep, EventKind::Timeout, EventKind::Send] {
        println!("  {kind:<10} {}", out.trace.count(kind));
    }
    let csv = out.trace.to_csv()?;
    for line in csv.lines().take(8) {
        println!("{line}");
    }
    println!("{}", serde_json::to_string_pretty(&out.summary(&cfg))?);
    Ok(())
}
