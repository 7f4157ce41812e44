//! Solve for per-step forwarding probabilities, then smooth an infeasible target.

use eta_diffusion::forwarding::{check_feasibility, evolve, schedule, TargetState};
use eta_diffusion::Error;

fn show(f: &[f64]) -> eta_diffusion::Result<()> {
    println!("target {f:?}");
    match schedule(f, f.len(), false) {
        Ok(s) => println!("  feasible, combined pass probabilities {:.4?}", s.combined),
        Err(Error::Infeasible { violations }) => {
            for v in &violations {
                println!("  step {} distance {} would need p = {:.4}", v.t, v.i, v.required);
            }
            let s = schedule(f, f.len(), true)?;
            println!("  smoothed: combined {:.4?}, max deviation {:.4}", s.combined, s.deviation);
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn main() -> eta_diffusion::Result<()> {
    show(&[0.1, 0.3, 0.6])?;
    show(&[1.0 / 12.0, 1.0 / 12.0, 10.0 / 12.0])?;

    // Replaying the matrices from the initial state lands exactly on the target.
    let f = [0.05, 0.15, 0.4, 0.3, 0.1];
    assert!(check_feasibility(&f, f.len())?.is_empty());
    let s = schedule(&f, f.len(), false)?;
    let mut state = TargetState::initial();
    for m in &s.per_step {
        state = evolve(&state, m)?;
    }
    println!("replayed {:.6?}", state.probs);
    println!("{}", s.to_json()?);
    Ok(())
}
