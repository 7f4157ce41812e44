//! Expected spreading depth before the observers collect enough connections
//! to pin the source, for several network sizes and forwarding degrees.

use eta_diffusion::adversary::{deanonymization_threshold, reproduce_table2, token_capture_expectation, PackInterpretation};

fn main() -> eta_diffusion::Result<()> {
    let table = reproduce_table2(0.05, &[100, 1000, 10_000], &[3, 5, 10], PackInterpretation::TiedToEta)?;
    print!("{}", table.to_csv());

    let fixed = reproduce_table2(0.05, &[100, 1000, 10_000], &[3, 5, 10], PackInterpretation::Fixed { c: 8.0, pack: 3 })?;
    println!("with c = 8 and packs of 3:");
    print!("{}", fixed.to_csv());

    let t = deanonymization_threshold(1000, 50, 8.0)?;
    println!("n = 1000, 50 observers: {t:?}");
    for n in [500, 10_000] {
        let a = n / 20;
        println!("hops before an observer holds the token (n = {n}, {a} observers): {:.2}", token_capture_expectation(n, a)?);
    }
    Ok(())
}
