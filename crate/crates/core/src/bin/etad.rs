use clap::Parser;
use eta_diffusion::cli::{exit_code, run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(r) => {
            println!("{}", r.dir.display());
            println!("{}", r.message.trim_end());
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let eta_diffusion::Error::Infeasible { violations } = &e {
                for v in violations {
                    eprintln!("  step {} distance {} needs p = {:.6}", v.t, v.i, v.required);
                }
            }
            std::process::exit(exit_code(&e));
        }
    }
}
