use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tnlab_cli::report::exit_code_for;
use tnlab_cli::{experiments, Config};

/// Run one tnlab experiment from a JSON config.
#[derive(Debug, Parser)]
#[command(name = "tnlab", version)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config, default `out/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Step refinement factor for convergence checks.
    #[arg(long)]
    dt_refine: Option<usize>,
}

fn run(args: Args) -> Result<i32, tnlab::Error> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.dt_refine {
        if k < 2 {
            return Err(tnlab::Error::validation("--dt-refine must be at least 2"));
        }
        cfg.dt_refine = Some(k);
    }
    let out = args.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    let outcome = experiments::run(&cfg)?;
    outcome.write(&out)?;
    for c in &outcome.summary.checks {
        println!("{:<4} {} = {:.3e} (expected {:.3e}, tol {:.1e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.value, c.expected, c.tol);
    }
    println!("wrote {}", out.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match run(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("tnlab: {e}");
            exit_code_for(&e)
        }
    };
    ExitCode::from(code as u8)
}
