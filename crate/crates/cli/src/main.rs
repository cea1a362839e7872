//! Command-line front end for the spherebraid experiments.
//!
//! ```text
//! spherebraid <COMMAND> [--config PATH] [--seed INT] [--samples INT]
//!             [--out DIR] [--measure prob|2pi] [--p REAL] [--threads INT]
//! ```
//!
//! Commands: gg-check, psi-bound, embed-demo, braid-of-flow, coarea-check,
//! lp-length, phi-estimate. Each writes `<command>.csv` and `<command>.json`
//! into `--out` and prints a short summary.
//!
//! Exit codes: 0 pass, 2 numerical tolerance failure, 3 degeneracy or
//! rejection budget exceeded, 4 invalid configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use spherebraid::exec::{with_threads, Exec};
use spherebraid::run::{execute, merge_overrides, Command, Measure, EXIT_INVALID};

#[derive(Parser)]
#[command(name = "spherebraid", version, about = "Braid quasimorphisms of area-preserving sphere flows")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Monte Carlo slope of Φ against the closed formula for a radial flow.
    GgCheck(Common),
    /// Scan of the radial integral ψ₀(|a|) against (1 + |a|²)^{-1/2}.
    PsiBound(Common),
    /// Sign matrix and bi-Lipschitz bounds of the annulus embedding.
    EmbedDemo(Common),
    /// Braid word of one closed loop.
    BraidOfFlow(Common),
    /// Crossing counts against total angular variation on random loops.
    CoareaCheck(Common),
    /// Lᵖ length of a radial flow for several durations.
    LpLength(Common),
    /// Raw estimates of Φ, optionally with a defect monitor.
    PhiEstimate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count (directions for coarea-check, vectors for embed-demo).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_parser = ["prob", "2pi"])]
    measure: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Run without the thread pool.
    #[arg(long)]
    sequential: bool,
}

impl Sub {
    fn split(&self) -> (Command, &Common) {
        match self {
            Sub::GgCheck(c) => (Command::GgCheck, c),
            Sub::PsiBound(c) => (Command::PsiBound, c),
            Sub::EmbedDemo(c) => (Command::EmbedDemo, c),
            Sub::BraidOfFlow(c) => (Command::BraidOfFlow, c),
            Sub::CoareaCheck(c) => (Command::CoareaCheck, c),
            Sub::LpLength(c) => (Command::LpLength, c),
            Sub::PhiEstimate(c) => (Command::PhiEstimate, c),
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<Value, String> {
    let Some(path) = path else {
        return Ok(json!({}));
    };
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

fn overrides(cmd: Command, c: &Common) -> Vec<(&'static str, Value)> {
    let mut o = Vec::new();
    if let Some(s) = c.seed {
        o.push(("seed", json!(s)));
    }
    if let Some(n) = c.samples {
        let key = match cmd {
            Command::CoareaCheck => "directions",
            Command::EmbedDemo => "vectors",
            _ => "samples",
        };
        o.push((key, json!(n)));
    }
    if let Some(m) = &c.measure {
        o.push(("measure", json!(m)));
    }
    if let Some(p) = c.p {
        o.push(("p", json!(p)));
    }
    o
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID as u8 } else { 0 });
        }
    };
    let (cmd, common) = cli.command.split();
    if let Some(m) = &common.measure {
        if let Err(e) = Measure::parse(m) {
            eprintln!("{e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    }
    let config = match load_config(common.config.as_ref()).and_then(|c| {
        merge_overrides(c, &overrides(cmd, common)).map_err(|e| e.to_string())
    }) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", cmd.name());
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let exec = if common.sequential { Exec::Sequential } else { Exec::Parallel };
    let outcome = match common.threads {
        Some(t) => with_threads(t, || execute(cmd, &config, exec)),
        None => execute(cmd, &config, exec),
    };
    print!("{}", outcome.stdout);
    if let Err(e) = outcome.write_to(&common.out) {
        eprintln!("cannot write artifacts to {}: {e}", common.out.display());
        return ExitCode::from(EXIT_INVALID as u8);
    }
    ExitCode::from(outcome.exit_code as u8)
}
