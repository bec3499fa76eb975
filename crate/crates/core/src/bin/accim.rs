use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use accim::report::{exit_code, run, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "accim",
    version,
    about = "Quadratic maps with holes: checks, towers, conditionally invariant densities, escape rates"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON config; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides `threads` in the config).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Class M conditions, hole assumptions, covering property.
    Check,
    /// Build the tower and audit tails, hole fall and distortion.
    Tower,
    /// Eigenvalue and density from the Ulam and tower operators.
    Accim,
    /// Monte Carlo survival and escape rate.
    Escape,
    /// Small-hole limit along a nested family.
    Shrink,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Check => Command::Check,
            Cmd::Tower => Command::Tower,
            Cmd::Accim => Command::Accim,
            Cmd::Escape => Command::Escape,
            Cmd::Shrink => Command::Shrink,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                return ExitCode::from(1);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    let out = cli
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("accim-{}", command.name())));
    let result = run(command, &cfg, &out);
    let code = exit_code(command, &result);
    match &result {
        Ok(r) => {
            let status = if r.outcome.passed {
                "ok"
            } else {
                "check failed"
            };
            eprintln!("{}: {status}; wrote {}", command.name(), r.out.display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(code as u8)
}
