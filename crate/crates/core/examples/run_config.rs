//! Drives a subcommand from a JSON config, as the binary does, and lists
//! the files it wrote.
//!
//! cargo run --release --example run_config

use accim::report::{run, Command, RunConfig};

fn main() -> accim::Result<()> {
    let cfg = RunConfig::from_json(
        r#"{ "hole": [[0.28, 0.30]], "samples": 200000, "escape": { "conditional": null } }"#,
    )?;
    let out = std::env::temp_dir().join("accim-example-escape");
    let r = run(Command::Escape, &cfg, &out)?;
    println!("lambda MC {}", r.outcome.report["lambda_mc"]);
    println!("lambda Ulam {}", r.outcome.report["lambda_ulam"]);
    for e in std::fs::read_dir(&r.out)? {
        println!("  {}", e?.file_name().to_string_lossy());
    }
    Ok(())
}
