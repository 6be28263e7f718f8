//! Drives a full `compare` run from a TOML configuration, the same path the
//! command-line tool takes.
//!
//! ```bash
//! cargo run --release --example config_run -- crates/core/examples/configs/hammer_taps.toml /tmp/hammer
//! ```

use std::path::PathBuf;

use ufus::cli::{run_subcommand, RunOptions, Subcommand};

fn main() -> ufus::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/hammer_taps.toml")
    });
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("compare-out"));
    let summary = run_subcommand(
        Subcommand::Compare,
        &RunOptions { config, out, seed: None, estimator: None },
    )?;
    for run in &summary.manifest.runs {
        println!("{:>10}: latency {} samples", run.name, run.latency_steps);
    }
    print!("{}", std::fs::read_to_string(summary.out_dir.join("report.txt"))?);
    Ok(())
}
