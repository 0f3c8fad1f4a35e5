//! `delobs`: simulate, synthesize, observe, switch and verify.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use delobs_cli::commands::{cmd_observe, cmd_simulate, cmd_switch, cmd_synthesize, cmd_verify};
use delobs_cli::error::CliError;
use delobs_cli::{parse_config_with, Result, PRESETS};

#[derive(Parser)]
#[command(name = "delobs", version, about = "Delayed switching observers for triangular systems with vanishing couplings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the plant and check forward completeness.
    Simulate(Source),
    /// Synthesize and certify the gain schedule.
    Synthesize(Source),
    /// Run the single delayed observer.
    Observe(Source),
    /// Run the switching observer.
    Switch(Source),
    /// Re-run every certificate and the strong-causality audit.
    Verify(Source),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct Source {
    /// Configuration document.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
    set: Vec<(String, String)>,
    /// Output directory for the CSV artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn load(src: &Source) -> Result<(delobs_cli::RunConfig, delobs_core::Scenario)> {
    let doc = match (&src.config, &src.preset) {
        (Some(path), _) => std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?,
        (None, Some(name)) => format!("system.preset = {name}\n"),
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    let mut overrides = src.set.clone();
    if let Some(out) = &src.out {
        overrides.push(("output.dir".to_string(), out.display().to_string()));
    }
    parse_config_with(&doc, &overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (src, run): (&Source, fn(&_, &_) -> Result<delobs_cli::Outcome>) = match &cli.command {
        Command::Simulate(s) => (s, cmd_simulate),
        Command::Synthesize(s) => (s, cmd_synthesize),
        Command::Observe(s) => (s, cmd_observe),
        Command::Switch(s) => (s, cmd_switch),
        Command::Verify(s) => (s, cmd_verify),
        Command::Presets => {
            for (name, about) in PRESETS {
                println!("{name:20} {about}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let result = load(src).and_then(|(cfg, sc)| run(&cfg, &sc));
    match result {
        Ok(outcome) => {
            // A closed pipe (e.g. `| head`) is not an error of the command.
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(outcome.report.as_bytes());
            for path in &outcome.artifacts {
                let _ = writeln!(out, "wrote {}", path.display());
            }
            ExitCode::from(outcome.exit_code)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
