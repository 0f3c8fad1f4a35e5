//! Command-line front end for the delayed switching observer.
//!
//! The binary `delobs` exposes five subcommands, each driven by a scenario
//! configuration (a document or a built-in preset, see [`config`]):
//!
//! * `simulate` — plant simulation and the H1 check (`plant.csv`);
//! * `synthesize` — gain synthesis and certification (`schedule.csv`);
//! * `observe` — the single τ-delayed observer (`observer.csv`);
//! * `switch` — the switching observer over growing radii (`switching.csv`);
//! * `verify` — every certificate plus the strong-causality audit.
//!
//! Exit codes are defined in [`error`].

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::Outcome;
pub use config::{parse_config, parse_config_with, RunConfig, PRESETS};
pub use error::{CliError, Result};
