//! Scenario configuration documents.
//!
//! A document is UTF-8 text with one `key = value` per line; `#` starts a
//! comment and blank lines are ignored.  Keys carry a dotted section
//! prefix:
//!
//! | key | meaning |
//! |-----|---------|
//! | `system.preset` | built-in scenario (required, see [`PRESETS`]) |
//! | `system.q`, `system.alpha0` | Example-1 exponent and gain |
//! | `system.c1`, `system.c2`, `system.k2`, `system.k3`, `system.gamma` | synthetic three-state system |
//! | `input.gating` | `always`, `on-first:F` or `off-first:F` |
//! | `input.period` | period of the gated input and of the default H2 sequence |
//! | `h2.T` | comma-separated H2 times `T_0, T_1, …` (replaces the periodic sequence) |
//! | `params.t0`, `params.tau`, `params.L`, `params.R`, `params.h`, `params.delta_a`, `params.horizon` | numerical parameters |
//! | `params.xi` | `auto` or a positive number |
//! | `params.j_shrink`, `params.i_fraction` | window trimming |
//! | `params.sphere_points`, `params.cert_samples`, `params.seed` | sampling |
//! | `params.phi_rule` | `tight` or `lattice` |
//! | `params.envelopes` | `analytic` or `numeric` |
//! | `plant.x0` | comma-separated initial state |
//! | `output.dir` | artifact directory |

use std::collections::BTreeMap;
use std::path::PathBuf;

use delobs_core::plant::{contractive_scenario, validate_t_seq, EnvelopeMode};
use delobs_core::{Example1Options, Gating, Params, PhiRule, Scenario, Synthetic3Options, XiSpec};

use crate::error::{CliError, Result};

/// Built-in presets: name, description.
pub const PRESETS: &[(&str, &str)] = &[
    ("example1-q1-gated", "Example 1 with q = 1, input on for half of each 2.0-long period, |x0| = 1"),
    ("example1-switch", "Example 1 (q = 1), period 0.4, |x0| = 5: the switching-observer scenario"),
    ("synthetic3", "three-state triangular system with strong couplings, tau = 0.2"),
    ("contractive", "contractive two-state test system for the injection-free observer"),
];

/// The system family and its options.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    Example1(Example1Options),
    Synthetic3(Synthetic3Options),
    Contractive { period: f64, params: Params },
}

impl SystemSpec {
    pub fn params(&self) -> &Params {
        match self {
            SystemSpec::Example1(o) => &o.params,
            SystemSpec::Synthetic3(o) => &o.params,
            SystemSpec::Contractive { params, .. } => params,
        }
    }

    fn params_mut(&mut self) -> &mut Params {
        match self {
            SystemSpec::Example1(o) => &mut o.params,
            SystemSpec::Synthetic3(o) => &mut o.params,
            SystemSpec::Contractive { params, .. } => params,
        }
    }

    fn period_mut(&mut self) -> &mut f64 {
        match self {
            SystemSpec::Example1(o) => &mut o.period,
            SystemSpec::Synthetic3(o) => &mut o.period,
            SystemSpec::Contractive { period, .. } => period,
        }
    }
}

/// A fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub system: SystemSpec,
    /// Explicit H2 sequence (`None`: periodic with the input period).
    pub t_seq: Option<Vec<f64>>,
    /// Initial plant state.
    pub x0: Vec<f64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// The configuration of a built-in preset.
    pub fn preset(name: &str) -> Result<Self> {
        let (system, x0) = match name {
            "example1-q1-gated" => (SystemSpec::Example1(Example1Options::default()), vec![0.6, 0.8]),
            "example1-switch" => (
                SystemSpec::Example1(Example1Options {
                    period: 0.4,
                    ..Default::default()
                }),
                vec![3.0, 4.0],
            ),
            "synthetic3" => (SystemSpec::Synthetic3(Synthetic3Options::default()), vec![0.48, 0.6, 0.64]),
            "contractive" => (
                SystemSpec::Contractive {
                    period: 2.0,
                    params: Params::default(),
                },
                vec![0.6, 0.8],
            ),
            other => {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                return Err(CliError::config(
                    None,
                    Some("system.preset"),
                    format!("unknown preset `{other}` (available: {})", names.join(", ")),
                ));
            }
        };
        Ok(Self {
            preset: name.to_string(),
            system,
            t_seq: None,
            x0,
            out_dir: PathBuf::from("out"),
        })
    }

    pub fn params(&self) -> &Params {
        self.system.params()
    }

    /// Builds and validates the scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut sc = match &self.system {
            SystemSpec::Example1(o) => o.build(),
            SystemSpec::Synthetic3(o) => o.build(),
            SystemSpec::Contractive { period, params } => contractive_scenario(params.clone(), *period),
        }
        .map_err(|e| CliError::config(None, None, e.to_string()))?;
        if let Some(t) = &self.t_seq {
            validate_t_seq(t, sc.params.t0, sc.params.tau)
                .map_err(|e| CliError::config(None, Some("h2.T"), e.to_string()))?;
            sc.t_seq = t.clone();
            sc.validate().map_err(|e| CliError::config(None, Some("h2.T"), e.to_string()))?;
        }
        if self.x0.len() != sc.system.n() {
            return Err(CliError::config(
                None,
                Some("plant.x0"),
                format!("{} components given, the system has {}", self.x0.len(), sc.system.n()),
            ));
        }
        Ok(sc)
    }
}

/// One `key = value` entry with its line number (0 for overrides).
#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

fn tokenize(doc: &str) -> Result<BTreeMap<String, Entry>> {
    let mut map = BTreeMap::new();
    for (i, raw) in doc.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let Some((k, v)) = text.split_once('=') else {
            return Err(CliError::config(Some(line), None, format!("expected `key = value`, found `{text}`")));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(CliError::config(Some(line), Some(k), "empty key or value"));
        }
        if let Some(prev) = map.insert(
            k.to_string(),
            Entry {
                line,
                value: v.to_string(),
            },
        ) {
            return Err(CliError::config(
                Some(line),
                Some(k),
                format!("duplicate key (first set on line {})", prev.line),
            ));
        }
    }
    Ok(map)
}

fn num(e: &Entry, key: &str) -> Result<f64> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::config(Some(e.line), Some(key), format!("`{}` is not a finite number", e.value)))
}

fn positive(e: &Entry, key: &str) -> Result<f64> {
    let v = num(e, key)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(line_of(e), Some(key), format!("`{}` must be positive", e.value)))
    }
}

fn count(e: &Entry, key: &str) -> Result<usize> {
    e.value
        .parse::<usize>()
        .map_err(|_| CliError::config(Some(e.line), Some(key), format!("`{}` is not a nonnegative integer", e.value)))
}

fn list(e: &Entry, key: &str) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::config(Some(e.line), Some(key), format!("`{}` is not a finite number", s.trim())))
        })
        .collect()
}

fn line_of(e: &Entry) -> Option<usize> {
    (e.line > 0).then_some(e.line)
}

/// Parses a configuration document; `overrides` (`key`, `value`) replace or
/// add entries after the document is read.
pub fn parse_config_with(doc: &str, overrides: &[(String, String)]) -> Result<(RunConfig, Scenario)> {
    let mut map = tokenize(doc)?;
    for (k, v) in overrides {
        map.insert(
            k.trim().to_string(),
            Entry {
                line: 0,
                value: v.trim().to_string(),
            },
        );
    }
    let preset = map
        .remove("system.preset")
        .ok_or_else(|| CliError::config(None, Some("system.preset"), "missing required key"))?;
    let mut cfg = RunConfig::preset(&preset.value).map_err(|e| match e {
        CliError::Config { message, .. } => CliError::config(line_of(&preset), Some("system.preset"), message),
        other => other,
    })?;
    for (key, e) in &map {
        let line = line_of(e);
        let wrong_family = || CliError::config(line, Some(key), format!("not used by preset `{}`", cfg.preset));
        match key.as_str() {
            "system.q" => match &mut cfg.system {
                SystemSpec::Example1(o) => {
                    o.q = e.value.parse().map_err(|_| CliError::config(line, Some(key), "q must be an odd positive integer"))?
                }
                _ => return Err(wrong_family()),
            },
            "system.alpha0" => match &mut cfg.system {
                SystemSpec::Example1(o) => o.alpha0 = num(e, key)?,
                _ => return Err(wrong_family()),
            },
            "system.c1" | "system.c2" | "system.k2" | "system.k3" | "system.gamma" => {
                let v = num(e, key)?;
                match &mut cfg.system {
                    SystemSpec::Synthetic3(o) => match key.as_str() {
                        "system.c1" => o.c1 = v,
                        "system.c2" => o.c2 = v,
                        "system.k2" => o.k2 = v,
                        "system.k3" => o.k3 = v,
                        _ => o.gamma = v,
                    },
                    _ => return Err(wrong_family()),
                }
            }
            "input.gating" => {
                let g = Gating::parse(&e.value).ok_or_else(|| {
                    CliError::config(line, Some(key), "expected `always`, `on-first:F` or `off-first:F` with 0 < F < 1")
                })?;
                match &mut cfg.system {
                    SystemSpec::Example1(o) => o.gating = g,
                    SystemSpec::Synthetic3(o) => o.gating = g,
                    SystemSpec::Contractive { .. } => return Err(wrong_family()),
                }
            }
            "input.period" => *cfg.system.period_mut() = num(e, key)?,
            "h2.T" => cfg.t_seq = Some(list(e, key)?),
            "plant.x0" => cfg.x0 = list(e, key)?,
            "output.dir" => cfg.out_dir = PathBuf::from(&e.value),
            k if k.starts_with("params.") => apply_param(cfg.system.params_mut(), key, e)?,
            _ => return Err(CliError::config(line, Some(key), "unknown key")),
        }
    }
    let sc = cfg.scenario().map_err(|err| match err {
        // Attach the line of the offending field when we know it.
        CliError::Config { at, message } => {
            let line = at.field.as_ref().and_then(|f| map.get(f)).and_then(line_of).or(at.line);
            CliError::Config {
                at: crate::error::Location { line, field: at.field },
                message,
            }
        }
        other => other,
    })?;
    Ok((cfg, sc))
}

/// Parses a configuration document.
pub fn parse_config(doc: &str) -> Result<(RunConfig, Scenario)> {
    parse_config_with(doc, &[])
}

fn apply_param(p: &mut Params, key: &str, e: &Entry) -> Result<()> {
    let line = line_of(e);
    match key {
        "params.t0" => p.t0 = num(e, key)?,
        "params.tau" => p.tau = positive(e, key)?,
        "params.L" => {
            p.l = num(e, key)?;
            if p.l <= 1.0 {
                return Err(CliError::config(line, Some(key), "L must exceed 1"));
            }
        }
        "params.R" => p.r = positive(e, key)?,
        "params.h" => p.h = positive(e, key)?,
        "params.delta_a" => p.delta_a = positive(e, key)?,
        "params.horizon" => p.horizon = positive(e, key)?,
        "params.j_shrink" => p.j_shrink = num(e, key)?,
        "params.i_fraction" => p.i_fraction = num(e, key)?,
        "params.sphere_points" => p.sphere_points = count(e, key)?,
        "params.cert_samples" => p.cert_samples = count(e, key)?,
        "params.seed" => {
            p.seed = e
                .value
                .parse()
                .map_err(|_| CliError::config(line, Some(key), "seed must be a nonnegative integer"))?
        }
        "params.xi" => {
            p.xi = if e.value == "auto" {
                XiSpec::Auto
            } else {
                XiSpec::Value(num(e, key)?)
            }
        }
        "params.phi_rule" => {
            p.phi_rule = match e.value.as_str() {
                "tight" => PhiRule::Tight,
                "lattice" => PhiRule::Lattice,
                _ => return Err(CliError::config(line, Some(key), "expected `tight` or `lattice`")),
            }
        }
        "params.envelopes" => {
            p.envelopes = match e.value.as_str() {
                "analytic" => EnvelopeMode::Analytic,
                "numeric" => EnvelopeMode::Numeric,
                _ => return Err(CliError::config(line, Some(key), "expected `analytic` or `numeric`")),
            }
        }
        _ => return Err(CliError::config(line, Some(key), "unknown key")),
    }
    Ok(())
}
