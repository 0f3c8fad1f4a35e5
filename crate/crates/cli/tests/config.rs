//! Configuration parsing: accepted documents, error locations and exit codes.

use delobs_cli::error::{Location, EXIT_CONFIG};
use delobs_cli::{parse_config, parse_config_with, CliError, PRESETS};
use proptest::prelude::*;

fn config_error(doc: &str) -> (Location, String) {
    match parse_config(doc) {
        Err(e @ CliError::Config { .. }) => {
            assert_eq!(e.exit_code(), EXIT_CONFIG);
            let CliError::Config { at, message } = e else { unreachable!() };
            (at, message)
        }
        Err(other) => panic!("expected a configuration error, got {other}"),
        Ok(_) => panic!("document unexpectedly accepted:\n{doc}"),
    }
}

#[test]
fn every_preset_parses() {
    for (name, _) in PRESETS {
        let (cfg, sc) = parse_config(&format!("system.preset = {name}\n")).unwrap();
        assert_eq!(cfg.preset, *name);
        assert_eq!(cfg.x0.len(), sc.system.n());
    }
}

#[test]
fn comments_blank_lines_and_overrides() {
    let doc = "# a comment\n\nsystem.preset = example1-q1-gated  # trailing\nparams.tau = 0.1\n";
    let (_, sc) = parse_config(doc).unwrap();
    assert_eq!(sc.params.tau, 0.1);
    let (_, sc) = parse_config_with(doc, &[("params.tau".into(), "0.2".into())]).unwrap();
    assert_eq!(sc.params.tau, 0.2);
}

#[test]
fn zero_tau_is_rejected() {
    let (at, _) = config_error("system.preset = example1-q1-gated\nparams.tau = 0\n");
    assert_eq!(at.field.as_deref(), Some("params.tau"));
}

#[test]
fn h2_gap_must_be_a_multiple_of_tau() {
    // τ = 0.05; a gap of 2.5τ between T_1 and T_2.
    let times: Vec<String> = [0.0, 0.1, 0.225]
        .iter()
        .chain((1..=25).map(|k| 0.225 + 2.0 * k as f64).collect::<Vec<_>>().iter())
        .map(|t| t.to_string())
        .collect();
    let doc = format!("system.preset = example1-q1-gated\n\nh2.T = {}\n", times.join(", "));
    let (at, message) = config_error(&doc);
    assert_eq!(at.field.as_deref(), Some("h2.T"));
    assert_eq!(at.line, Some(3));
    assert!(message.contains("multiple"), "{message}");
}

#[test]
fn duplicate_keys_report_both_lines() {
    let (at, message) = config_error("system.preset = contractive\nparams.h = 1e-3\nparams.h = 2e-3\n");
    assert_eq!(at.line, Some(3));
    assert_eq!(at.field.as_deref(), Some("params.h"));
    assert!(message.contains("line 2"), "{message}");
}

#[test]
fn unknown_and_misplaced_keys() {
    let (at, message) = config_error("system.preset = contractive\nparams.bogus = 1\n");
    assert_eq!((at.line, at.field.as_deref()), (Some(2), Some("params.bogus")));
    assert!(message.contains("unknown key"));
    let (at, message) = config_error("system.preset = contractive\nsystem.q = 1\n");
    assert_eq!(at.field.as_deref(), Some("system.q"));
    assert!(message.contains("not used"), "{message}");
}

#[test]
fn missing_or_unknown_preset() {
    let (at, _) = config_error("params.tau = 0.1\n");
    assert_eq!(at.field.as_deref(), Some("system.preset"));
    let (at, message) = config_error("system.preset = nope\n");
    assert_eq!((at.line, at.field.as_deref()), (Some(1), Some("system.preset")));
    assert!(message.contains("example1-q1-gated"), "{message}");
}

#[test]
fn malformed_values() {
    let (at, _) = config_error("system.preset = contractive\nparams.tau = abc\n");
    assert_eq!(at.line, Some(2));
    let (at, _) = config_error("system.preset = contractive\nplant.x0 = 1, 2, 3\n");
    assert_eq!(at.field.as_deref(), Some("plant.x0"));
    let (at, _) = config_error("system.preset = contractive\nparams.tau = inf\n");
    assert_eq!(at.field.as_deref(), Some("params.tau"));
}

proptest! {
    /// A line without `=` is reported at its own line number.
    #[test]
    fn line_without_equals_is_located(blank in 0usize..6, junk in "[a-z ]{1,12}") {
        prop_assume!(!junk.trim().is_empty());
        let doc = format!("system.preset = contractive\n{}{junk}\n", "\n".repeat(blank));
        let (at, _) = config_error(&doc);
        prop_assert_eq!(at.line, Some(blank + 2));
    }

    /// Any positive finite horizon round-trips through the parser.
    #[test]
    fn numeric_values_round_trip(h in 1.0..100.0f64) {
        let (_, sc) = parse_config(&format!("system.preset = contractive\nparams.horizon = {h}\n")).unwrap();
        prop_assert_eq!(sc.params.horizon, h);
    }
}
