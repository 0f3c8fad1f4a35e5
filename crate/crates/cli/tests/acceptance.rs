//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails.  Every tolerance is a named constant below.

use std::process::ExitCode;
use std::time::Instant;

use delobs_cli::commands::{run_observation, run_switch, run_verification, Observation};
use delobs_cli::{parse_config_with, RunConfig};
use delobs_core::switching::saturated_rhs;
use delobs_core::{run_open_loop, simulate_plant, CertificateReport, Scenario};

/// Smallest eigenvalue accepted for `P_R ≥ I`.
const MIN_EIG: f64 = 1.0 - 1e-9;
/// Relative tolerance of `det(P_m − I) = (L−1)^m`.
const DET_TOL: f64 = 1e-8;
/// Relative slack of the error envelope.
const ENVELOPE_SLACK: f64 = 1e-3;
/// Required reduction of `|e|` over the horizon.
const CONVERGENCE_FACTOR: f64 = 1e-2;
/// Largest accepted ratio `|e(T_{ν+1}+τ)| / |e(T_ν+τ)|`.
const GEOMETRIC_RATIO: f64 = 0.367_879_441_171_442_33 * 1.05;
/// Noise floor, as a fraction of `|e(t̄0)|`.  A step `ν → ν+1` is checked
/// when `|e(T_ν+τ)|` lies above it and passes when the next value meets
/// the geometric bound or has reached the floor (where the error only
/// reflects integration round-off).
const RATIO_FLOOR: f64 = 1e-11;
/// Minimum number of windows in the horizon for the convergence check.
const MIN_WINDOWS: usize = 10;
/// Relative slack of the per-stage bound `1/m`.
const STAGE_SLACK: f64 = 1e-3;
/// First switching stage whose guarantees are checked.
const FIRST_CHECKED_STAGE: usize = 5;
/// Initial-state norm of the switching scenario.
const SWITCH_X0_NORM: f64 = 5.0;
/// Integration-fidelity floor of the injection-free observer.
const FIDELITY_FLOOR: f64 = 1e-6;
/// Delays of the sweep.
const TAUS: [f64; 3] = [0.05, 0.1, 0.2];
/// Sampled `(t, e, q)` triples required by the certificate.
const CERT_SAMPLES: usize = 10_000;

type Check = Result<String, String>;

fn load(preset: &str, overrides: &[(&str, String)]) -> (RunConfig, Scenario) {
    let doc = format!("system.preset = {preset}\noutput.dir = {}\n", std::env::temp_dir().display());
    let ov: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    parse_config_with(&doc, &ov).unwrap_or_else(|e| panic!("preset {preset}: {e}"))
}

fn certificate_ok(c: &CertificateReport) -> Result<(), String> {
    let mut bad = Vec::new();
    if c.samples < CERT_SAMPLES {
        bad.push(format!("only {} samples", c.samples));
    }
    if c.failures > 0 || c.kernel_failures > 0 {
        bad.push(format!("{} full / {} kernel inequality violations", c.failures, c.kernel_failures));
    }
    if !(c.min_eig_p >= MIN_EIG) || !c.p_above_identity {
        bad.push(format!("min eig P = {}", c.min_eig_p));
    }
    if !c.off_window_ok {
        bad.push("P != L*I off the windows".into());
    }
    if !(c.int_d_margin > 0.0) {
        bad.push(format!("int d - kappa margin {}", c.int_d_margin));
    }
    if !(c.int_dbar_margin >= 0.0) {
        bad.push(format!("int d_bar - kappa + 1 margin {}", c.int_dbar_margin));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad.join("; "))
    }
}

fn criterion1_on(preset: &str, overrides: &[(&str, String)]) -> Check {
    let (cfg, sc) = load(preset, overrides);
    let v = run_verification(&cfg, &sc).map_err(|e| e.to_string())?;
    let c = &v.synthesis.certificate;
    let l = cfg.params().l;
    certificate_ok(c).map_err(|e| format!("{preset}: {e}"))?;
    if c.p_start_norm > l * (1.0 + 1e-12) {
        return Err(format!("{preset}: |P(t0_bar)| = {} > L", c.p_start_norm));
    }
    Ok(format!(
        "{preset}: min eig {:.10}, worst excess {:.2e}, margins {:.3}/{:.3}",
        c.min_eig_p, c.worst_excess, c.int_d_margin, c.int_dbar_margin
    ))
}

fn criterion1() -> Check {
    let a = criterion1_on("example1-q1-gated", &[])?;
    let b = criterion1_on("synthetic3", &[])?;
    Ok(format!("{a}; {b}"))
}

fn criterion2_on(obs: &Observation) -> Check {
    let v = obs.run.envelope_violations(ENVELOPE_SLACK, 0.0);
    if !v.is_empty() {
        return Err(format!("{} envelope violations, first at t = {}", v.len(), v[0]));
    }
    if !obs.tube_violations.is_empty() {
        return Err(format!("|e| >= xi at {} grid points", obs.tube_violations.len()));
    }
    Ok(format!(
        "max |e|/envelope = {:.3e}, max |e| = {:.3e} < xi = {:.3e}",
        obs.run.worst_envelope_ratio(),
        obs.run.e_norm.iter().cloned().fold(0.0, f64::max),
        obs.run.xi_used
    ))
}

fn criterion3_on(obs: &Observation, sc: &Scenario) -> Check {
    let windows = obs.synthesis.schedule.windows.len();
    if windows < MIN_WINDOWS {
        return Err(format!("only {windows} windows in the horizon"));
    }
    let e = &obs.run.e_norm;
    let (e0, e_end) = (e[0], e[e.len() - 1]);
    if !(e_end <= CONVERGENCE_FACTOR * e0) {
        return Err(format!("|e(end)| = {e_end:e} > {CONVERGENCE_FACTOR} |e(t0_bar)| = {e0:e}"));
    }
    let g = obs.run.e.grid();
    let tau = sc.params.tau;
    let t_end = g.time(g.count() - 1);
    let at: Vec<f64> = sc
        .t_seq
        .iter()
        .take_while(|&&t| t + tau <= t_end + 1e-9)
        .map(|&t| e[g.nearest_index(t + tau)])
        .collect();
    let floor = RATIO_FLOOR * e0;
    let mut checked = 0;
    let mut worst = 0.0f64;
    for nu in 2..at.len().saturating_sub(1) {
        if at[nu] <= floor {
            continue;
        }
        checked += 1;
        let ratio = at[nu + 1] / at[nu];
        if at[nu + 1] > floor {
            worst = worst.max(ratio);
        }
        if ratio > GEOMETRIC_RATIO && at[nu + 1] > floor {
            return Err(format!("ratio {ratio:.4} > {GEOMETRIC_RATIO:.4} between nu = {nu} and {}", nu + 1));
        }
    }
    if checked == 0 {
        return Err("no ratio above the noise floor".into());
    }
    Ok(format!(
        "{windows} windows, |e(end)|/|e(t0_bar)| = {:.2e}, {checked} steps checked, worst ratio above the floor {worst:.4}",
        e_end / e0
    ))
}

fn observation(preset: &str, overrides: &[(&str, String)]) -> Result<(Observation, Scenario), String> {
    let (cfg, sc) = load(preset, overrides);
    let obs = run_observation(&cfg, &sc).map_err(|e| e.to_string())?;
    Ok((obs, sc))
}

fn criterion2() -> Check {
    let (obs, _) = observation("example1-q1-gated", &[])?;
    criterion2_on(&obs)
}

fn criterion3() -> Check {
    let (obs, sc) = observation("example1-q1-gated", &[])?;
    criterion3_on(&obs, &sc)
}

fn criterion4() -> Check {
    let mut parts = Vec::new();
    for preset in ["example1-q1-gated", "synthetic3"] {
        let (cfg, sc) = load(preset, &[]);
        let v = run_verification(&cfg, &sc).map_err(|e| e.to_string())?;
        let d = v.synthesis.certificate.det_identity_max_rel;
        if !(d <= DET_TOL) {
            return Err(format!("{preset}: relative determinant error {d:e} > {DET_TOL:e}"));
        }
        parts.push(format!("{preset} (n = {}): {d:.2e}", sc.system.n()));
    }
    Ok(parts.join("; "))
}

fn criterion5() -> Check {
    let mut parts = Vec::new();
    for preset in ["example1-q1-gated", "synthetic3"] {
        let (cfg, sc) = load(preset, &[]);
        let v = run_verification(&cfg, &sc).map_err(|e| e.to_string())?;
        let a = &v.audit;
        if !a.passed() || a.windows == 0 {
            return Err(format!("{preset}: {} mismatches, first {:?}", a.mismatches.len(), a.mismatches.first()));
        }
        parts.push(format!("{preset}: {} windows, {} points bit-identical", a.windows, a.points));
    }
    Ok(parts.join("; "))
}

fn criterion6() -> Check {
    let (cfg, sc) = load("example1-switch", &[]);
    let x0_norm = cfg.x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (x0_norm - SWITCH_X0_NORM).abs() > 1e-12 {
        return Err(format!("preset has |x0| = {x0_norm}"));
    }
    let sw = run_switch(&cfg, &sc).map_err(|e| e.to_string())?;
    let checked: Vec<_> = sw.stages.iter().filter(|s| s.m >= FIRST_CHECKED_STAGE).collect();
    if checked.is_empty() {
        return Err(format!("no stage m >= {FIRST_CHECKED_STAGE} within the horizon"));
    }
    for s in &checked {
        if !(s.sup_e <= (1.0 + STAGE_SLACK) / s.m as f64) {
            return Err(format!("stage {}: sup |e_m| = {:e} > 1/m", s.m, s.sup_e));
        }
        if s.reached_zeta {
            return Err(format!("stage {}: |z_m| reached zeta_m = {:e}", s.m, s.zeta));
        }
    }
    for (k, w) in sw.plan.times.windows(2).enumerate() {
        if !(w[1] - w[0] >= 1.0) {
            return Err(format!("t_{} - t_{} = {} < 1", k + 2, k + 1, w[1] - w[0]));
        }
    }
    let worst = checked.iter().map(|s| s.sup_e * s.m as f64).fold(0.0, f64::max);
    Ok(format!(
        "{} stages checked (m = {}..{}), max m*sup|e_m| = {worst:.2e}, min spacing {:.3}",
        checked.len(),
        checked[0].m,
        checked[checked.len() - 1].m,
        sw.plan.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    ))
}

fn criterion7() -> Check {
    let zeta = 3.0;
    let g = [1.5, -2.25, 0.75];
    let probes = [(0.5 * zeta, 1.0), (1.5 * zeta, (2.0 * zeta - 1.5 * zeta) / zeta), (2.0 * zeta, 0.0)];
    for (r, factor) in probes {
        let z = [r, 0.0, 0.0];
        let out = saturated_rhs(&g, &z, zeta);
        for (o, gi) in out.iter().zip(g) {
            if o.to_bits() != (gi * factor).to_bits() {
                return Err(format!("|z| = {r}: got {o}, expected {}", gi * factor));
            }
        }
    }
    Ok("factors 1, (2zeta-|z|)/zeta, 0 reproduced exactly at 0.5zeta, 1.5zeta, 2zeta".into())
}

fn criterion8() -> Check {
    let (cfg, sc) = load("contractive", &[]);
    let plant = simulate_plant(&sc, &cfg.x0).map_err(|e| e.to_string())?;
    let p = &sc.params;
    let t_bar0 = p.t0 + p.tau;
    let k = plant.x.grid().nearest_index(t_bar0 - p.tau);
    let z0 = plant.x.at(k).to_vec();
    let (_, e) = run_open_loop(&sc, &plant, &z0, t_bar0, p.t_end()).map_err(|e| e.to_string())?;
    let max = e.iter().cloned().fold(0.0, f64::max);
    if !(max <= FIDELITY_FLOOR) {
        return Err(format!("max |e| = {max:e} > {FIDELITY_FLOOR:e}"));
    }
    Ok(format!("max |e| = {max:.2e} over [{t_bar0}, {}]", p.t_end()))
}

fn criterion9() -> Check {
    let mut parts = Vec::new();
    for tau in TAUS {
        let ov = [("params.tau", tau.to_string())];
        criterion1_on("example1-q1-gated", &ov).map_err(|e| format!("tau = {tau}: {e}"))?;
        let (obs, sc) = observation("example1-q1-gated", &ov)?;
        criterion2_on(&obs).map_err(|e| format!("tau = {tau}: {e}"))?;
        let c3 = criterion3_on(&obs, &sc).map_err(|e| format!("tau = {tau}: {e}"))?;
        parts.push(format!("tau = {tau}: {c3}"));
    }
    Ok(format!("criteria 1-3 hold; {}", parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("certificate suite", criterion1),
        ("envelope reproduction", criterion2),
        ("convergence", criterion3),
        ("determinant identity", criterion4),
        ("strong causality", criterion5),
        ("switching suite", criterion6),
        ("saturation contract", criterion7),
        ("trivial initialization", criterion8),
        ("tau sweep", criterion9),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
