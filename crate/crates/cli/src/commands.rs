//! The five commands.  Each runs the pipeline up to its stage, writes its
//! CSV artifact into the output directory and returns a report with the
//! exit code the binary should use.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use delobs_core::plant::{check_H1, norm};
use delobs_core::{
    causality_audit, certify, plan_switching, run_observer, run_switching, simulate_plant, synthesize_default,
    CausalityReport, CertificateReport, CompositeEstimate, GainSchedule, ObserverRun, PlantRun, Scenario, SwitchPlan,
};

use crate::artifacts::{write_observer, write_plant, write_schedule, write_switching};
use crate::config::RunConfig;
use crate::error::{CliError, Result, EXIT_CERTIFICATE, EXIT_HYPOTHESIS, EXIT_OK};

/// Relative slack of the envelope comparison in `observe`.
pub const ENVELOPE_SLACK: f64 = 1e-3;
/// Relative slack of the per-stage bound `1/m` in `switch`.
pub const STAGE_SLACK: f64 = 1e-3;

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: u8,
    /// Human-readable summary.
    pub report: String,
    pub artifacts: Vec<PathBuf>,
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf)> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok((BufWriter::new(file), path))
}

fn simulate(cfg: &RunConfig, sc: &Scenario) -> Result<PlantRun> {
    Ok(simulate_plant(sc, &cfg.x0)?)
}

/// Plant simulation with the H1 check; writes `plant.csv`.
pub fn cmd_simulate(cfg: &RunConfig, sc: &Scenario) -> Result<Outcome> {
    let plant = simulate(cfg, sc)?;
    let (w, path) = create(&cfg.out_dir, "plant.csv")?;
    write_plant(w, &plant)?;
    let h1 = check_H1(sc, &plant.x, &plant.u);
    let mut report = String::new();
    writeln!(report, "scenario {} (n = {}), |x0| = {:.6}", sc.name, sc.system.n(), norm(&cfg.x0)).ok();
    writeln!(report, "grid {} samples, h = {}", plant.x.grid().count(), sc.params.h).ok();
    writeln!(
        report,
        "H1: {} state and {} input violations",
        h1.state_violations.len(),
        h1.input_violations.len()
    )
    .ok();
    Ok(Outcome {
        exit_code: if h1.passed() { EXIT_OK } else { EXIT_HYPOTHESIS },
        report,
        artifacts: vec![path],
    })
}

/// Everything `synthesize` computes.
pub struct Synthesis {
    pub plant: PlantRun,
    pub schedule: GainSchedule,
    pub certificate: CertificateReport,
}

/// Simulation, synthesis and certification without writing artifacts.
pub fn run_synthesis(cfg: &RunConfig, sc: &Scenario) -> Result<Synthesis> {
    let plant = simulate(cfg, sc)?;
    let schedule = synthesize_default(sc, &plant.y, &plant.u)?;
    let certificate = certify(&schedule, sc, &plant.y, &plant.u)?;
    Ok(Synthesis {
        plant,
        schedule,
        certificate,
    })
}

/// Renders the certificate with its worst margins.
pub fn certificate_summary(c: &CertificateReport) -> String {
    let mut s = String::new();
    let mark = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    writeln!(
        s,
        "  Lyapunov inequality: {} / {} samples violate ({} in ker H); worst normalized excess {:.3e} at t = {:.4} [{}]",
        c.failures,
        c.samples,
        c.kernel_failures,
        c.worst_excess,
        c.worst_at,
        mark(c.failures == 0 && c.kernel_failures == 0)
    )
    .ok();
    writeln!(s, "  P >= I: min eigenvalue {:.12} [{}]", c.min_eig_p, mark(c.p_above_identity)).ok();
    writeln!(s, "  |P(t0_bar)| = {:.6} [{}]", c.p_start_norm, mark(c.off_window_ok)).ok();
    writeln!(
        s,
        "  det(P_m - I) = (L-1)^m: worst relative error {:.3e} [{}]",
        c.det_identity_max_rel,
        mark(c.det_identity_max_rel <= CertificateReport::DET_TOL)
    )
    .ok();
    writeln!(s, "  int d - kappa: min margin {:.6} [{}]", c.int_d_margin, mark(c.int_d_margin > 0.0)).ok();
    writeln!(
        s,
        "  int d_bar - kappa + 1: min margin {:.6} [{}]",
        c.int_dbar_margin,
        mark(c.int_dbar_margin >= -1e-9)
    )
    .ok();
    writeln!(s, "  kappa nondecreasing [{}], phi > 0 on supports [{}]", mark(c.kappa_monotone), mark(c.phi_positive)).ok();
    s
}

/// Synthesis with certification; writes `schedule.csv`.
pub fn cmd_synthesize(cfg: &RunConfig, sc: &Scenario) -> Result<Outcome> {
    let syn = run_synthesis(cfg, sc)?;
    let (w, path) = create(&cfg.out_dir, "schedule.csv")?;
    write_schedule(w, &syn.schedule)?;
    let mut report = String::new();
    writeln!(
        report,
        "schedule on [{}, {}]: {} windows, xi = {:.6e}",
        syn.schedule.t_bar0,
        syn.schedule.t_end,
        syn.schedule.windows.len(),
        syn.schedule.xi
    )
    .ok();
    report.push_str(&certificate_summary(&syn.certificate));
    Ok(Outcome {
        exit_code: if syn.certificate.passed() { EXIT_OK } else { EXIT_CERTIFICATE },
        report,
        artifacts: vec![path],
    })
}

/// The single observer run and its checks.
pub struct Observation {
    pub synthesis: Synthesis,
    pub run: ObserverRun,
    /// Grid times where `|e|` exceeds the envelope by more than [`ENVELOPE_SLACK`].
    pub envelope_violations: Vec<f64>,
    /// Grid times where `|e| ≥ ξ`.
    pub tube_violations: Vec<f64>,
}

/// Simulation, synthesis and the observer run from `z(t̄0) = 0`.
pub fn run_observation(cfg: &RunConfig, sc: &Scenario) -> Result<Observation> {
    let synthesis = run_synthesis(cfg, sc)?;
    let run = run_observer(sc, &synthesis.plant, &synthesis.schedule)?;
    let envelope_violations = run.envelope_violations(ENVELOPE_SLACK, 0.0);
    let g = run.e.grid();
    let tube_violations = run
        .in_tube()
        .iter()
        .enumerate()
        .filter(|(_, &ok)| !ok)
        .map(|(k, _)| g.time(k))
        .collect();
    Ok(Observation {
        synthesis,
        run,
        envelope_violations,
        tube_violations,
    })
}

/// Observer run; writes `observer.csv`.
pub fn cmd_observe(cfg: &RunConfig, sc: &Scenario) -> Result<Outcome> {
    let obs = run_observation(cfg, sc)?;
    let (w, path) = create(&cfg.out_dir, "observer.csv")?;
    write_observer(w, &obs.run)?;
    let e = &obs.run.e_norm;
    let mut report = String::new();
    writeln!(
        report,
        "|e(t0_bar)| = {:.6e}, |e(end)| = {:.6e}, max |e|/envelope = {:.6e}",
        e[0],
        e[e.len() - 1],
        obs.run.worst_envelope_ratio()
    )
    .ok();
    writeln!(
        report,
        "envelope violations: {}, tube violations (|e| >= xi = {:.6e}): {}",
        obs.envelope_violations.len(),
        obs.run.xi_used,
        obs.tube_violations.len()
    )
    .ok();
    let ok = obs.synthesis.certificate.passed() && obs.envelope_violations.is_empty() && obs.tube_violations.is_empty();
    Ok(Outcome {
        exit_code: if ok { EXIT_OK } else { EXIT_CERTIFICATE },
        report,
        artifacts: vec![path],
    })
}

/// Per-stage summary of a switching run.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub m: usize,
    pub t_m: f64,
    pub t_next: f64,
    /// `sup |e_m|` over `[t_m, t_{m+1}]`.
    pub sup_e: f64,
    /// `sup |z_m|` over the stage.
    pub sup_z: f64,
    pub zeta: f64,
    pub reached_zeta: bool,
}

/// The switching run and its checks.
pub struct Switching {
    pub plant: PlantRun,
    pub plan: SwitchPlan,
    pub estimate: CompositeEstimate,
    pub stages: Vec<StageSummary>,
    /// `⌈|x0|⌉`: the first stage whose guarantees apply.
    pub m0: usize,
}

impl Switching {
    /// Stages `m ≥ m0` meet `sup|e_m| ≤ (1+slack)/m` and never reach `ζ_m`,
    /// and consecutive switching times are at least one time unit apart.
    pub fn passed(&self) -> bool {
        let spacing = self.plan.times.windows(2).all(|w| w[1] - w[0] >= 1.0 - 1e-9);
        spacing
            && self.stages.iter().filter(|s| s.m >= self.m0).count() > 0
            && self
                .stages
                .iter()
                .filter(|s| s.m >= self.m0)
                .all(|s| s.sup_e <= (1.0 + STAGE_SLACK) / s.m as f64 && !s.reached_zeta)
    }
}

/// Simulation, switching plan and the composite run.
pub fn run_switch(cfg: &RunConfig, sc: &Scenario) -> Result<Switching> {
    let plant = simulate(cfg, sc)?;
    let plan = plan_switching(sc, &plant)?;
    let estimate = run_switching(sc, &plant, &plan)?;
    let stages = estimate
        .stages
        .iter()
        .map(|st| StageSummary {
            m: st.m,
            t_m: plan.t(st.m),
            t_next: plan.t(st.m + 1),
            sup_e: st.sup_e_active,
            sup_z: st.sup_z,
            zeta: plan.zeta[st.m - 1],
            reached_zeta: st.reached_zeta,
        })
        .collect();
    let m0 = (norm(&cfg.x0).ceil() as usize).max(1);
    Ok(Switching {
        plant,
        plan,
        estimate,
        stages,
        m0,
    })
}

/// Switching observer; writes `switching.csv`.
pub fn cmd_switch(cfg: &RunConfig, sc: &Scenario) -> Result<Outcome> {
    let sw = run_switch(cfg, sc)?;
    let (w, path) = create(&cfg.out_dir, "switching.csv")?;
    write_switching(w, &sw.estimate)?;
    let mut report = String::new();
    writeln!(report, "switching times: {:?}", sw.plan.times).ok();
    for warning in &sw.plan.warnings {
        writeln!(report, "warning: {warning}").ok();
    }
    writeln!(report, "stage guarantees apply from m0 = ceil(|x0|) = {}", sw.m0).ok();
    for s in &sw.stages {
        let applies = s.m >= sw.m0;
        let ok = s.sup_e <= (1.0 + STAGE_SLACK) / s.m as f64 && !s.reached_zeta;
        writeln!(
            report,
            "  m = {:2} on [{:.3}, {:.3}]: sup|e_m| = {:.3e} (bound 1/m = {:.3e}), sup|z_m| = {:.3e}, zeta_m = {:.3e}{}",
            s.m,
            s.t_m,
            s.t_next,
            s.sup_e,
            1.0 / s.m as f64,
            s.sup_z,
            s.zeta,
            if !applies {
                " [not checked]"
            } else if ok {
                " [ok]"
            } else {
                " [VIOLATED]"
            }
        )
        .ok();
    }
    writeln!(report, "|x_tau - Z| at the end: {:.3e}", sw.estimate.e_norm.last().copied().unwrap_or(f64::NAN)).ok();
    Ok(Outcome {
        exit_code: if sw.passed() { EXIT_OK } else { EXIT_CERTIFICATE },
        report,
        artifacts: vec![path],
    })
}

/// All certificates of one configuration.
pub struct Verification {
    pub synthesis: Synthesis,
    pub audit: CausalityReport,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.synthesis.certificate.passed() && self.audit.passed()
    }
}

/// Synthesis, certification and the strong-causality audit.
pub fn run_verification(cfg: &RunConfig, sc: &Scenario) -> Result<Verification> {
    let synthesis = run_synthesis(cfg, sc)?;
    let s = &synthesis;
    let audit = causality_audit(&s.schedule, sc, &s.plant.y, &s.plant.u)?;
    Ok(Verification { synthesis, audit })
}

/// Re-runs every certificate and prints the worst margins; exit 0 iff all pass.
pub fn cmd_verify(cfg: &RunConfig, sc: &Scenario) -> Result<Outcome> {
    let v = run_verification(cfg, sc)?;
    let mut report = String::new();
    writeln!(report, "scenario {}: {} windows", sc.name, v.synthesis.schedule.windows.len()).ok();
    report.push_str(&certificate_summary(&v.synthesis.certificate));
    writeln!(
        report,
        "  strong causality: {} windows, {} support points, {} mismatches [{}]",
        v.audit.windows,
        v.audit.points,
        v.audit.mismatches.len(),
        if v.audit.passed() { "ok" } else { "VIOLATED" }
    )
    .ok();
    writeln!(report, "verdict: {}", if v.passed() { "PASS" } else { "FAIL" }).ok();
    Ok(Outcome {
        exit_code: if v.passed() { EXIT_OK } else { EXIT_CERTIFICATE },
        report,
        artifacts: Vec::new(),
    })
}
