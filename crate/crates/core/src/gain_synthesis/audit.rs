//! Strong-causality audit: the gains on each support `A_ν` must not depend
//! on any input/output sample taken at or after `ā_ν`.
//!
//! For every window the plant data from `ā_ν` on is overwritten with
//! unrelated values, the window is detected and planned again from the
//! altered data, and `P_R`, `d_R`, `φ_R` are compared bit for bit with the
//! original schedule on every grid point of `A_ν`.

use crate::error::Result;
use crate::plant::{detect_windows, Scenario};
use crate::signals::SignalTrace;

use super::levels::plan_window;
use super::schedule::{GainSchedule, Prepared};

/// One detected difference.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalityMismatch {
    pub nu: usize,
    /// Grid time of the first differing value (or `ā_ν` for a changed window).
    pub t: f64,
    /// Which quantity differed (`window`, `P`, `d` or `phi`).
    pub what: &'static str,
}

/// Outcome of [`causality_audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct CausalityReport {
    /// Windows audited.
    pub windows: usize,
    /// Grid points compared over all `A_ν`.
    pub points: usize,
    pub mismatches: Vec<CausalityMismatch>,
}

impl CausalityReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Copy of `trace` whose samples at grid times `≥ cut` are replaced by
/// `f(t, old)`.
pub fn overwrite_from(trace: &SignalTrace, cut: f64, f: impl Fn(f64, f64) -> f64) -> Result<SignalTrace> {
    let g = *trace.grid();
    let dim = trace.dim();
    let tol = 1e-9 * g.h();
    let mut values = trace.values().to_vec();
    for k in 0..g.count() {
        let t = g.time(k);
        if t >= cut - tol {
            for v in &mut values[k * dim..(k + 1) * dim] {
                *v = f(t, *v);
            }
        }
    }
    SignalTrace::new(g, dim, values, trace.interpolation(), trace.label())
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

/// Audits every window of `sched`, which must have been synthesized from
/// the plant-grid traces `y`, `u`.
pub fn causality_audit(
    sched: &GainSchedule,
    scenario: &Scenario,
    y: &SignalTrace,
    u: &SignalTrace,
) -> Result<CausalityReport> {
    causality_audit_at(sched, scenario, y, u, 0.0)
}

/// As [`causality_audit`] with the overwrite starting at `ā_ν + offset`.
/// Negative offsets reach into the data the window legitimately uses and
/// must produce mismatches; this is the audit's own sensitivity check.
pub fn causality_audit_at(
    sched: &GainSchedule,
    scenario: &Scenario,
    y: &SignalTrace,
    u: &SignalTrace,
    offset: f64,
) -> Result<CausalityReport> {
    let tau = scenario.params.tau;
    let mut mismatches = Vec::new();
    let mut points = 0;
    for plan in &sched.windows {
        let w = &plan.window;
        let cut = w.j.0 + offset;
        // Any values unrelated to the originals that keep the data finite.
        let y2 = overwrite_from(y, cut, |t, v| 0.5 - 2.0 * v + (3.0 * t).sin())?;
        let u2 = overwrite_from(u, cut, |t, v| 0.3 + 0.5 * v * (5.0 * t).cos())?;
        let t_end_nu = sched.t_seq[w.nu] + tau;
        let windows = detect_windows(scenario, &y2, &u2, &sched.t_seq, t_end_nu)?;
        let Some(w2) = windows.iter().find(|x| x.nu == w.nu) else {
            mismatches.push(CausalityMismatch { nu: w.nu, t: cut, what: "window" });
            continue;
        };
        if w2 != w {
            mismatches.push(CausalityMismatch { nu: w.nu, t: cut, what: "window" });
            continue;
        }
        let prep = Prepared::new(scenario, &y2, sched.r, &sched.t_seq, sched.t_bar0, sched.t_end)?;
        let plan2 = {
            let ctx = prep.context(scenario, &y2, &u2, &sched.t_seq, sched.t_bar0);
            plan_window(&ctx, w2)?
        };
        let alt = prep.assemble(scenario, vec![plan2], sched.r, &sched.t_seq, sched.t_bar0, sched.t_end)?;
        for k in plan.ka.0..=plan.ka.1 {
            let t = sched.grid.time(k);
            points += 1;
            let (d0, e0) = sched.p_at(t)?;
            let (d1, e1) = alt.p_at(t)?;
            let found = if !d0.iter().zip(&d1).chain(e0.iter().zip(&e1)).all(|(a, b)| same(*a, *b)) {
                Some("P")
            } else if !same(sched.d.eval(t)?, alt.d.eval(t)?) {
                Some("d")
            } else if !same(sched.phi.eval(t)?, alt.phi.eval(t)?) {
                Some("phi")
            } else {
                None
            };
            if let Some(what) = found {
                mismatches.push(CausalityMismatch { nu: w.nu, t, what });
                break;
            }
        }
    }
    Ok(CausalityReport {
        windows: sched.windows.len(),
        points,
        mismatches,
    })
}
