//! Assembly of the per-window constructions into full-horizon gains, and
//! the synthesis driver.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{shifted_pivots, spectral_norm, tri_solve};
use crate::plant::{detect_windows, PhiRule, Scenario, Window, XiSpec};
use crate::signals::{Joint, PiecewiseC1Fn, SampledRun, Segment, SignalTrace, TimeGrid};

use super::envelopes::{build_sigma_envelopes, BoundEnvelopes};
use super::kappa::{build_kappa, kappa_floor};
use super::lemma::SphereLattice;
use super::levels::{bordered_diag, plan_window, Knots, WindowContext, WindowPlan};

/// Relative margin of the `P ≥ I` grid check.
pub const PD_MARGIN: f64 = 1e-9;
/// Iteration cap of the automatic ξ fixed point.
const XI_ITERATIONS: usize = 40;
/// Largest ξ the automatic fixed point accepts before giving up.
const XI_MAX: f64 = 1e100;

/// The synthesized time-varying gains on `[t̄0, t_end]` (observer time).
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub n: usize,
    pub l: f64,
    pub r: f64,
    /// Tube constant ξ used by the envelopes.
    pub xi: f64,
    pub tau: f64,
    pub t_bar0: f64,
    pub t_end: f64,
    /// The H2 sequence the schedule was built from (`T_0 = t̄0 − τ`).
    pub t_seq: Vec<f64>,
    pub phi_rule: PhiRule,
    /// Observer grid covering the schedule's domain.
    pub grid: TimeGrid,
    pub envelopes: BoundEnvelopes,
    pub kappa: PiecewiseC1Fn,
    /// Off-diagonal entries `(p_{R,n}, …, p_{R,2})` of `P_R`.  The diagonal
    /// is determined pointwise by them (see [`bordered_diag`]), with the last
    /// entry constant `L`.
    pub p_off: Vec<PiecewiseC1Fn>,
    /// `d_R`.
    pub d: PiecewiseC1Fn,
    /// `d̄_R` (equal to `d_R` off the windows).
    pub d_bar: PiecewiseC1Fn,
    /// `φ_R` (zero off the windows).
    pub phi: PiecewiseC1Fn,
    pub windows: Vec<WindowPlan>,
}

impl GainSchedule {
    /// `P_R(t)` as (diagonal, off-diagonal).
    pub fn p_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (d, e, _, _) = self.p_d_at(t)?;
        Ok((d, e))
    }

    /// `P_R(t)` and `Ṗ_R(t)` as (diag, off, diag′, off′).
    pub fn p_d_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut off = Vec::with_capacity(self.n - 1);
        let mut doff = Vec::with_capacity(self.n - 1);
        for f in &self.p_off {
            let (v, s) = f.eval_d(t)?;
            off.push(v);
            doff.push(s);
        }
        let (diag, ddiag) = bordered_diag(&off, &doff, self.l);
        Ok((diag, off, ddiag, doff))
    }

    /// Injection direction `P_R(t)⁻¹H′` with `H = (1, 0, …, 0)`.
    pub fn injection_direction(&self, t: f64) -> Result<Vec<f64>> {
        let (d, e) = self.p_at(t)?;
        let mut rhs = vec![0.0; self.n];
        rhs[0] = 1.0;
        Ok(tri_solve(&d, &e, &rhs))
    }

    /// The window whose `A_ν` contains `t`.
    pub fn window_at(&self, t: f64) -> Option<&WindowPlan> {
        self.windows.iter().find(|w| t >= w.a.0 && t <= w.a.1)
    }

    /// Windows as detected (without the per-level data).
    pub fn detected(&self) -> Vec<Window> {
        self.windows.iter().map(|w| w.window.clone()).collect()
    }
}

/// `√L·β(t̄0, R)·e^{−κ(t̄0)+1}`: the smallest admissible ξ for the given envelopes.
pub fn admissible_xi(
    scenario: &Scenario,
    env: &BoundEnvelopes,
    t_seq: &[f64],
    t_bar0: f64,
    r: f64,
) -> Result<f64> {
    let k0 = kappa_floor(t_seq, scenario.params.tau, &env.sigma_bar, t_bar0)?;
    let v = crate::observer::xi_threshold((scenario.beta)(t_bar0, r), scenario.params.l, k0);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("xi threshold at t = {t_bar0}")));
    }
    Ok(v)
}

/// Builds envelopes for a fixed ξ, or finds the automatic ξ by the fixed
/// point `ξ ← threshold(ξ)` (accepted once `threshold(ξ) ≤ ξ`).
pub fn resolve_xi(scenario: &Scenario, t_seq: &[f64], t_bar0: f64, r: f64) -> Result<BoundEnvelopes> {
    match scenario.params.xi {
        XiSpec::Value(xi) => build_sigma_envelopes(scenario, r, xi),
        XiSpec::Auto => {
            let mut xi = scenario.params.l.sqrt() * (scenario.beta)(t_bar0, r);
            let mut env = build_sigma_envelopes(scenario, r, xi)?;
            for _ in 0..XI_ITERATIONS {
                let next = admissible_xi(scenario, &env, t_seq, t_bar0, r)?;
                if !next.is_finite() || next > XI_MAX {
                    return Err(Error::Scenario(format!(
                        "no admissible xi: the tube bound grows with xi faster than xi itself (reached {next:e})"
                    )));
                }
                if next <= xi * (1.0 + 1e-12) && next >= xi * (1.0 - 1e-12) {
                    return Ok(env);
                }
                xi = next;
                env = build_sigma_envelopes(scenario, r, xi)?;
            }
            Err(Error::Scenario(format!(
                "automatic xi did not converge (last value {xi:e}); set xi explicitly"
            )))
        }
    }
}

/// `−σ̄` as a single segment (constant when σ̄ is).
fn neg_sigma_segment(sigma_bar: &PiecewiseC1Fn) -> Segment {
    if let [Segment::Constant(c)] = sigma_bar.segments() {
        return Segment::Constant(-c);
    }
    let sb = sigma_bar.clone();
    Segment::Analytic(Arc::new(move |t| -sb.eval(t).unwrap_or(f64::NAN)))
}

/// Alternates off-window segments with sampled window runs.
fn assemble_entry(
    plans: &[WindowPlan],
    grid_h: f64,
    t_bar0: f64,
    t_end: f64,
    off: Segment,
    window_knots: impl Fn(&WindowPlan) -> Knots,
    joint: Joint,
) -> Result<PiecewiseC1Fn> {
    let mut breaks = vec![t_bar0];
    let mut segments = Vec::new();
    let mut joints = Vec::new();
    for plan in plans {
        let (a0, a1) = plan.a;
        if a0 > *breaks.last().expect("non-empty") {
            if !segments.is_empty() {
                joints.push(joint);
            }
            segments.push(off.clone());
            breaks.push(a0);
        }
        let k = window_knots(plan);
        let run = SampledRun::new(a0, grid_h, k.values, k.slopes)?;
        if !segments.is_empty() {
            joints.push(joint);
        }
        segments.push(Segment::Sampled(run));
        breaks.push(a1);
    }
    if t_end > *breaks.last().expect("non-empty") {
        if !segments.is_empty() {
            joints.push(joint);
        }
        segments.push(off);
        breaks.push(t_end);
    }
    PiecewiseC1Fn::new(breaks, segments, joints)
}

/// Assembles the full-horizon schedule from window plans and checks the
/// structural invariants on the grid: `P ≥ I`, `|P(t̄0)| ≤ L`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_full(
    scenario: &Scenario,
    plans: Vec<WindowPlan>,
    envelopes: BoundEnvelopes,
    kappa: PiecewiseC1Fn,
    grid: TimeGrid,
    r: f64,
    t_seq: &[f64],
    t_bar0: f64,
    t_end: f64,
) -> Result<GainSchedule> {
    let p = &scenario.params;
    let n = scenario.system.n();
    let h = p.h;
    for pair in plans.windows(2) {
        if pair[1].a.0 <= pair[0].a.1 {
            return Err(Error::Invariant {
                t: pair[1].a.0,
                what: "window supports overlap".into(),
            });
        }
    }
    let level_knots = |plan: &WindowPlan, level: usize| -> Knots {
        let (lo, hi) = plan.final_.range;
        plan.levels[level - 2].p_off.slice(lo, hi)
    };
    let mut p_off = Vec::with_capacity(n - 1);
    for r_idx in 0..n - 1 {
        let level = n - r_idx;
        p_off.push(assemble_entry(
            &plans,
            h,
            t_bar0,
            t_end,
            Segment::Constant(0.0),
            |w| level_knots(w, level),
            Joint::C1,
        )?);
    }
    let neg = neg_sigma_segment(&envelopes.sigma_bar);
    let d = assemble_entry(
        &plans,
        h,
        t_bar0,
        t_end,
        neg.clone(),
        |w| {
            let (lo, hi) = w.final_.range;
            w.levels[n - 2].d.slice(lo, hi)
        },
        Joint::Jump,
    )?;
    let d_bar = assemble_entry(&plans, h, t_bar0, t_end, neg, |w| w.final_.d_bar.clone(), Joint::Jump)?;
    let phi = assemble_entry(
        &plans,
        h,
        t_bar0,
        t_end,
        Segment::Constant(0.0),
        |w| w.final_.phi.clone(),
        Joint::Jump,
    )?;
    let sched = GainSchedule {
        n,
        l: p.l,
        r,
        xi: envelopes.xi,
        tau: p.tau,
        t_bar0,
        t_end,
        t_seq: t_seq.to_vec(),
        phi_rule: p.phi_rule,
        grid,
        envelopes,
        kappa,
        p_off,
        d,
        d_bar,
        phi,
        windows: plans,
    };
    check_structure(&sched)?;
    Ok(sched)
}

/// Grid checks aborting the synthesis: `P − (1−10⁻⁹)I > 0` on every
/// window knot and `|P(t̄0)| ≤ L`.
fn check_structure(s: &GainSchedule) -> Result<()> {
    let (d0, e0) = s.p_at(s.t_bar0)?;
    let norm0 = spectral_norm(&d0, &e0);
    if norm0 > s.l * (1.0 + 1e-12) {
        return Err(Error::Invariant {
            t: s.t_bar0,
            what: format!("|P(t̄0)| = {norm0} exceeds L = {}", s.l),
        });
    }
    for plan in &s.windows {
        for k in plan.ka.0..=plan.ka.1 {
            let t = s.grid.time(k);
            let (d, e) = s.p_at(t)?;
            if shifted_pivots(&d, &e, 1.0 - PD_MARGIN).iter().any(|&v| !(v > 0.0)) {
                return Err(Error::SingularP {
                    t,
                    lambda: crate::linalg::min_eigenvalue(&d, &e),
                });
            }
        }
    }
    Ok(())
}

/// Data-independent ingredients of a synthesis run: envelopes, κ, the
/// observer grid and the lemma's sphere lattices.
pub(crate) struct Prepared {
    pub env: BoundEnvelopes,
    pub kappa: PiecewiseC1Fn,
    pub obs: TimeGrid,
    pub lattices: Vec<SphereLattice>,
}

impl Prepared {
    pub fn new(scenario: &Scenario, y: &SignalTrace, r: f64, t_seq: &[f64], t_bar0: f64, t_end: f64) -> Result<Self> {
        let p = &scenario.params;
        let n = scenario.system.n();
        let env = resolve_xi(scenario, t_seq, t_bar0, r)?;
        let kappa = build_kappa(t_seq, p.tau, &env.sigma_bar, t_bar0, t_end)?;
        let per = if matches!(p.phi_rule, PhiRule::Lattice) { p.sphere_points } else { 1 };
        Ok(Self {
            env,
            kappa,
            obs: y.grid().shifted(p.tau),
            lattices: (2..=n).map(|m| SphereLattice::new(m, per)).collect(),
        })
    }

    pub fn context<'a>(
        &'a self,
        scenario: &'a Scenario,
        y: &'a SignalTrace,
        u: &'a SignalTrace,
        t_seq: &'a [f64],
        t_bar0: f64,
    ) -> WindowContext<'a> {
        WindowContext {
            scenario,
            env: &self.env,
            obs: &self.obs,
            y,
            u,
            t_seq,
            t_bar0,
            lattices: &self.lattices,
        }
    }

    /// Assembles a schedule from window plans, consuming the ingredients.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        self,
        scenario: &Scenario,
        plans: Vec<WindowPlan>,
        r: f64,
        t_seq: &[f64],
        t_bar0: f64,
        t_end: f64,
    ) -> Result<GainSchedule> {
        assemble_full(scenario, plans, self.env, self.kappa, self.obs, r, t_seq, t_bar0, t_end)
    }
}

/// Full synthesis on `[t̄0, t_end]` (observer time) for radius `r` from the
/// delayed data `y`, `u` (plant-grid traces) and the H2 sequence `t_seq`
/// with `T_0 = t̄0 − τ`.
pub fn synthesize(
    scenario: &Scenario,
    y: &SignalTrace,
    u: &SignalTrace,
    r: f64,
    t_seq: &[f64],
    t_bar0: f64,
    t_end: f64,
) -> Result<GainSchedule> {
    let prep = Prepared::new(scenario, y, r, t_seq, t_bar0, t_end)?;
    let windows = detect_windows(scenario, y, u, t_seq, t_end)?;
    let plans = {
        let ctx = prep.context(scenario, y, u, t_seq, t_bar0);
        windows
            .iter()
            .map(|w| plan_window(&ctx, w))
            .collect::<Result<Vec<_>>>()?
    };
    prep.assemble(scenario, plans, r, t_seq, t_bar0, t_end)
}

/// Synthesis for the scenario's own radius, horizon and H2 sequence.
pub fn synthesize_default(scenario: &Scenario, y: &SignalTrace, u: &SignalTrace) -> Result<GainSchedule> {
    let p = &scenario.params;
    synthesize(scenario, y, u, p.r, &scenario.t_seq, p.t0 + p.tau, p.t_end())
}
