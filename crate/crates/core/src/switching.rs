//! The switching observer: one saturated observer per radius `R = m`,
//! switched in at times `t_m`, so that no bound on the initial state is
//! needed.
//!
//! Stage `m` runs on `[t_{m−1}, t_{m+1}]` from zero with the radius-`m`
//! schedule, its right-hand side scaled by the saturation factor of
//! radius `ζ_m`; the published estimate is `Z = z_m` on `[t_m, t_{m+1})`.
//! All switching times lie on the lattice `t0 + kτ`, which keeps every
//! rebased H2 sequence aligned with the data grid.

use crate::error::{Error, Result};
use crate::gain_synthesis::kappa::build_kappa;
use crate::gain_synthesis::{resolve_xi, synthesize, GainSchedule};
use crate::observer::{error_trace, observer_grid, Injection, Integrator};
use crate::plant::{norm, PlantRun, Scenario};
use crate::signals::{Interpolation, SignalTrace};

pub use crate::observer::saturation_factor;

/// `G_m`: the raw right-hand side scaled by the saturation factor of `ζ`.
pub fn saturated_rhs(g_raw: &[f64], z: &[f64], zeta: f64) -> Vec<f64> {
    let f = saturation_factor(norm(z), zeta);
    g_raw.iter().map(|v| v * f).collect()
}

/// The planned stages.
#[derive(Debug, Clone)]
pub struct SwitchPlan {
    /// `t_1 < t_2 < … < t_{m_max+1}`.
    pub times: Vec<f64>,
    /// `ξ_m`, `m = 1..m_max`.
    pub xi: Vec<f64>,
    /// `ζ_m = β(t_{m+1}, m) + ξ_m`.
    pub zeta: Vec<f64>,
    /// Radius-`m` schedules on `[t_{m−1}, t_{m+1}]` (the last one runs to the horizon).
    pub schedules: Vec<GainSchedule>,
    pub m_max: usize,
    /// Non-fatal planning notes (e.g. stages dropped at the horizon).
    pub warnings: Vec<String>,
}

impl SwitchPlan {
    /// `t_m` (1-based).
    pub fn t(&self, m: usize) -> f64 {
        self.times[m - 1]
    }

    /// Start of stage `m` (`t_{m−1}`, with stage 1 starting at `t_1`).
    pub fn stage_start(&self, m: usize) -> f64 {
        if m == 1 {
            self.times[0]
        } else {
            self.times[m - 2]
        }
    }
}

/// H2 sequence rebased to start at `T′_0 = t̄0 − τ`: the next element is the
/// first original `T_k` leaving at least one full original period after
/// `T′_0`, followed by the rest of the original sequence.
pub fn rebase_t_seq(t_seq: &[f64], t_bar0: f64, tau: f64, h: f64) -> Result<Vec<f64>> {
    let start = t_bar0 - tau;
    let tol = 1e-9 * h;
    let k = t_seq.partition_point(|&t| t < start - tol);
    if k >= t_seq.len() {
        return Err(Error::Scenario(format!("T sequence ends before {start}")));
    }
    let next = k + 1;
    if next >= t_seq.len() {
        return Err(Error::Scenario(format!("T sequence too short after {start}")));
    }
    let mut out = vec![start];
    out.extend_from_slice(&t_seq[next..]);
    Ok(out)
}

/// `1 + ln(m·β(t_{m−1}, m)·√L)`: the level κ_m must reach at `t_m`.
fn switch_level(scenario: &Scenario, m: usize, t_prev: f64) -> f64 {
    1.0 + (m as f64 * (scenario.beta)(t_prev, m as f64) * scenario.params.l.sqrt()).ln()
}

/// Plans the switching times, thresholds and per-stage schedules over the
/// scenario horizon.
pub fn plan_switching(scenario: &Scenario, plant: &PlantRun) -> Result<SwitchPlan> {
    let p = &scenario.params;
    let (tau, h) = (p.tau, p.h);
    let t_end = p.t_end();
    let lattice_step = p.tau_steps();
    let mut warnings = Vec::new();
    let mut times = vec![p.t0 + tau];
    let mut xis = Vec::new();
    // κ_{m+1} decides t_{m+1}; only envelopes and κ are needed for it.
    loop {
        let m = times.len(); // current last time is t_m
        let t_m = times[m - 1];
        if t_m + 1.0 > t_end {
            break;
        }
        let t_bar0 = t_m;
        let seq = rebase_t_seq(&scenario.t_seq, t_bar0, tau, h)?;
        let env = resolve_xi(scenario, &seq, t_bar0, (m + 1) as f64)?;
        let kappa = build_kappa(&seq, tau, &env.sigma_bar, t_bar0, t_end)?;
        let level = switch_level(scenario, m + 1, t_m);
        // Smallest lattice time ≥ t_m + 1 with κ_{m+1} ≥ level.
        let grid = plant.y.grid();
        let k_m = grid
            .index_of(t_m - tau)
            .ok_or_else(|| Error::Grid(format!("switching time {t_m} off the data grid")))?;
        let mut k = k_m + ((1.0 / tau).ceil() as usize) * lattice_step;
        let mut found = None;
        loop {
            let t = grid.time(k) + tau;
            if t > t_end + 1e-9 * h {
                break;
            }
            if t >= t_m + 1.0 - 1e-9 * h && kappa.eval(t)? >= level {
                found = Some(t);
                break;
            }
            k += lattice_step;
        }
        match found {
            Some(t) => times.push(t),
            None => {
                warnings.push(format!(
                    "horizon exhausted before t_{} was reached; stopping at {} stages",
                    m + 1,
                    m.saturating_sub(1)
                ));
                break;
            }
        }
    }
    let m_max = times.len() - 1;
    if m_max == 0 {
        return Err(Error::Scenario("horizon too short for a single switching stage".into()));
    }
    let mut schedules = Vec::with_capacity(m_max);
    let mut zetas = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let t_bar0 = if m == 1 { times[0] } else { times[m - 2] };
        let stage_end = if m == m_max { t_end } else { times[m] };
        let seq = rebase_t_seq(&scenario.t_seq, t_bar0, tau, h)?;
        let sched = synthesize(scenario, &plant.y, &plant.u, m as f64, &seq, t_bar0, stage_end)?;
        let xi = sched.xi;
        xis.push(xi);
        zetas.push((scenario.beta)(times[m], m as f64) + xi);
        schedules.push(sched);
    }
    Ok(SwitchPlan {
        times,
        xi: xis,
        zeta: zetas,
        schedules,
        m_max,
        warnings,
    })
}

/// One integrated stage.
#[derive(Debug, Clone)]
pub struct StageRun {
    pub m: usize,
    /// `z_m` on `[t_{m−1}, end]`.
    pub z: SignalTrace,
    /// `|x_τ − z_m|` on the same grid.
    pub e_norm: Vec<f64>,
    /// `sup |z_m|` over the whole stage.
    pub sup_z: f64,
    /// `sup |e_m|` over `[t_m, t_{m+1}]`.
    pub sup_e_active: f64,
    /// `sup |z_m|` over `[t_m, t_{m+1}]`.
    pub sup_z_active: f64,
    /// Whether `|z_m| ≥ ζ_m` anywhere on `[t_{m−1}, t_{m+1})`.
    pub reached_zeta: bool,
}

/// The switching observer's output.
#[derive(Debug, Clone)]
pub struct CompositeEstimate {
    /// `Z(t) = z_m(t)` on `[t_m, t_{m+1})`.
    pub z: SignalTrace,
    /// Active stage per sample.
    pub active: Vec<usize>,
    /// `|x_τ − Z|` per sample.
    pub e_norm: Vec<f64>,
    pub stages: Vec<StageRun>,
}

/// Integrates every stage and assembles `Z`.
pub fn run_switching(scenario: &Scenario, plant: &PlantRun, plan: &SwitchPlan) -> Result<CompositeEstimate> {
    let n = scenario.system.n();
    let mut stages = Vec::with_capacity(plan.m_max);
    for m in 1..=plan.m_max {
        let sched = &plan.schedules[m - 1];
        let zeta = plan.zeta[m - 1];
        let grid = observer_grid(scenario, plant, sched.t_bar0, sched.t_end)?;
        let integ = Integrator {
            scenario,
            plant,
            inj: Injection {
                sched: Some(sched),
                zeta: Some(zeta),
            },
        };
        let z = integ.run(&grid, &vec![0.0; n])?;
        let (_, e_norm) = error_trace(scenario, plant, &grid, &z)?;
        let (t_m, t_next) = (plan.t(m), plan.t(m + 1));
        let mut st = StageRun {
            m,
            z: SignalTrace::new(grid, n, z, Interpolation::Cubic, format!("z{m}"))?,
            e_norm,
            sup_z: 0.0,
            sup_e_active: 0.0,
            sup_z_active: 0.0,
            reached_zeta: false,
        };
        let h = grid.h();
        for k in 0..grid.count() {
            let t = grid.time(k);
            let zn = norm(st.z.at(k));
            st.sup_z = st.sup_z.max(zn);
            if t >= t_m - 1e-9 * h && t <= t_next + 1e-9 * h {
                st.sup_e_active = st.sup_e_active.max(st.e_norm[k]);
                st.sup_z_active = st.sup_z_active.max(zn);
            }
            if t < t_next - 1e-9 * h && zn >= zeta {
                st.reached_zeta = true;
            }
        }
        stages.push(st);
    }
    // Composite on [t_1, end of the last stage].
    let last = stages.last().expect("at least one stage");
    let first_grid = stages[0].z.grid();
    let t_last = last.z.grid().t_end();
    let grid = observer_grid(scenario, plant, first_grid.t_start(), t_last)?;
    let mut vals = Vec::with_capacity(grid.count() * n);
    let mut active = Vec::with_capacity(grid.count());
    let mut m = 1;
    for k in 0..grid.count() {
        let t = grid.time(k);
        while m < plan.m_max && t >= plan.t(m + 1) - 1e-9 * grid.h() {
            m += 1;
        }
        let st = &stages[m - 1];
        let j = st.z.grid().nearest_index(t);
        vals.extend_from_slice(st.z.at(j));
        active.push(m);
    }
    let (_, e_norm) = error_trace(scenario, plant, &grid, &vals)?;
    Ok(CompositeEstimate {
        z: SignalTrace::new(grid, n, vals, Interpolation::Linear, "Z")?,
        active,
        e_norm,
        stages,
    })
}
