//! The single τ-delayed Luenberger observer
//!
//! ```text
//! ż = F(t−τ, z, y_τ, u_τ) + φ_R(t)·P_R(t)⁻¹H′·(y_τ(t) − z₁(t)),   z(t̄0) = 0,
//! ```
//!
//! integrated against recorded plant traces, plus its error envelope.
//!
//! Inside the windows the injection gain is large (φ·P⁻¹₁₁ reaches 10⁵ or
//! more), which makes a plain explicit step unstable at the working step
//! size.  The integrator therefore uses Strang splitting: half a step of the
//! exact flow of the (frozen-coefficient, rank-one) injection term, a
//! classical RK4 step of `F`, and another half injection step.  With `φ = 0`
//! the scheme is exactly RK4.

use crate::error::{Error, Result};
use crate::gain_synthesis::GainSchedule;
use crate::linalg::{min_eigenvalue, shifted_pivots};
use crate::plant::{norm, PlantRun, Scenario};
use crate::signals::{Interpolation, SignalTrace, TimeGrid};

/// Eigenvalue floor of `P` below which the observer aborts.
pub const SINGULAR_P_FLOOR: f64 = 1.0 - 1e-6;

/// Output of [`run_observer`].
#[derive(Debug, Clone)]
pub struct ObserverRun {
    /// Observer state on the observer grid from `t̄0`.
    pub z: SignalTrace,
    /// Error `e = x_τ − z` on the same grid.
    pub e: SignalTrace,
    /// `|e|` at every grid point.
    pub e_norm: Vec<f64>,
    /// Envelope `√L·β(t̄0,R)·e^{−κ(t)+1}` (all ones-dimensional samples).
    pub bound: SignalTrace,
    /// The tube constant ξ of the schedule.
    pub xi_used: f64,
    pub t_bar0: f64,
}

impl ObserverRun {
    /// Whether `|e(t)| < ξ` at every grid point.
    pub fn in_tube(&self) -> Vec<bool> {
        self.e_norm.iter().map(|&v| v < self.xi_used).collect()
    }

    /// Grid times at which `|e| > max(envelope·(1 + slack), floor)`.  The
    /// absolute `floor` accounts for the integration noise level: once the
    /// envelope drops below it, the computed error cannot follow.
    pub fn envelope_violations(&self, slack: f64, floor: f64) -> Vec<f64> {
        let g = self.e.grid();
        self.e_norm
            .iter()
            .enumerate()
            .filter(|(k, &v)| v > (self.bound.at(*k)[0] * (1.0 + slack)).max(floor))
            .map(|(k, _)| g.time(k))
            .collect()
    }

    /// Largest ratio `|e|/envelope` over the run.
    pub fn worst_envelope_ratio(&self) -> f64 {
        self.e_norm
            .iter()
            .enumerate()
            .map(|(k, &v)| v / self.bound.at(k)[0])
            .fold(0.0, f64::max)
    }
}

/// The smallest ξ admissible for the schedule:
/// `√L·β(t̄0,R)·e^{−(κ(t̄0) − 1)}`.  κ is nondecreasing, so its minimum over
/// `[t̄0, ∞)` is its value at `t̄0`.
pub fn xi_threshold(beta_at_start: f64, l: f64, kappa_at_start: f64) -> f64 {
    l.sqrt() * beta_at_start * (1.0 - kappa_at_start).exp()
}

/// The envelope `√L·β(t̄0,R)·e^{−κ(t)+1}` on the observer grid of the schedule.
pub fn error_envelope(scenario: &Scenario, sched: &GainSchedule, grid: &TimeGrid) -> Result<SignalTrace> {
    let c = sched.l.sqrt() * (scenario.beta)(sched.t_bar0, sched.r);
    let mut vals = Vec::with_capacity(grid.count());
    for t in grid.times() {
        vals.push(c * (1.0 - sched.kappa.eval(t)?).exp());
    }
    SignalTrace::new(*grid, 1, vals, Interpolation::Linear, "envelope")
}

/// Injection data of the integrator.
#[derive(Clone, Copy)]
pub(crate) struct Injection<'a> {
    pub sched: Option<&'a GainSchedule>,
    /// Saturation radius ζ (switching stages only).
    pub zeta: Option<f64>,
}

/// Saturation factor of the switching stages: 1 for `|z| ≤ ζ`,
/// `(2ζ − |z|)/ζ` for `ζ ≤ |z| ≤ 2ζ`, 0 beyond.
pub fn saturation_factor(z_norm: f64, zeta: f64) -> f64 {
    if z_norm <= zeta {
        1.0
    } else if z_norm >= 2.0 * zeta {
        0.0
    } else {
        (2.0 * zeta - z_norm) / zeta
    }
}

/// Fixed-step observer integrator on the observer grid `[t_start, t_end]`.
pub(crate) struct Integrator<'a> {
    pub scenario: &'a Scenario,
    pub plant: &'a PlantRun,
    pub inj: Injection<'a>,
}

impl Integrator<'_> {
    fn chi(&self, z: &[f64]) -> f64 {
        self.inj.zeta.map_or(1.0, |zeta| saturation_factor(norm(z), zeta))
    }

    /// `χ(z)·F(t−τ, z, y_τ, u_τ)` with data looked up at plant time `tp`.
    fn field(&self, tp: f64, z: &[f64], out: &mut [f64]) -> Result<()> {
        let y = self.plant.y.sample_component(tp, 0)?;
        let u = self.plant.u.sample_component(tp, 0)?;
        self.scenario.system.observer_rhs(tp, z, y, u, out);
        let chi = self.chi(z);
        if chi != 1.0 {
            out.iter_mut().for_each(|v| *v *= chi);
        }
        Ok(())
    }

    /// Exact flow of the frozen injection term over `dt` at observer time `t`.
    fn inject(&self, t: f64, z: &mut [f64], dt: f64) -> Result<()> {
        let Some(sched) = self.inj.sched else {
            return Ok(());
        };
        let phi = sched.phi.eval(t)?;
        if phi == 0.0 {
            return Ok(());
        }
        let (d, e) = sched.p_at(t)?;
        if shifted_pivots(&d, &e, SINGULAR_P_FLOOR).iter().any(|&p| !(p > 0.0)) {
            return Err(Error::SingularP {
                t,
                lambda: min_eigenvalue(&d, &e),
            });
        }
        let v = sched.injection_direction(t)?;
        let gain = phi * self.chi(z);
        let c = v[0];
        let innov = self.plant.y.sample_component(t - sched.tau, 0)? - z[0];
        let k = gain * c * dt;
        let factor = if k.abs() < 1e-8 {
            gain * dt * (1.0 - 0.5 * k)
        } else {
            -(-k).exp_m1() / c
        };
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += vi * innov * factor;
        }
        Ok(())
    }

    /// Integrates from `z0` at observer time `grid.time(0)` over `grid`.
    pub fn run(&self, grid: &TimeGrid, z0: &[f64]) -> Result<Vec<f64>> {
        let n = self.scenario.system.n();
        let tau = self.scenario.params.tau;
        let h = grid.h();
        let mut out = Vec::with_capacity(grid.count() * n);
        let mut z = z0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        for k in 0..grid.count() {
            let t = grid.time(k);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("observer state at t = {t}")));
            }
            out.extend_from_slice(&z);
            if k + 1 == grid.count() {
                break;
            }
            let t1 = grid.time(k + 1);
            let tp = t - tau;
            self.inject(t, &mut z, 0.5 * h)?;
            self.field(tp, &z, &mut k1)?;
            for i in 0..n {
                tmp[i] = z[i] + 0.5 * h * k1[i];
            }
            self.field(tp + 0.5 * h, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = z[i] + 0.5 * h * k2[i];
            }
            self.field(tp + 0.5 * h, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = z[i] + h * k3[i];
            }
            self.field(tp + h, &tmp, &mut k4)?;
            for i in 0..n {
                z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            self.inject(t1, &mut z, 0.5 * h)?;
        }
        Ok(out)
    }
}

/// Observer grid `[t_start, t_end]` aligned with the delayed plant grid.
pub(crate) fn observer_grid(scenario: &Scenario, plant: &PlantRun, t_start: f64, t_end: f64) -> Result<TimeGrid> {
    let tau = scenario.params.tau;
    let pg = plant.x.grid();
    let k0 = pg.index_of(t_start - tau).ok_or_else(|| {
        Error::Grid(format!("observer start {t_start} is not a delayed plant grid time"))
    })?;
    let k1 = pg.index_of(t_end - tau).ok_or_else(|| {
        Error::Grid(format!("observer end {t_end} is not a delayed plant grid time"))
    })?;
    TimeGrid::from_count(pg.time(k0) + tau, pg.h(), k1 - k0 + 1)
}

/// Error trace `x_τ − z` for states `z` stored on `grid`.
pub(crate) fn error_trace(scenario: &Scenario, plant: &PlantRun, grid: &TimeGrid, z: &[f64]) -> Result<(SignalTrace, Vec<f64>)> {
    let n = scenario.system.n();
    let tau = scenario.params.tau;
    let pg = plant.x.grid();
    let k0 = pg.nearest_index(grid.t_start() - tau);
    let mut e = Vec::with_capacity(z.len());
    let mut norms = Vec::with_capacity(grid.count());
    for k in 0..grid.count() {
        let x = plant.x.at(k0 + k);
        let zk = &z[k * n..(k + 1) * n];
        let ek: Vec<f64> = x.iter().zip(zk).map(|(a, b)| a - b).collect();
        norms.push(norm(&ek));
        e.extend(ek);
    }
    Ok((SignalTrace::new(*grid, n, e, Interpolation::Linear, "e")?, norms))
}

/// Runs the observer of `sched` from `z(t̄0) = 0` over the schedule's domain.
pub fn run_observer(scenario: &Scenario, plant: &PlantRun, sched: &GainSchedule) -> Result<ObserverRun> {
    run_observer_from(scenario, plant, sched, &vec![0.0; scenario.system.n()])
}

/// As [`run_observer`] with an explicit initial state.
pub fn run_observer_from(scenario: &Scenario, plant: &PlantRun, sched: &GainSchedule, z0: &[f64]) -> Result<ObserverRun> {
    let grid = observer_grid(scenario, plant, sched.t_bar0, sched.t_end)?;
    let integ = Integrator {
        scenario,
        plant,
        inj: Injection {
            sched: Some(sched),
            zeta: None,
        },
    };
    let z = integ.run(&grid, z0)?;
    let (e, e_norm) = error_trace(scenario, plant, &grid, &z)?;
    Ok(ObserverRun {
        z: SignalTrace::new(grid, scenario.system.n(), z, Interpolation::Cubic, "z")?,
        e,
        e_norm,
        bound: error_envelope(scenario, sched, &grid)?,
        xi_used: sched.xi,
        t_bar0: sched.t_bar0,
    })
}

/// The injection-free copy `ż = F(t−τ, z, y_τ, u_τ)` from `z0` on
/// `[t_start, t_end]`; returns the observer state and `|x_τ − z|`.
pub fn run_open_loop(
    scenario: &Scenario,
    plant: &PlantRun,
    z0: &[f64],
    t_start: f64,
    t_end: f64,
) -> Result<(SignalTrace, Vec<f64>)> {
    let grid = observer_grid(scenario, plant, t_start, t_end)?;
    let integ = Integrator {
        scenario,
        plant,
        inj: Injection {
            sched: None,
            zeta: None,
        },
    };
    let z = integ.run(&grid, z0)?;
    let (_, norms) = error_trace(scenario, plant, &grid, &z)?;
    Ok((SignalTrace::new(grid, scenario.system.n(), z, Interpolation::Cubic, "z")?, norms))
}
