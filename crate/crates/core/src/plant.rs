//! Triangular systems, scenarios, plant simulation, hypothesis checks and
//! observability-window detection.
//!
//! A triangular system has the form
//!
//! ```text
//! ẋ_i = f_i(t, x_1, …, x_i, u) + a_i(t, x_1, u)·x_{i+1},   i = 1..n−1
//! ẋ_n = f_n(t, x_1, …, x_n, u),                              y = x_1.
//! ```
//!
//! The drift closures receive only the leading slice `x[..=i]`, so the
//! triangular structure holds by construction.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::signals::{Interpolation, SignalTrace, TimeGrid};

/// Drift map `f_i(t, x_1..x_i, u)`.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
/// Coupling map `a_i(t, x_1, u)`.
pub type CouplingFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Scalar function of time.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Two-argument envelope `β(t, R)`.
pub type BetaFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Majorant of the drift Jacobian, `(t, box radius) ↦ bound`.
pub type JacobianMajorant = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Majorant of `|a_i|`, `(t, |y| bound, |u| bound) ↦ bound`.
pub type CouplingMajorant = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Closed-form majorants supplied by a system.
///
/// `jacobian(t, ρ)` bounds the root-sum-square of
/// `max |∂f_i/∂x_j|` over `2 ≤ j ≤ i ≤ n` on the ball `|(x_1..x_i,u)| ≤ ρ`;
/// `coupling[i](t, ȳ, ū)` bounds `|a_{i+1}(t̄, y, u)|` over `t̄ ≤ t`,
/// `|y| ≤ ȳ`, `|u| ≤ ū`.  Both must be nondecreasing in every argument.
#[derive(Clone)]
pub struct AnalyticMajorants {
    pub jacobian: JacobianMajorant,
    pub coupling: Vec<CouplingMajorant>,
}

/// A triangular control system with scalar input and output `y = x_1`.
#[derive(Clone)]
pub struct TriangularSystem {
    name: String,
    drift: Vec<DriftFn>,
    coupling: Vec<CouplingFn>,
    majorants: Option<AnalyticMajorants>,
}

impl fmt::Debug for TriangularSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriangularSystem")
            .field("name", &self.name)
            .field("n", &self.n())
            .field("analytic_majorants", &self.majorants.is_some())
            .finish()
    }
}

impl TriangularSystem {
    /// Builds a system from `n ≥ 2` drift maps and `n − 1` coupling maps.
    pub fn new(name: impl Into<String>, drift: Vec<DriftFn>, coupling: Vec<CouplingFn>) -> Result<Self> {
        if drift.len() < 2 {
            return Err(Error::Scenario(format!(
                "state dimension must be at least 2, got {}",
                drift.len()
            )));
        }
        if coupling.len() + 1 != drift.len() {
            return Err(Error::Scenario(format!(
                "{} coupling maps for dimension {}",
                coupling.len(),
                drift.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            drift,
            coupling,
            majorants: None,
        })
    }

    /// Attaches closed-form envelope majorants.
    pub fn with_majorants(mut self, majorants: AnalyticMajorants) -> Result<Self> {
        if majorants.coupling.len() != self.coupling.len() {
            return Err(Error::Scenario(format!(
                "{} coupling majorants for {} couplings",
                majorants.coupling.len(),
                self.coupling.len()
            )));
        }
        self.majorants = Some(majorants);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.drift.len()
    }

    pub fn majorants(&self) -> Option<&AnalyticMajorants> {
        self.majorants.as_ref()
    }

    /// `f_i(t, x_1..x_i, u)` for 0-based `i`; only `x[..=i]` is visible.
    #[inline]
    pub fn drift(&self, i: usize, t: f64, x: &[f64], u: f64) -> f64 {
        (self.drift[i])(t, &x[..=i], u)
    }

    /// `a_i(t, x_1, u)` for 0-based `i < n − 1`.
    #[inline]
    pub fn coupling(&self, i: usize, t: f64, x1: f64, u: f64) -> f64 {
        (self.coupling[i])(t, x1, u)
    }

    /// Plant right-hand side.
    pub fn rhs(&self, t: f64, x: &[f64], u: f64, out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut v = self.drift(i, t, x, u);
            if i + 1 < n {
                v += self.coupling(i, t, x[0], u) * x[i + 1];
            }
            out[i] = v;
        }
    }

    /// Observer right-hand side `F(t, z, y, u)`: the plant field with `x_1`
    /// replaced by the measurement `y` inside every `f_i` and `a_i`.
    pub fn observer_rhs(&self, t: f64, z: &[f64], y: f64, u: f64, out: &mut [f64]) {
        let n = self.n();
        let mut stack = [0.0f64; 16];
        let mut heap = Vec::new();
        let w: &mut [f64] = if n <= 16 {
            &mut stack[..n]
        } else {
            heap.resize(n, 0.0);
            &mut heap
        };
        w.copy_from_slice(z);
        w[0] = y;
        for i in 0..n {
            let mut v = self.drift(i, t, w, u);
            if i + 1 < n {
                v += self.coupling(i, t, y, u) * z[i + 1];
            }
            out[i] = v;
        }
    }

    /// Largest finite-difference sensitivity of any `f_i` to a coordinate
    /// `x_j` with `j > i` at the probe point (zero for a triangular system).
    pub fn triangularity_defect(&self, t: f64, x: &[f64], u: f64) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            let base = self.drift(i, t, x, u);
            for j in (i + 1)..n {
                let mut xp = x.to_vec();
                let step = 1e-3 * x[j].abs().max(1.0);
                xp[j] += step;
                let v = self.drift(i, t, &xp, u);
                worst = worst.max(((v - base) / step).abs());
            }
        }
        worst
    }
}

/// The error-tube constant ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiSpec {
    /// Use the binding value `√L·β(t̄0,R)·exp(1 − κ(t̄0))`.
    Auto,
    /// Fixed value.
    Value(f64),
}

/// How the lemma's gain φ is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiRule {
    /// The literal construction: ω from a sphere lattice and
    /// `C = ω̄·(|P|·σ̄ + ½|Ṗ| + |d̄|·|P|)`.
    Lattice,
    /// The sharper bound `C = sup{D(t,q,w)/|Hw|² : w ∉ ker H, q ∈ Q}`,
    /// evaluated by a one-/two-dimensional search in the affine chart
    /// `w = (1, v)`.
    Tight,
}

/// Source of the σ-envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeMode {
    /// Closed-form majorants supplied by the system.
    Analytic,
    /// Grid maximization of finite-difference partials.
    Numeric,
}

/// Numerical parameters of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Initial time `t_0 = T_0`.
    pub t0: f64,
    /// Delay τ.
    pub tau: f64,
    /// Lyapunov constant `L > 1`.
    pub l: f64,
    /// Radius `R` of the initial-state ball.
    pub r: f64,
    /// Error-tube constant ξ.
    pub xi: XiSpec,
    /// Simulation length; the horizon ends at `t0 + horizon`.
    pub horizon: f64,
    /// Fixed integration step.
    pub h: f64,
    /// Nonzero-detection threshold for the couplings.
    pub delta_a: f64,
    /// Fraction trimmed from each end of a detected window.
    pub j_shrink: f64,
    /// Central fraction of `J_ν` used as `I_ν`.
    pub i_fraction: f64,
    /// Sphere samples per dimension for the lemma's K^c probe.
    pub sphere_points: usize,
    /// Monte-Carlo samples per certificate inequality.
    pub cert_samples: usize,
    /// Seed for the certificate sampler.
    pub seed: u64,
    /// φ bound used by the lemma.
    pub phi_rule: PhiRule,
    /// σ-envelope source.
    pub envelopes: EnvelopeMode,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            t0: 0.0,
            tau: 0.05,
            l: 2.0,
            r: 1.0,
            xi: XiSpec::Auto,
            horizon: 40.0,
            h: 1e-3,
            delta_a: 1e-3,
            j_shrink: 0.05,
            i_fraction: 0.5,
            sphere_points: 2000,
            cert_samples: 10_000,
            seed: 1,
            phi_rule: PhiRule::Tight,
            envelopes: EnvelopeMode::Analytic,
        }
    }
}

impl Params {
    /// End of the horizon.
    pub fn t_end(&self) -> f64 {
        self.t0 + self.horizon
    }

    /// Number of grid steps per delay.
    pub fn tau_steps(&self) -> usize {
        (self.tau / self.h).round() as usize
    }
}

/// A complete simulation scenario.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub system: TriangularSystem,
    /// Input `u(t)`, continuously differentiable by contract.
    pub input: ScalarFn,
    /// Input bound `ū(t)`.
    pub u_bar: ScalarFn,
    /// Forward-completeness envelope `β(t, R)`.
    pub beta: BetaFn,
    /// H2 time sequence `T_0 = t_0 < T_1 < …`, long enough to cover the horizon.
    pub t_seq: Vec<f64>,
    pub params: Params,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("system", &self.system)
            .field("t_seq_len", &self.t_seq.len())
            .field("params", &self.params)
            .finish()
    }
}

impl Scenario {
    /// Checks every scenario invariant.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let finite = [p.t0, p.tau, p.l, p.r, p.horizon, p.h, p.delta_a];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Scenario("non-finite parameter".into()));
        }
        if !(p.tau > 0.0) {
            return Err(Error::Scenario(format!("tau = {} must be positive", p.tau)));
        }
        if !(p.l > 1.0) {
            return Err(Error::Scenario(format!("L = {} must exceed 1", p.l)));
        }
        if !(p.r > 0.0) {
            return Err(Error::Scenario(format!("R = {} must be positive", p.r)));
        }
        if !(p.h > 0.0) || !(p.h < p.tau / 10.0) {
            return Err(Error::Scenario(format!(
                "step h = {} must satisfy 0 < h < tau/10 = {}",
                p.h,
                p.tau / 10.0
            )));
        }
        let ratio = p.tau / p.h;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Scenario(format!(
                "tau/h = {ratio} must be an integer so delayed lookups hit grid points"
            )));
        }
        if !(p.horizon > p.tau) {
            return Err(Error::Scenario(format!(
                "horizon {} must exceed tau",
                p.horizon
            )));
        }
        if !(p.delta_a > 0.0) {
            return Err(Error::Scenario("delta_a must be positive".into()));
        }
        if !(0.0..0.5).contains(&p.j_shrink) || !(p.i_fraction > 0.0 && p.i_fraction < 1.0) {
            return Err(Error::Scenario(
                "need 0 <= j_shrink < 0.5 and 0 < i_fraction < 1".into(),
            ));
        }
        if let XiSpec::Value(xi) = p.xi {
            if !(xi > 0.0) {
                return Err(Error::Scenario(format!("xi = {xi} must be positive")));
            }
        }
        if p.sphere_points < 16 || p.cert_samples == 0 {
            return Err(Error::Scenario("sphere_points >= 16 and cert_samples >= 1 required".into()));
        }
        validate_t_seq(&self.t_seq, p.t0, p.tau)?;
        if *self.t_seq.last().expect("validated") < p.t_end() {
            return Err(Error::Scenario(format!(
                "T sequence ends at {} before the horizon end {}",
                self.t_seq.last().expect("validated"),
                p.t_end()
            )));
        }
        // β nondecreasing in both arguments on a probe lattice.
        let times: Vec<f64> = (0..=16).map(|k| p.t0 + p.horizon * k as f64 / 16.0).collect();
        let radii = [0.0, 0.5 * p.r, p.r, 2.0 * p.r, 5.0 * p.r];
        for w in times.windows(2) {
            for &r in &radii {
                let (b0, b1) = ((self.beta)(w[0], r), (self.beta)(w[1], r));
                if !(b1 >= b0 * (1.0 - 1e-12)) {
                    return Err(Error::Scenario(format!(
                        "beta(., {r}) decreases between t = {} and {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        for &t in &times {
            for w in radii.windows(2) {
                if !((self.beta)(t, w[1]) >= (self.beta)(t, w[0])) {
                    return Err(Error::Scenario(format!("beta({t}, .) decreases in R")));
                }
            }
        }
        Ok(())
    }

    /// The plant grid `[t0, t0 + horizon]`.
    pub fn plant_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.params.t0, self.params.t_end(), self.params.h)
    }

    /// The observer grid: the plant grid shifted by τ, so observer index
    /// `k` reads the plant sample `k` as its delayed measurement.
    pub fn observer_grid(&self) -> Result<TimeGrid> {
        let g = self.plant_grid()?;
        let k_tau = self.params.tau_steps();
        TimeGrid::from_count(g.t_start(), g.h(), g.count() - k_tau).map(|g| g.shifted(self.params.tau))
    }
}

/// Validates an H2 sequence: starts at `t0`, strictly increasing,
/// consecutive gaps integer multiples of τ.
pub fn validate_t_seq(t_seq: &[f64], t0: f64, tau: f64) -> Result<()> {
    if t_seq.len() < 2 {
        return Err(Error::Scenario("T sequence needs at least two times".into()));
    }
    if (t_seq[0] - t0).abs() > 1e-9 * t0.abs().max(1.0) {
        return Err(Error::Scenario(format!(
            "T_0 = {} must equal t_0 = {t0}",
            t_seq[0]
        )));
    }
    for (nu, w) in t_seq.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if !(gap > 0.0) {
            return Err(Error::Scenario(format!(
                "T sequence not strictly increasing at index {}",
                nu + 1
            )));
        }
        let ratio = gap / tau;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Scenario(format!(
                "T_{} - T_{} = {gap} is not an integer multiple of tau = {tau} (the periods must be normalized to whole delays)",
                nu + 1,
                nu
            )));
        }
    }
    Ok(())
}

/// Plant simulation output.
#[derive(Debug, Clone)]
pub struct PlantRun {
    /// State trace (cubic interpolation).
    pub x: SignalTrace,
    /// Output `y = x_1` (cubic interpolation).
    pub y: SignalTrace,
    /// Input samples (cubic interpolation).
    pub u: SignalTrace,
}

/// Classical fixed-step RK4 integration of the plant on the scenario grid.
pub fn simulate_plant(scenario: &Scenario, x0: &[f64]) -> Result<PlantRun> {
    let sys = &scenario.system;
    let n = sys.n();
    if x0.len() != n {
        return Err(Error::Scenario(format!(
            "initial state has {} components, expected {n}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let grid = scenario.plant_grid()?;
    let h = grid.h();
    let r0 = norm(x0);
    let input = &scenario.input;
    let mut xs = Vec::with_capacity(grid.count() * n);
    let mut us = Vec::with_capacity(grid.count());
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for k in 0..grid.count() {
        let t = grid.time(k);
        let xn = norm(&x);
        let bound = 10.0 * (scenario.beta)(t, r0);
        if !xn.is_finite() || xn > bound {
            return Err(Error::ForwardCompleteness { t, norm: xn, bound });
        }
        xs.extend_from_slice(&x);
        us.push(input(t));
        if k + 1 == grid.count() {
            break;
        }
        let (u0, um, u1) = (input(t), input(t + 0.5 * h), input(t + h));
        sys.rhs(t, &x, u0, &mut k1);
        axpy(&x, 0.5 * h, &k1, &mut tmp);
        sys.rhs(t + 0.5 * h, &tmp, um, &mut k2);
        axpy(&x, 0.5 * h, &k2, &mut tmp);
        sys.rhs(t + 0.5 * h, &tmp, um, &mut k3);
        axpy(&x, h, &k3, &mut tmp);
        sys.rhs(t + h, &tmp, u1, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let ys: Vec<f64> = xs.chunks(n).map(|c| c[0]).collect();
    Ok(PlantRun {
        x: SignalTrace::new(grid, n, xs, Interpolation::Cubic, "x")?,
        y: SignalTrace::new(grid, 1, ys, Interpolation::Cubic, "y")?,
        u: SignalTrace::new(grid, 1, us, Interpolation::Cubic, "u")?,
    })
}

#[inline]
fn axpy(x: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = x[i] + a * k[i];
    }
}

/// Euclidean norm.
#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Result of the H1 check: grid times violating either bound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct H1Report {
    /// Times where `|x(t)| > β(t, |x0|)`.
    pub state_violations: Vec<f64>,
    /// Times where `|u(t)| > ū(t)`.
    pub input_violations: Vec<f64>,
}

impl H1Report {
    pub fn passed(&self) -> bool {
        self.state_violations.is_empty() && self.input_violations.is_empty()
    }
}

/// Lists every grid time at which `|x(t)| ≤ β(t,|x0|)` or `|u(t)| ≤ ū(t)` fails.
#[allow(non_snake_case)]
pub fn check_H1(scenario: &Scenario, x: &SignalTrace, u: &SignalTrace) -> H1Report {
    let mut report = H1Report::default();
    let r0 = norm(x.at(0));
    for k in 0..x.grid().count() {
        let t = x.grid().time(k);
        let xn = norm(x.at(k));
        if xn > (scenario.beta)(t, r0) * (1.0 + 1e-12) {
            report.state_violations.push(t);
        }
    }
    for k in 0..u.grid().count() {
        let t = u.grid().time(k);
        if u.at(k)[0].abs() > (scenario.u_bar)(t) * (1.0 + 1e-12) {
            report.input_violations.push(t);
        }
    }
    report
}

/// One detected observability window, in observer time unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Period index ν (1-based).
    pub nu: usize,
    /// Plant-time period `[T_{ν−1}, T_ν]`.
    pub period: (f64, f64),
    /// Number of delay subintervals `j_ν` in the period.
    pub j_count: usize,
    /// Selected subinterval `m_ν` (1-based).
    pub m: usize,
    /// Observer-grid indices of `J_ν = [ā_ν, b̄_ν]`; identical to the
    /// plant-grid indices of `J_ν − τ`.
    pub kj: (usize, usize),
    /// Observer-grid indices of `I_ν = [a_ν, b_ν]`.
    pub ki: (usize, usize),
    /// `J_ν` in observer time.
    pub j: (f64, f64),
    /// `I_ν` in observer time.
    pub i: (f64, f64),
}

/// Detects one window per full period of `t_seq` lying inside the data.
///
/// Detection runs in plant time: the `m_ν`-th delay subinterval of
/// `[T_{ν−1}, T_ν]` is the first whose open interior contains a grid time
/// with `min_i |a_i(t, y(t), u(t))| ≥ δ_a`.  The window is the longest run of
/// such grid times in that interior, trimmed by `j_shrink` on each side,
/// then shifted by τ into observer time.  Periods whose delayed image
/// ends after `t_end` (observer time) are not processed.
pub fn detect_windows(
    scenario: &Scenario,
    y: &SignalTrace,
    u: &SignalTrace,
    t_seq: &[f64],
    t_end: f64,
) -> Result<Vec<Window>> {
    let p = &scenario.params;
    let sys = &scenario.system;
    let grid = *y.grid();
    let obs = grid.shifted(p.tau);
    let tau_steps = p.tau_steps();
    let min_abs_a = |k: usize| -> f64 {
        let t = grid.time(k);
        let (yv, uv) = (y.at(k)[0], u.at(k)[0]);
        (0..sys.n() - 1)
            .map(|i| sys.coupling(i, t, yv, uv).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let mut windows = Vec::new();
    for nu in 1..t_seq.len() {
        let (t_lo, t_hi) = (t_seq[nu - 1], t_seq[nu]);
        if t_hi + p.tau > t_end + 1e-9 * p.h {
            break;
        }
        let k_lo = grid.index_of(t_lo).ok_or_else(|| {
            Error::Scenario(format!("T_{} = {t_lo} is not a grid time of the data", nu - 1))
        })?;
        let j_count = ((t_hi - t_lo) / p.tau).round() as usize;
        let mut found = None;
        for m in 1..=j_count {
            let ks = k_lo + (m - 1) * tau_steps;
            let ke = ks + tau_steps;
            if ke >= grid.count() {
                break;
            }
            // Longest run of qualifying interior samples.
            let mut best: Option<(usize, usize)> = None;
            let mut run_start = None;
            for k in (ks + 1)..ke {
                if min_abs_a(k) >= p.delta_a {
                    run_start.get_or_insert(k);
                    if let Some(s) = run_start {
                        if best.is_none_or(|(b0, b1)| k - s > b1 - b0) {
                            best = Some((s, k));
                        }
                    }
                } else {
                    run_start = None;
                }
            }
            if let Some(run) = best {
                found = Some((m, run));
                break;
            }
        }
        let (m, (r0, r1)) = found.ok_or(Error::H2Violation {
            nu,
            start: t_lo,
            end: t_hi,
        })?;
        let len = (r1 - r0) as f64;
        let trim = (p.j_shrink * len).ceil() as usize;
        let (ja, jb) = (r0 + trim, r1.saturating_sub(trim));
        let quarter = ((1.0 - p.i_fraction) / 2.0 * (jb.saturating_sub(ja)) as f64).ceil() as usize;
        let (ia, ib) = (ja + quarter, jb.saturating_sub(quarter));
        if !(ja < ia && ia < ib && ib < jb) {
            return Err(Error::Scenario(format!(
                "observability window {nu} spans only {} grid steps; reduce h or widen the input's support",
                r1 - r0
            )));
        }
        windows.push(Window {
            nu,
            period: (t_lo, t_hi),
            j_count,
            m,
            kj: (ja, jb),
            ki: (ia, ib),
            j: (obs.time(ja), obs.time(jb)),
            i: (obs.time(ia), obs.time(ib)),
        });
    }
    Ok(windows)
}

/// C^∞ transition from 0 at `θ ≤ 0` to 1 at `θ ≥ 1` (all derivatives vanish
/// at both ends).  Smoothness beyond C¹ keeps the cubic interpolation of the
/// recorded input and output at its full order.
pub fn smooth_ramp(theta: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    if theta >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / theta).exp();
    let b = (-1.0 / (1.0 - theta)).exp();
    a / (a + b)
}

/// Gating pattern of the Example-1 input within each period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gating {
    /// Input never switched off.
    Always,
    /// Input on during the first fraction of each period, off afterwards.
    OnFirst(f64),
    /// Input off during the first fraction of each period, on afterwards.
    OffFirst(f64),
}

impl Gating {
    /// Smooth (C^∞) gate value in `[0, 1]` at `t` for a period of length
    /// `period` starting at `t0`.  Transitions are ramps placed inside the
    /// off portion, so the gate equals 1 on the whole configured on
    /// portion and 0 on the middle of the off portion.
    pub fn gate(&self, t: f64, t0: f64, period: f64) -> f64 {
        let phase = (t - t0).rem_euclid(period);
        match *self {
            Gating::Always => 1.0,
            Gating::OnFirst(f) => {
                let on = f * period;
                let ramp = 0.25 * (period - on);
                if phase <= on {
                    1.0
                } else if phase < on + ramp {
                    1.0 - smooth_ramp((phase - on) / ramp)
                } else if phase > period - ramp {
                    smooth_ramp((phase - (period - ramp)) / ramp)
                } else {
                    0.0
                }
            }
            Gating::OffFirst(f) => {
                let off = f * period;
                let ramp = 0.25 * off;
                if phase < ramp {
                    1.0 - smooth_ramp(phase / ramp)
                } else if phase <= off - ramp {
                    0.0
                } else if phase < off {
                    smooth_ramp((phase - (off - ramp)) / ramp)
                } else {
                    1.0
                }
            }
        }
    }

    /// Parses `always`, `on-first:F` or `off-first:F`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s == "always" {
            return Some(Gating::Always);
        }
        let (kind, frac) = s.split_once(':')?;
        let f: f64 = frac.trim().parse().ok()?;
        if !(f > 0.0 && f < 1.0) {
            return None;
        }
        match kind.trim() {
            "on-first" => Some(Gating::OnFirst(f)),
            "off-first" => Some(Gating::OffFirst(f)),
            _ => None,
        }
    }
}

impl fmt::Display for Gating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gating::Always => write!(f, "always"),
            Gating::OnFirst(x) => write!(f, "on-first:{x}"),
            Gating::OffFirst(x) => write!(f, "off-first:{x}"),
        }
    }
}

/// Options of the Example-1 preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Example1Options {
    /// Odd exponent `q` of the damping term `−x_2^q`.
    pub q: u32,
    /// Gain α₀ of `g(t, x_1, x_2, u) = α₀·x_1/(1+t)`.
    pub alpha0: f64,
    /// Input gating within each period.
    pub gating: Gating,
    /// Period `T_ν − T_{ν−1}` (an integer multiple of τ).
    pub period: f64,
    pub params: Params,
}

impl Default for Example1Options {
    fn default() -> Self {
        Self {
            q: 1,
            alpha0: 0.5,
            gating: Gating::OnFirst(0.5),
            period: 2.0,
            params: Params::default(),
        }
    }
}

/// Equally spaced H2 sequence covering `[t0, t_end]` plus two spare periods.
pub fn periodic_t_seq(t0: f64, period: f64, t_end: f64) -> Vec<f64> {
    let count = ((t_end - t0) / period).ceil() as usize + 3;
    (0..=count).map(|k| t0 + k as f64 * period).collect()
}

/// Example 1 with default options and the given `q` and gating.
pub fn example1_scenario(q: u32, gating: Gating) -> Result<Scenario> {
    Example1Options {
        q,
        gating,
        ..Default::default()
    }
    .build()
}

impl Example1Options {
    /// Builds `ẋ₁ = u x₂, ẋ₂ = α₀ x₁/(1+t) − x₂^q` with the gated input
    /// `u(t) = gate(t)·(0.75 + 0.25 cos t)`.
    ///
    /// The envelope follows from `V = ½|x|²`,
    /// `V̇ ≤ (ū + α)V` with `ū = 1`, `α(t) = α₀/(1+t)`:
    /// `β(t,R) = R·exp(½∫_{t0}^{t}(ū + α))`.
    pub fn build(&self) -> Result<Scenario> {
        if self.q.is_multiple_of(2) {
            return Err(Error::Scenario(format!(
                "q = {} must be an odd positive integer",
                self.q
            )));
        }
        if !(self.alpha0 >= 0.0) {
            return Err(Error::Scenario("alpha0 must be nonnegative".into()));
        }
        let p = self.params.clone();
        let ratio = self.period / p.tau;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Scenario(format!(
                "period {} must be an integer multiple of tau = {}",
                self.period, p.tau
            )));
        }
        let q = self.q as i32;
        let alpha0 = self.alpha0;
        let drift: Vec<DriftFn> = vec![
            Arc::new(|_t, _x, _u| 0.0),
            Arc::new(move |t, x, _u| alpha0 * x[0] / (1.0 + t) - x[1].powi(q)),
        ];
        let coupling: Vec<CouplingFn> = vec![Arc::new(|_t, _x1, u| u)];
        let qf = self.q as f64;
        let majorants = AnalyticMajorants {
            jacobian: Arc::new(move |_t, rho| if q == 1 { 1.0 } else { qf * rho.powi(q - 1) }),
            coupling: vec![Arc::new(|_t, _y, ubar| ubar)],
        };
        let system = TriangularSystem::new(format!("example1-q{}", self.q), drift, coupling)?
            .with_majorants(majorants)?;
        let (t0, period, gating) = (p.t0, self.period, self.gating);
        let input: ScalarFn = Arc::new(move |t| gating.gate(t, t0, period) * (0.75 + 0.25 * t.cos()));
        let t_seq = periodic_t_seq(p.t0, self.period, p.t_end());
        let beta: BetaFn = Arc::new(move |t, r| {
            let s = (t - t0).max(0.0);
            r * (0.5 * (s + alpha0 * ((1.0 + t0 + s) / (1.0 + t0)).ln())).exp()
        });
        let scenario = Scenario {
            name: format!("example1-q{}-{}", self.q, self.gating),
            system,
            input,
            u_bar: Arc::new(|_| 1.0),
            beta,
            t_seq,
            params: p,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// A contractive two-state test system,
/// `ẋ₁ = −x₁ + u x₂, ẋ₂ = −2x₂ + ½ sin x₁`, with the gated input of
/// Example 1.  For `|u| ≤ 1` the symmetric part of its Jacobian is at most
/// `−¼·I`, so trajectories approach each other and `β(t,R) = R`.  It serves
/// as the integration-fidelity reference of the injection-free observer.
pub fn contractive_scenario(params: Params, period: f64) -> Result<Scenario> {
    let ratio = period / params.tau;
    if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
        return Err(Error::Scenario(format!(
            "period {period} must be an integer multiple of tau = {}",
            params.tau
        )));
    }
    let drift: Vec<DriftFn> = vec![
        Arc::new(|_t, x, _u| -x[0]),
        Arc::new(|_t, x, _u| -2.0 * x[1] + 0.5 * x[0].sin()),
    ];
    let coupling: Vec<CouplingFn> = vec![Arc::new(|_t, _x1, u| u)];
    let majorants = AnalyticMajorants {
        jacobian: Arc::new(|_t, _rho| 2.0),
        coupling: vec![Arc::new(|_t, _y, ubar| ubar)],
    };
    let system = TriangularSystem::new("contractive", drift, coupling)?.with_majorants(majorants)?;
    let gating = Gating::OnFirst(0.5);
    let t0 = params.t0;
    let input: ScalarFn = Arc::new(move |t| gating.gate(t, t0, period) * (0.75 + 0.25 * t.cos()));
    let scenario = Scenario {
        name: "contractive".into(),
        system,
        input,
        u_bar: Arc::new(|_| 1.0),
        beta: Arc::new(|_t, r| r),
        t_seq: periodic_t_seq(params.t0, period, params.t_end()),
        params,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Options of the synthetic three-state preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic3Options {
    /// Coupling `a_1 ≡ c1`.
    pub c1: f64,
    /// Coupling `a_2 = c2·u`.
    pub c2: f64,
    /// Damping of `x_2`.
    pub k2: f64,
    /// Damping of `x_3`.
    pub k3: f64,
    /// Gain of the bounded feedback `γ·tanh(x_1)` into `x_3`.
    pub gamma: f64,
    pub gating: Gating,
    pub period: f64,
    pub params: Params,
}

impl Default for Synthetic3Options {
    fn default() -> Self {
        // The top diagonal entry of the three-level construction grows like
        // (σ̄·period/(|I|·a))⁴; strong couplings acting over most of each
        // one-delay period keep it near 10⁸, where its half-ulp stays
        // below the 1e-8 determinant tolerance.
        Self {
            c1: 20.0,
            c2: 20.0,
            k2: 0.5,
            k3: 0.5,
            gamma: 0.5,
            gating: Gating::OnFirst(0.8),
            period: 0.2,
            params: Params {
                tau: 0.2,
                i_fraction: 0.8,
                j_shrink: 0.02,
                horizon: 8.0,
                ..Params::default()
            },
        }
    }
}

impl Synthetic3Options {
    /// Builds
    /// `ẋ₁ = c1 x₂, ẋ₂ = −k2 x₂ + c2 u x₃, ẋ₃ = −k3 x₃ + γ tanh(x₁)`
    /// with the same gated input as Example 1.
    ///
    /// With `V = ½|x|²`: `V̇ ≤ (|c1| + |c2|ū + γ)V + γ/2`, hence
    /// `β(t,R)² = (R² + γ(t−t0))·exp((|c1| + |c2| + γ)(t−t0))`.
    pub fn build(&self) -> Result<Scenario> {
        let p = self.params.clone();
        let ratio = self.period / p.tau;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Scenario(format!(
                "period {} must be an integer multiple of tau = {}",
                self.period, p.tau
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Scenario("gamma must be nonnegative".into()));
        }
        let Self {
            c1, c2, k2, k3, gamma, ..
        } = *self;
        let drift: Vec<DriftFn> = vec![
            Arc::new(|_t, _x, _u| 0.0),
            Arc::new(move |_t, x, _u| -k2 * x[1]),
            Arc::new(move |_t, x, _u| -k3 * x[2] + gamma * x[0].tanh()),
        ];
        let coupling: Vec<CouplingFn> = vec![
            Arc::new(move |_t, _x1, _u| c1),
            Arc::new(move |_t, _x1, u| c2 * u),
        ];
        let jac = (k2 * k2 + k3 * k3).sqrt();
        let majorants = AnalyticMajorants {
            jacobian: Arc::new(move |_t, _rho| jac),
            coupling: vec![
                Arc::new(move |_t, _y, _u| c1.abs()),
                Arc::new(move |_t, _y, ubar| c2.abs() * ubar),
            ],
        };
        let system = TriangularSystem::new("synthetic3", drift, coupling)?.with_majorants(majorants)?;
        let (t0, period, gating) = (p.t0, self.period, self.gating);
        let input: ScalarFn = Arc::new(move |t| gating.gate(t, t0, period) * (0.75 + 0.25 * t.cos()));
        let rate = c1.abs() + c2.abs() + gamma;
        let beta: BetaFn = Arc::new(move |t, r| {
            let s = (t - t0).max(0.0);
            ((r * r + gamma * s) * (rate * s).exp()).sqrt()
        });
        let scenario = Scenario {
            name: format!("synthetic3-{}", self.gating),
            system,
            input,
            u_bar: Arc::new(|_| 1.0),
            beta,
            t_seq: periodic_t_seq(p.t0, self.period, p.t_end()),
            params: p,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
