//! Deterministic time grids, piecewise-C¹ functions, interpolated traces,
//! quadrature and the τ-shift.
//!
//! Everything in this module is immutable after construction.  Grids are
//! uniform; a grid time is always computed as `t_start + k·h` so that two
//! grids with the same start and step produce bit-identical sample times.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative tolerance used when matching times against grid points and
/// domain boundaries (in units of the step).
pub const GRID_TOL: f64 = 1e-9;

/// Tolerance used for the continuity checks of [`PiecewiseC1Fn`]
/// (scaled by `1 + |value|`).
pub const CONTINUITY_TOL: f64 = 1e-9;

/// Uniform time grid `t_start + k·h`, `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    h: f64,
    count: usize,
}

impl TimeGrid {
    /// Builds the grid covering `[t_start, t_end]` with step `h`.
    ///
    /// `(t_end − t_start)/h` must be an integer within a relative tolerance
    /// of `1e-9`.
    pub fn new(t_start: f64, t_end: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Grid(format!("step h = {h} must be positive and finite")));
        }
        if !t_start.is_finite() || !t_end.is_finite() || !(t_end > t_start) {
            return Err(Error::Grid(format!(
                "need finite t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        let steps = (t_end - t_start) / h;
        let rounded = steps.round();
        if (steps - rounded).abs() > GRID_TOL * steps.max(1.0) {
            return Err(Error::Grid(format!(
                "(t_end - t_start)/h = {steps} is not an integer"
            )));
        }
        Ok(Self {
            t_start,
            h,
            count: rounded as usize + 1,
        })
    }

    /// Builds the grid with `count ≥ 2` samples starting at `t_start`.
    pub fn from_count(t_start: f64, h: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Grid(format!("need at least two samples, got {count}")));
        }
        if !(h > 0.0) || !h.is_finite() || !t_start.is_finite() {
            return Err(Error::Grid(format!("invalid start {t_start} or step {h}")));
        }
        Ok(Self { t_start, h, count })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.count - 1)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Time of sample `k`.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.h
    }

    /// Iterator over all grid times.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.time(k))
    }

    fn tol(&self, t: f64) -> f64 {
        GRID_TOL * self.h + 1e-13 * t.abs().max(1.0)
    }

    /// Whether `t` lies in `[t_start, t_end]` up to the grid tolerance.
    pub fn contains(&self, t: f64) -> bool {
        let tol = self.tol(t);
        t >= self.t_start - tol && t <= self.t_end() + tol
    }

    /// Index of the grid point equal to `t` (within tolerance), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if !self.contains(t) {
            return None;
        }
        let k = ((t - self.t_start) / self.h).round().max(0.0) as usize;
        let k = k.min(self.count - 1);
        if (self.time(k) - t).abs() <= self.tol(t) {
            Some(k)
        } else {
            None
        }
    }

    /// Index of the grid point nearest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let k = ((t - self.t_start) / self.h).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.count - 1)
        }
    }

    /// Cell containing `t`: returns `(k, θ)` with `t = time(k) + θ·h`,
    /// `θ ∈ [0, 1]` and `k ≤ count − 2`.
    pub fn locate(&self, t: f64, what: &str) -> Result<(usize, f64)> {
        if !self.contains(t) {
            return Err(Error::Domain {
                what: what.to_string(),
                t,
                start: self.t_start,
                end: self.t_end(),
            });
        }
        if let Some(k) = self.index_of(t) {
            return Ok(if k == self.count - 1 {
                (k - 1, 1.0)
            } else {
                (k, 0.0)
            });
        }
        let s = (t - self.t_start) / self.h;
        let k = (s.floor().max(0.0) as usize).min(self.count - 2);
        let theta = ((t - self.time(k)) / self.h).clamp(0.0, 1.0);
        Ok((k, theta))
    }

    /// The same grid translated by `tau`.
    pub fn shifted(&self, tau: f64) -> Self {
        Self {
            t_start: self.t_start + tau,
            ..*self
        }
    }
}

/// Cubic Hermite basis evaluation on a cell of width `w`.
///
/// Returns value and derivative at normalized position `θ`.
#[inline]
fn hermite_eval(theta: f64, w: f64, v0: f64, s0: f64, v1: f64, s1: f64) -> (f64, f64) {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * v0 + h10 * w * s0 + h01 * v1 + h11 * w * s1;
    let d00 = 6.0 * t2 - 6.0 * theta;
    let d10 = 3.0 * t2 - 4.0 * theta + 1.0;
    let d11 = 3.0 * t2 - 2.0 * theta;
    let deriv = d00 * (v0 - v1) / w + d10 * s0 + d11 * s1;
    (value, deriv)
}

/// Exact integral of a full Hermite cell.
#[inline]
fn hermite_cell_integral(w: f64, v0: f64, s0: f64, v1: f64, s1: f64) -> f64 {
    w * (v0 + v1) / 2.0 + w * w * (s0 - s1) / 12.0
}

/// Three-point Gauss–Legendre nodes and weights on `[-1, 1]`
/// (exact for polynomials of degree ≤ 5).
const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Five-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664_0, 0.236_926_885_056_189_08),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.906_179_845_938_664_0, 0.236_926_885_056_189_08),
];

fn gauss<F: Fn(f64) -> f64>(rule: &[(f64, f64)], a: f64, b: f64, f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// A single cubic Hermite polynomial on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteCubic {
    pub t0: f64,
    pub v0: f64,
    pub s0: f64,
    pub t1: f64,
    pub v1: f64,
    pub s1: f64,
}

impl HermiteCubic {
    /// Value and derivative at `t` (no domain check; the polynomial is total).
    pub fn eval_d(&self, t: f64) -> (f64, f64) {
        let w = self.t1 - self.t0;
        hermite_eval((t - self.t0) / w, w, self.v0, self.s0, self.v1, self.s1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_d(t).0
    }

    /// Exact integral over `[a, b] ⊂ [t0, t1]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a == self.t0 && b == self.t1 {
            return hermite_cell_integral(self.t1 - self.t0, self.v0, self.s0, self.v1, self.s1);
        }
        gauss(&GL3, a, b, |t| self.eval(t))
    }
}

/// The C¹ bridge: the unique cubic matching `(v0, s0)` at `t0` and
/// `(v1, s1)` at `t1`.
pub fn bridge(t0: f64, v0: f64, s0: f64, t1: f64, v1: f64, s1: f64) -> Result<Segment> {
    if !(t1 > t0) {
        return Err(Error::DegenerateInterval { t0, t1 });
    }
    Ok(Segment::Hermite(HermiteCubic {
        t0,
        v0,
        s0,
        t1,
        v1,
        s1,
    }))
}

/// Smoothstep `3θ² − 2θ³` on `[0, 1]` with its derivative; the zero-slope
/// Hermite bridge from 0 to 1.
#[inline]
pub fn smoothstep(theta: f64) -> (f64, f64) {
    if theta <= 0.0 {
        (0.0, 0.0)
    } else if theta >= 1.0 {
        (1.0, 0.0)
    } else {
        (
            theta * theta * (3.0 - 2.0 * theta),
            6.0 * theta * (1.0 - theta),
        )
    }
}

/// A run of consecutive Hermite cells on a uniform knot lattice
/// `t0 + k·h`, `k = 0..values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRun {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl SampledRun {
    /// Builds a run; `values` and `slopes` need at least two knots.
    pub fn new(t0: f64, h: f64, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values.len() != slopes.len() {
            return Err(Error::Piecewise(format!(
                "sampled run needs >= 2 knots with matching slopes (got {} values, {} slopes)",
                values.len(),
                slopes.len()
            )));
        }
        if !(h > 0.0) {
            return Err(Error::Piecewise(format!("sampled run step {h} must be positive")));
        }
        if values.iter().chain(slopes.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampled run knot".into()));
        }
        Ok(Self {
            t0,
            h,
            values,
            slopes,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.values.len() - 1) as f64 * self.h
    }

    fn cell(&self, t: f64) -> (usize, f64) {
        let last = self.values.len() - 2;
        let mut s = (t - self.t0) / self.h;
        // Knot times are hit exactly despite rounding in `t`, so that
        // breakpoint limits see the knot data rather than a cell interior.
        if (s - s.round()).abs() <= GRID_TOL {
            s = s.round();
        }
        let k = if s <= 0.0 {
            0
        } else {
            (s.floor() as usize).min(last)
        };
        (k, (s - k as f64).clamp(0.0, 1.0))
    }

    pub fn eval_d(&self, t: f64) -> (f64, f64) {
        let (k, theta) = self.cell(t);
        hermite_eval(
            theta,
            self.h,
            self.values[k],
            self.slopes[k],
            self.values[k + 1],
            self.slopes[k + 1],
        )
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let (ka, _) = self.cell(a);
        let (kb, _) = self.cell(b);
        let mut total = 0.0;
        for k in ka..=kb {
            let c0 = self.t0 + k as f64 * self.h;
            let c1 = self.t0 + (k + 1) as f64 * self.h;
            let lo = a.max(c0);
            let hi = b.min(c1);
            if hi <= lo {
                continue;
            }
            let (v0, s0, v1, s1) = (
                self.values[k],
                self.slopes[k],
                self.values[k + 1],
                self.slopes[k + 1],
            );
            if lo == c0 && hi == c1 {
                total += hermite_cell_integral(self.h, v0, s0, v1, s1);
            } else {
                total += gauss(&GL3, lo, hi, |t| {
                    hermite_eval((t - c0) / self.h, self.h, v0, s0, v1, s1).0
                });
            }
        }
        total
    }
}

/// Closure type of analytic segments.
pub type AnalyticFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One piece of a [`PiecewiseC1Fn`].
#[derive(Clone)]
pub enum Segment {
    /// Constant value.
    Constant(f64),
    /// Smooth closure; its derivative is taken by central differences.
    Analytic(AnalyticFn),
    /// Single cubic Hermite bridge.
    Hermite(HermiteCubic),
    /// Uniform run of Hermite cells.
    Sampled(SampledRun),
}

impl fmt::Debug for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Segment::Constant(c) => write!(f, "Constant({c})"),
            Segment::Analytic(_) => write!(f, "Analytic(..)"),
            Segment::Hermite(h) => write!(f, "{h:?}"),
            Segment::Sampled(r) => write!(
                f,
                "Sampled(t0={}, h={}, knots={})",
                r.t0,
                r.h,
                r.values.len()
            ),
        }
    }
}

/// Central-difference step for analytic segments.
fn fd_step(t: f64) -> f64 {
    1e-5 * t.abs().max(1.0)
}

impl Segment {
    /// Value and derivative at `t`.
    pub fn eval_d(&self, t: f64) -> (f64, f64) {
        match self {
            Segment::Constant(c) => (*c, 0.0),
            Segment::Analytic(f) => {
                let d = fd_step(t);
                (f(t), (f(t + d) - f(t - d)) / (2.0 * d))
            }
            Segment::Hermite(hc) => hc.eval_d(t),
            Segment::Sampled(run) => run.eval_d(t),
        }
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Segment::Constant(c) => c * (b - a),
            Segment::Analytic(f) => {
                let pieces = ((b - a) / 0.01).ceil().clamp(4.0, 1e5) as usize;
                let w = (b - a) / pieces as f64;
                (0..pieces)
                    .map(|k| {
                        let lo = a + k as f64 * w;
                        gauss(&GL5, lo, lo + w, |t| f(t))
                    })
                    .sum()
            }
            Segment::Hermite(hc) => hc.integral(a, b),
            Segment::Sampled(run) => run.integral(a, b),
        }
    }
}

/// How two adjacent segments are joined at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Joint {
    /// Value and derivative continuous.
    C1,
    /// Value continuous only.
    C0,
    /// Deliberate jump (used for piecewise-continuous gains such as φ).
    Jump,
}

/// Scalar piecewise function on `[breaks[0], breaks[last]]` whose
/// declared joints are verified at construction.
#[derive(Debug, Clone)]
pub struct PiecewiseC1Fn {
    breaks: Vec<f64>,
    segments: Vec<Segment>,
    joints: Vec<Joint>,
}

impl PiecewiseC1Fn {
    /// Builds and validates a piecewise function.
    ///
    /// `breaks` has one more entry than `segments`; `joints` has one entry
    /// per interior breakpoint.
    pub fn new(breaks: Vec<f64>, segments: Vec<Segment>, joints: Vec<Joint>) -> Result<Self> {
        if segments.is_empty() || breaks.len() != segments.len() + 1 {
            return Err(Error::Piecewise(format!(
                "{} breakpoints for {} segments",
                breaks.len(),
                segments.len()
            )));
        }
        if joints.len() != segments.len() - 1 {
            return Err(Error::Piecewise(format!(
                "{} joints for {} interior breakpoints",
                joints.len(),
                segments.len() - 1
            )));
        }
        for w in breaks.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Piecewise(format!(
                    "breakpoints not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let f = Self {
            breaks,
            segments,
            joints,
        };
        for (j, joint) in f.joints.iter().enumerate() {
            let tb = f.breaks[j + 1];
            let (lv, ld) = f.segments[j].eval_d(tb);
            let (rv, rd) = f.segments[j + 1].eval_d(tb);
            if !lv.is_finite() || !rv.is_finite() {
                return Err(Error::NonFinite(format!("piecewise value at breakpoint {tb}")));
            }
            let value_ok = (lv - rv).abs() <= CONTINUITY_TOL * (1.0 + lv.abs().max(rv.abs()));
            let slope_ok = (ld - rd).abs() <= CONTINUITY_TOL * (1.0 + ld.abs().max(rd.abs()));
            match joint {
                Joint::Jump => {}
                Joint::C0 if !value_ok => {
                    return Err(Error::Piecewise(format!(
                        "value jump at t = {tb}: {lv} vs {rv}"
                    )))
                }
                Joint::C1 if !value_ok || !slope_ok => {
                    return Err(Error::Piecewise(format!(
                        "C1 joint broken at t = {tb}: values {lv} vs {rv}, slopes {ld} vs {rd}"
                    )))
                }
                _ => {}
            }
        }
        Ok(f)
    }

    /// Constant function on `[t0, t1]`.
    pub fn constant(t0: f64, t1: f64, c: f64) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::DegenerateInterval { t0, t1 });
        }
        Self::new(vec![t0, t1], vec![Segment::Constant(c)], vec![])
    }

    /// Single analytic segment on `[t0, t1]`.
    pub fn analytic(t0: f64, t1: f64, f: AnalyticFn) -> Result<Self> {
        if !(t1 > t0) {
            return Err(Error::DegenerateInterval { t0, t1 });
        }
        Self::new(vec![t0, t1], vec![Segment::Analytic(f)], vec![])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn t_start(&self) -> f64 {
        self.breaks[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.breaks.last().expect("validated non-empty")
    }

    fn tol(&self) -> f64 {
        GRID_TOL * 1e-3 * (self.t_end() - self.t_start()).max(1.0)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let tol = self.tol();
        if t.is_nan() || t < self.t_start() - tol || t > self.t_end() + tol {
            return Err(Error::Domain {
                what: "piecewise function".into(),
                t,
                start: self.t_start(),
                end: self.t_end(),
            });
        }
        Ok(())
    }

    /// Index of the segment used at `t` (the right segment at breakpoints).
    fn segment_index(&self, t: f64) -> usize {
        let idx = self.breaks.partition_point(|&b| b <= t);
        idx.saturating_sub(1).min(self.segments.len() - 1)
    }

    /// Value and derivative at `t`.
    pub fn eval_d(&self, t: f64) -> Result<(f64, f64)> {
        self.check_domain(t)?;
        Ok(self.segments[self.segment_index(t)].eval_d(t))
    }

    /// Value at `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.eval_d(t).map(|(v, _)| v)
    }

    /// Left and right limits (value, derivative) at interior breakpoint `j`
    /// (`1 ≤ j ≤ segments − 1`).
    pub fn limits_at_break(&self, j: usize) -> ((f64, f64), (f64, f64)) {
        let tb = self.breaks[j];
        (self.segments[j - 1].eval_d(tb), self.segments[j].eval_d(tb))
    }

    /// Composite quadrature of `f` over `[a, b]` respecting breakpoints.
    ///
    /// Constant and Hermite pieces are integrated exactly; analytic pieces
    /// use composite five-point Gauss–Legendre on sub-cells of width ≤ 0.01.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        integrate(self, a, b)
    }
}

/// Integral of `f` over `[a, b]` (`a > b` yields the negated integral).
pub fn integrate(f: &PiecewiseC1Fn, a: f64, b: f64) -> Result<f64> {
    f.check_domain(a)?;
    f.check_domain(b)?;
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a).map(|v| -v);
    }
    let a = a.max(f.t_start());
    let b = b.min(f.t_end());
    let first = f.segment_index(a);
    let mut total = 0.0;
    for j in first..f.segments.len() {
        let lo = a.max(f.breaks[j]);
        let hi = b.min(f.breaks[j + 1]);
        if hi > lo {
            total += f.segments[j].integral(lo, hi);
        }
        if f.breaks[j + 1] >= b {
            break;
        }
    }
    Ok(total)
}

/// Running integral `∫_{t_start}^{t_k} f` at every point of `grid`.
pub fn cumulative_integral(f: &PiecewiseC1Fn, grid: &TimeGrid) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.count());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..grid.count() {
        acc += integrate(f, grid.time(k - 1), grid.time(k))?;
        out.push(acc);
    }
    Ok(out)
}

/// Interpolation order of a [`SignalTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Piecewise linear between samples.
    Linear,
    /// Cubic Hermite with fourth-order finite-difference knot slopes.
    Cubic,
}

/// Uniformly sampled vector signal.
#[derive(Debug, Clone)]
pub struct SignalTrace {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    slopes: Vec<f64>,
    interp: Interpolation,
    label: String,
}

impl SignalTrace {
    /// Builds a trace from row-major samples (`count × dim`).
    pub fn new(
        grid: TimeGrid,
        dim: usize,
        values: Vec<f64>,
        interp: Interpolation,
        label: impl Into<String>,
    ) -> Result<Self> {
        let label = label.into();
        if dim == 0 {
            return Err(Error::Trace(format!("{label}: dimension must be positive")));
        }
        if values.len() != grid.count() * dim {
            return Err(Error::Trace(format!(
                "{label}: {} values for {} samples of dimension {dim}",
                values.len(),
                grid.count()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{label}: sample {} component {}",
                pos / dim,
                pos % dim
            )));
        }
        let slopes = fd_slopes(&values, dim, grid.h());
        Ok(Self {
            grid,
            dim,
            values,
            slopes,
            interp,
            label,
        })
    }

    /// Samples a closure at every grid point.
    pub fn from_fn<F: FnMut(f64) -> Vec<f64>>(
        grid: TimeGrid,
        dim: usize,
        mut f: F,
        interp: Interpolation,
        label: impl Into<String>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.count() * dim);
        for t in grid.times() {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::Trace(format!(
                    "closure returned {} components, expected {dim}",
                    v.len()
                )));
            }
            values.extend_from_slice(&v);
        }
        Self::new(grid, dim, values, interp, label)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    /// Row-major sample storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored sample `k`.
    #[inline]
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Knot slope (finite-difference estimate) of component `i` at sample `k`.
    #[inline]
    pub fn slope_at(&self, k: usize, i: usize) -> f64 {
        self.slopes[k * self.dim + i]
    }

    /// Same samples with a different interpolation order.
    pub fn with_interpolation(mut self, interp: Interpolation) -> Self {
        self.interp = interp;
        self
    }

    /// Same samples under a new label.
    pub fn relabeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Interpolated value of component `i` and its time derivative.
    pub fn sample_component_d(&self, t: f64, i: usize) -> Result<(f64, f64)> {
        let (k, theta) = self.grid.locate(t, &self.label)?;
        let d = self.dim;
        let v0 = self.values[k * d + i];
        let v1 = self.values[(k + 1) * d + i];
        if theta == 0.0 {
            return Ok((v0, self.slope_here(k, i, v1 - v0)));
        }
        if theta == 1.0 {
            return Ok((v1, self.slope_here(k + 1, i, v1 - v0)));
        }
        let h = self.grid.h();
        Ok(match self.interp {
            Interpolation::Linear => (v0 + theta * (v1 - v0), (v1 - v0) / h),
            Interpolation::Cubic => hermite_eval(
                theta,
                h,
                v0,
                self.slopes[k * d + i],
                v1,
                self.slopes[(k + 1) * d + i],
            ),
        })
    }

    fn slope_here(&self, k: usize, i: usize, secant: f64) -> f64 {
        match self.interp {
            Interpolation::Linear => secant / self.grid.h(),
            Interpolation::Cubic => self.slopes[k * self.dim + i],
        }
    }

    /// Interpolated value of component `i`.
    pub fn sample_component(&self, t: f64, i: usize) -> Result<f64> {
        self.sample_component_d(t, i).map(|(v, _)| v)
    }

    /// Interpolated vector at `t`, written into `out`.
    pub fn sample_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.sample_component(t, i)?;
        }
        Ok(())
    }

    /// Interpolated vector at `t`; exact at grid points.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(t, &mut out)?;
        Ok(out)
    }

    /// Euclidean norm of every sample.
    pub fn norms(&self) -> Vec<f64> {
        self.values
            .chunks(self.dim)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// A copy in which every sample at time `≥ t_cut` is replaced by
    /// `f(t, old_sample)`; slopes are recomputed.
    pub fn overwritten_from<F: Fn(f64, &[f64]) -> Vec<f64>>(&self, t_cut: f64, f: F) -> Result<Self> {
        let mut values = self.values.clone();
        for k in 0..self.grid.count() {
            let t = self.grid.time(k);
            if t >= t_cut {
                let new = f(t, self.at(k));
                values[k * self.dim..(k + 1) * self.dim].copy_from_slice(&new[..self.dim]);
            }
        }
        Self::new(self.grid, self.dim, values, self.interp, self.label.clone())
    }
}

/// The τ-time shift `g_τ(t) = g(t − τ)`: same samples on the translated grid.
pub fn shift_tau(trace: &SignalTrace, tau: f64) -> Result<SignalTrace> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Trace(format!("shift tau = {tau} must be positive")));
    }
    Ok(SignalTrace {
        grid: trace.grid.shifted(tau),
        ..trace.clone()
    })
}

/// Fourth-order finite-difference knot slopes (one-sided five-point
/// formulas at the ends; lower order for very short traces).
fn fd_slopes(values: &[f64], dim: usize, h: f64) -> Vec<f64> {
    let n = values.len() / dim;
    let mut out = vec![0.0; values.len()];
    let v = |k: usize, i: usize| values[k * dim + i];
    for i in 0..dim {
        for k in 0..n {
            let s = if n >= 5 {
                if k >= 2 && k + 2 < n {
                    (v(k - 2, i) - 8.0 * v(k - 1, i) + 8.0 * v(k + 1, i) - v(k + 2, i)) / (12.0 * h)
                } else if k == 0 {
                    (-25.0 * v(0, i) + 48.0 * v(1, i) - 36.0 * v(2, i) + 16.0 * v(3, i)
                        - 3.0 * v(4, i))
                        / (12.0 * h)
                } else if k == 1 {
                    (-3.0 * v(0, i) - 10.0 * v(1, i) + 18.0 * v(2, i) - 6.0 * v(3, i) + v(4, i))
                        / (12.0 * h)
                } else if k == n - 1 {
                    (25.0 * v(k, i) - 48.0 * v(k - 1, i) + 36.0 * v(k - 2, i)
                        - 16.0 * v(k - 3, i)
                        + 3.0 * v(k - 4, i))
                        / (12.0 * h)
                } else {
                    (3.0 * v(k + 1, i) + 10.0 * v(k, i) - 18.0 * v(k - 1, i) + 6.0 * v(k - 2, i)
                        - v(k - 3, i))
                        / (12.0 * h)
                }
            } else if n >= 3 {
                if k == 0 {
                    (-3.0 * v(0, i) + 4.0 * v(1, i) - v(2, i)) / (2.0 * h)
                } else if k == n - 1 {
                    (3.0 * v(k, i) - 4.0 * v(k - 1, i) + v(k - 2, i)) / (2.0 * h)
                } else {
                    (v(k + 1, i) - v(k - 1, i)) / (2.0 * h)
                }
            } else {
                (v(1, i) - v(0, i)) / h
            };
            out[k * dim + i] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_non_integer_span() {
        assert!(TimeGrid::new(0.0, 1.0, 0.3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.25).is_ok());
        assert!(TimeGrid::new(1.0, 0.0, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn grid_index_roundtrip() {
        let g = TimeGrid::new(0.5, 2.5, 1e-3).unwrap();
        assert_eq!(g.count(), 2001);
        for k in [0, 1, 17, 1000, 2000] {
            assert_eq!(g.index_of(g.time(k)), Some(k));
        }
        assert_eq!(g.index_of(0.5 + 0.5e-3), None);
    }

    #[test]
    fn hermite_integral_exact() {
        let hc = HermiteCubic {
            t0: 0.0,
            v0: 1.0,
            s0: -2.0,
            t1: 2.0,
            v1: 3.0,
            s1: 0.5,
        };
        let full = hc.integral(0.0, 2.0);
        let split = hc.integral(0.0, 0.7) + hc.integral(0.7, 2.0);
        assert!((full - split).abs() < 1e-14);
    }
}
