//! Jacobian and coupling majorants σ_R, σ_{R,i} and their root-sum-square σ̄_R.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::plant::{EnvelopeMode, Scenario};
use crate::signals::{PiecewiseC1Fn, SampledRun, Segment};

/// Inflation applied to grid-maximized majorants.
pub const NUMERIC_INFLATION: f64 = 1.25;
/// Samples per axis of the numeric box search.
pub const SAMPLES_PER_AXIS: usize = 32;
/// Knot cells of the numeric envelopes.
const NUMERIC_CELLS: usize = 128;
/// Largest full lattice evaluated before switching to a Halton point set.
const MAX_LATTICE: usize = 40_000;

/// The σ-envelopes for one radius `R` and tube constant ξ.
#[derive(Debug, Clone)]
pub struct BoundEnvelopes {
    /// Majorant of the drift Jacobian (the q-ball radius).
    pub sigma_r: PiecewiseC1Fn,
    /// Majorants of `|a_i|`, `i = 1..n−1`.
    pub sigma_ri: Vec<PiecewiseC1Fn>,
    /// `σ̄ = (σ_R² + Σ σ_{R,i}²)^{1/2}`.
    pub sigma_bar: PiecewiseC1Fn,
    pub r: f64,
    pub xi: f64,
    pub mode: EnvelopeMode,
}

impl BoundEnvelopes {
    /// Radius of the q-ball `Q_R(t)`.
    pub fn q_radius(&self, t: f64) -> Result<f64> {
        self.sigma_r.eval(t)
    }

    /// Right end of the envelope domain.
    pub fn t_end(&self) -> f64 {
        self.sigma_bar.t_end()
    }
}

/// Right end of the envelope domain for a scenario: covers the horizon,
/// the whole H2 sequence and the delayed integration spans.
pub fn envelope_horizon(scenario: &Scenario) -> f64 {
    let p = &scenario.params;
    let t_last = scenario.t_seq.last().copied().unwrap_or(p.t_end());
    p.t_end().max(t_last) + 2.0 * p.tau + 1.0
}

/// Wraps a closure, collapsing it to a constant segment when it is
/// constant on a probe lattice.
fn analytic_fn(t0: f64, t1: f64, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Result<PiecewiseC1Fn> {
    let probes: Vec<f64> = (0..=64).map(|k| f(t0 + (t1 - t0) * k as f64 / 64.0)).collect();
    if probes.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("analytic envelope".into()));
    }
    if probes.iter().all(|&v| v == probes[0]) {
        PiecewiseC1Fn::constant(t0, t1, probes[0])
    } else {
        PiecewiseC1Fn::analytic(t0, t1, f)
    }
}

/// Builds the envelopes from the system's analytic majorants when
/// available (and requested), otherwise by grid maximization.
pub fn build_sigma_envelopes(scenario: &Scenario, r: f64, xi: f64) -> Result<BoundEnvelopes> {
    if !(r > 0.0) || !(xi > 0.0) {
        return Err(Error::Scenario(format!("need R > 0 and xi > 0, got R = {r}, xi = {xi}")));
    }
    let t0 = scenario.params.t0;
    let t1 = envelope_horizon(scenario);
    let beta = scenario.beta.clone();
    let u_bar = scenario.u_bar.clone();
    match (scenario.params.envelopes, scenario.system.majorants()) {
        (EnvelopeMode::Analytic, Some(maj)) => {
            let jac = maj.jacobian.clone();
            let (b, ub) = (beta.clone(), u_bar.clone());
            let sigma_r = analytic_fn(
                t0,
                t1,
                Arc::new(move |t| jac(t, 2.0 * b(t, r) + ub(t) + xi)),
            )?;
            let mut sigma_ri = Vec::new();
            for c in &maj.coupling {
                let (c, b, ub) = (c.clone(), beta.clone(), u_bar.clone());
                sigma_ri.push(analytic_fn(t0, t1, Arc::new(move |t| c(t, b(t, r), ub(t))))?);
            }
            let parts: Vec<PiecewiseC1Fn> = std::iter::once(sigma_r.clone())
                .chain(sigma_ri.iter().cloned())
                .collect();
            let sigma_bar = analytic_fn(
                t0,
                t1,
                Arc::new(move |t| {
                    parts
                        .iter()
                        .map(|f| f.eval(t).map(|v| v * v).unwrap_or(f64::NAN))
                        .sum::<f64>()
                        .sqrt()
                }),
            )?;
            Ok(BoundEnvelopes {
                sigma_r,
                sigma_ri,
                sigma_bar,
                r,
                xi,
                mode: EnvelopeMode::Analytic,
            })
        }
        _ => numeric_envelopes(scenario, r, xi, t0, t1),
    }
}

/// Radical-inverse (van der Corput) sequence in base `b`.
fn radical_inverse(mut k: usize, b: usize) -> f64 {
    let mut f = 1.0;
    let mut out = 0.0;
    while k > 0 {
        f /= b as f64;
        out += f * (k % b) as f64;
        k /= b;
    }
    out
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Sample points of the cube `[−1, 1]^dim` restricted to the unit ball.
fn ball_points(dim: usize) -> Vec<Vec<f64>> {
    let axis = |j: usize| -1.0 + 2.0 * j as f64 / (SAMPLES_PER_AXIS - 1) as f64;
    let mut pts = Vec::new();
    let full = SAMPLES_PER_AXIS.checked_pow(dim as u32).unwrap_or(usize::MAX);
    if full <= MAX_LATTICE {
        for idx in 0..full {
            let mut rem = idx;
            let p: Vec<f64> = (0..dim)
                .map(|_| {
                    let j = rem % SAMPLES_PER_AXIS;
                    rem /= SAMPLES_PER_AXIS;
                    axis(j)
                })
                .collect();
            pts.push(p);
        }
    } else {
        for k in 1..=32_768 {
            pts.push(
                (0..dim)
                    .map(|a| -1.0 + 2.0 * radical_inverse(k, PRIMES[a % PRIMES.len()]))
                    .collect(),
            );
        }
    }
    pts.retain(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
    pts
}

/// Grid-maximized envelopes on a coarse knot lattice.
fn numeric_envelopes(scenario: &Scenario, r: f64, xi: f64, t0: f64, t1: f64) -> Result<BoundEnvelopes> {
    let sys = &scenario.system;
    let n = sys.n();
    let hc = (t1 - t0) / NUMERIC_CELLS as f64;
    let nodes: Vec<f64> = (0..=NUMERIC_CELLS).map(|k| t0 + k as f64 * hc).collect();
    let per_drift: Vec<Vec<Vec<f64>>> = (1..n).map(|i| ball_points(i + 2)).collect();

    // Raw per-node maxima.
    let mut raw_jac = Vec::with_capacity(nodes.len());
    let mut raw_cpl = vec![Vec::with_capacity(nodes.len()); n - 1];
    for &t in &nodes {
        let rho = 2.0 * (scenario.beta)(t, r) + (scenario.u_bar)(t) + xi;
        let mut sumsq = 0.0;
        for i in 1..n {
            // variables: x_0..x_i (i+1 of them) and u.
            let mut maxima = vec![0.0f64; i];
            for p in &per_drift[i - 1] {
                let x: Vec<f64> = p[..=i].iter().map(|v| v * rho).collect();
                let u = p[i + 1] * rho;
                for j in 1..=i {
                    let step = 1e-6 * rho.max(1.0);
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[j] += step;
                    xm[j] -= step;
                    let dv = (sys.drift(i, t, &xp, u) - sys.drift(i, t, &xm, u)) / (2.0 * step);
                    if !dv.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "partial of f_{} w.r.t. x_{} at t = {t}",
                            i + 1,
                            j + 1
                        )));
                    }
                    maxima[j - 1] = maxima[j - 1].max(dv.abs());
                }
            }
            sumsq += maxima.iter().map(|v| v * v).sum::<f64>();
        }
        raw_jac.push(sumsq.sqrt());
        let (yb, ub) = ((scenario.beta)(t, r), (scenario.u_bar)(t));
        for (i, out) in raw_cpl.iter_mut().enumerate() {
            let mut best = 0.0f64;
            for a in 0..SAMPLES_PER_AXIS {
                let y = yb * (-1.0 + 2.0 * a as f64 / (SAMPLES_PER_AXIS - 1) as f64);
                for b in 0..SAMPLES_PER_AXIS {
                    let u = ub * (-1.0 + 2.0 * b as f64 / (SAMPLES_PER_AXIS - 1) as f64);
                    let v = sys.coupling(i, t, y, u).abs();
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("a_{} at t = {t}", i + 1)));
                    }
                    best = best.max(v);
                }
            }
            out.push(best);
        }
    }
    let sigma_r_knots = lookahead_knots(&raw_jac);
    let ri_knots: Vec<Vec<f64>> = raw_cpl.iter().map(|v| lookahead_knots(v)).collect();
    let bar_knots: Vec<f64> = (0..nodes.len())
        .map(|k| {
            (sigma_r_knots[k].powi(2) + ri_knots.iter().map(|v| v[k].powi(2)).sum::<f64>()).sqrt()
        })
        .collect();
    let mk = |vals: Vec<f64>| -> Result<PiecewiseC1Fn> {
        let run = SampledRun::new(t0, hc, vals.clone(), vec![0.0; vals.len()])?;
        let end = run.t_end();
        PiecewiseC1Fn::new(vec![t0, end], vec![Segment::Sampled(run)], vec![])
    };
    Ok(BoundEnvelopes {
        sigma_r: mk(sigma_r_knots)?,
        sigma_ri: ri_knots.into_iter().map(mk).collect::<Result<_>>()?,
        sigma_bar: mk(bar_knots)?,
        r,
        xi,
        mode: EnvelopeMode::Numeric,
    })
}

/// Knot values `1.25·max(raw[0..=k+1])`: nondecreasing, and on every
/// zero-slope cell `[t_k, t_{k+1}]` the interpolant dominates the inflated
/// raw maxima up to the cell's right end.
fn lookahead_knots(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut running = 0.0f64;
    for k in 0..raw.len() {
        running = running.max(raw[k]);
        let ahead = if k + 1 < raw.len() { running.max(raw[k + 1]) } else { running };
        out.push(NUMERIC_INFLATION * ahead);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookahead_is_monotone_and_dominating() {
        let raw = [1.0, 3.0, 2.0, 0.5, 4.0];
        let k = lookahead_knots(&raw);
        assert!(k.windows(2).all(|w| w[1] >= w[0]));
        for i in 0..raw.len() - 1 {
            assert!(k[i] >= NUMERIC_INFLATION * raw[i + 1]);
        }
    }

    #[test]
    fn ball_points_inside_ball() {
        for dim in 2..=4 {
            let pts = ball_points(dim);
            assert!(!pts.is_empty());
            assert!(pts.iter().all(|p| p.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12));
        }
    }
}
