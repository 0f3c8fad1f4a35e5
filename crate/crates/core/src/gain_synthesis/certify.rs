//! A-posteriori certification of a synthesized schedule.
//!
//! The central check samples the Lyapunov inequality
//!
//! ```text
//! e′P(A(q) − φP⁻¹H′H)e + ½e′Ṗe + d̄ e′Pe ≤ 0
//! ```
//!
//! at random `(t, e, q)` with `|e| = 1` and `q` in the ball of radius
//! `σ_R(t−τ)`; the remaining checks run on the observer grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg::{exact_trailing_dets, min_eigenvalue, spectral_norm};
use crate::plant::Scenario;
use crate::signals::{cumulative_integral, SignalTrace, TimeGrid};

use super::lemma::LemmaPoint;
use super::schedule::GainSchedule;

/// Relative tolerance of the sampled inequality (times the sum of the
/// absolute term magnitudes).
pub const CERT_REL_TOL: f64 = 1e-10;

/// Outcome of [`certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// Sampled `(t, e, q)` triples.
    pub samples: usize,
    /// Samples violating the inequality beyond tolerance.
    pub failures: usize,
    /// Violations among the samples drawn exactly in `ker H` (`e₁ = 0`).
    pub kernel_failures: usize,
    /// Largest normalized excess `(D − φ e₁²)/scale`.
    pub worst_excess: f64,
    /// Time of the largest excess.
    pub worst_at: f64,
    /// Smallest eigenvalue of `P` over the grid points of the windows.
    pub min_eig_p: f64,
    /// Whether every window grid point passed the pivot test `P − (1−10⁻⁹)I > 0`.
    pub p_above_identity: bool,
    /// `|P(t̄0)|`.
    pub p_start_norm: f64,
    /// Whether `P = L·I` and `d = −σ̄` at every grid point off the windows.
    pub off_window_ok: bool,
    /// Largest `|det(P_{R,m} − I) − (L−1)^m| / (L−1)^m` over the grid
    /// points of all `J_ν` and all levels `m = 2..n`, with the determinant
    /// of the stored entries evaluated exactly.
    pub det_identity_max_rel: f64,
    /// `min_t (∫_{t̄0}^t d − κ(t))`; must be positive.
    pub int_d_margin: f64,
    /// `min_t (∫_{t̄0}^t d̄ − κ(t) + 1)`; must be nonnegative.
    pub int_dbar_margin: f64,
    pub kappa_monotone: bool,
    /// Whether `φ > 0` on every `A_ν` grid point.
    pub phi_positive: bool,
}

impl CertificateReport {
    /// Tolerance accepted for the determinant identity.
    pub const DET_TOL: f64 = 1e-8;

    /// Every check passed.
    pub fn passed(&self) -> bool {
        self.failures == 0
            && self.kernel_failures == 0
            && self.p_above_identity
            && self.off_window_ok
            && self.det_identity_max_rel <= Self::DET_TOL
            && self.int_d_margin > 0.0
            && self.int_dbar_margin >= -1e-9
            && self.kappa_monotone
            && self.phi_positive
    }
}

/// Sampled value of the left side and its magnitude scale at one triple.
struct Sample {
    excess: f64,
    scale: f64,
}

fn lyapunov_excess(
    sched: &GainSchedule,
    scenario: &Scenario,
    y: &SignalTrace,
    u: &SignalTrace,
    t: f64,
    e: &[f64],
    q: &[f64],
) -> Result<Sample> {
    let n = sched.n;
    let (pd, po, dpd, dpo) = sched.p_d_at(t)?;
    let tp = t - sched.tau;
    let yv = y.sample_component(tp, 0)?;
    let uv = u.sample_component(tp, 0)?;
    let a: Vec<f64> = (0..n - 1)
        .map(|i| scenario.system.coupling(i, tp, yv, uv))
        .collect();
    let d_bar = sched.d_bar.eval(t)?;
    let phi = sched.phi.eval(t)?;
    let rho = sched.envelopes.q_radius(tp)?;
    let pt = LemmaPoint {
        t,
        p_diag: &pd,
        p_off: &po,
        dp_diag: &dpd,
        dp_off: &dpo,
        a_sup: &a,
        d_bar,
        rho,
        sigma_bar: sched.envelopes.sigma_bar.eval(t)?,
    };
    let d = pt.d_at(e, q);
    let p_norm = spectral_norm(&pd, &po);
    let a_max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = p_norm * (a_max + rho) + 0.5 * spectral_norm(&dpd, &dpo) + d_bar.abs() * p_norm + phi;
    Ok(Sample {
        excess: d - phi * e[0] * e[0],
        scale,
    })
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nv > 1e-12 {
            return v.iter().map(|a| a / nv).collect();
        }
    }
}

/// Runs all checks.  `y`, `u` are the plant-grid traces the schedule was
/// synthesized from.
pub fn certify(sched: &GainSchedule, scenario: &Scenario, y: &SignalTrace, u: &SignalTrace) -> Result<CertificateReport> {
    let p = &scenario.params;
    let n = sched.n;
    let ell = n * (n + 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut failures = 0;
    let mut kernel_failures = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = sched.t_bar0;
    let span = sched.t_end - sched.t_bar0;
    let a_total: f64 = sched.windows.iter().map(|w| w.a.1 - w.a.0).sum();
    for k in 0..p.cert_samples {
        let t = if k % 2 == 1 && a_total > 0.0 {
            let mut s = rng.random::<f64>() * a_total;
            let mut t = sched.windows[0].a.0;
            for w in &sched.windows {
                let len = w.a.1 - w.a.0;
                if s <= len {
                    t = w.a.0 + s;
                    break;
                }
                s -= len;
            }
            t
        } else {
            sched.t_bar0 + rng.random::<f64>() * span
        };
        let mut e = unit_gaussian(&mut rng, n);
        let in_kernel = k % 10 == 0;
        if in_kernel {
            e[0] = 0.0;
            let rest = unit_gaussian(&mut rng, n - 1);
            e[1..].copy_from_slice(&rest);
        } else if rng.random::<bool>() {
            let w1 = 10f64.powf(-8.0 * rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let rest = unit_gaussian(&mut rng, n - 1);
            let scale = (1.0 - w1 * w1).sqrt();
            e[0] = w1;
            for (ei, ri) in e[1..].iter_mut().zip(rest) {
                *ei = scale * ri;
            }
        }
        let tp = t - sched.tau;
        let rho = sched.envelopes.q_radius(tp)?;
        let dir = unit_gaussian(&mut rng, ell);
        let rad = rho * rng.random::<f64>().powf(1.0 / ell as f64);
        let q: Vec<f64> = dir.iter().map(|v| v * rad).collect();
        let s = lyapunov_excess(sched, scenario, y, u, t, &e, &q)?;
        let rel = s.excess / s.scale.max(f64::MIN_POSITIVE);
        if s.excess > CERT_REL_TOL * s.scale {
            failures += 1;
            if in_kernel {
                kernel_failures += 1;
            }
        }
        if rel > worst {
            worst = rel;
            worst_at = t;
        }
    }

    // Grid checks.
    let grid = &sched.grid;
    let mut min_eig = f64::INFINITY;
    let mut above = true;
    let mut phi_pos = true;
    for w in &sched.windows {
        for k in w.ka.0..=w.ka.1 {
            let t = grid.time(k);
            let (d, e) = sched.p_at(t)?;
            min_eig = min_eig.min(min_eigenvalue(&d, &e));
            if crate::linalg::shifted_pivots(&d, &e, 1.0 - super::schedule::PD_MARGIN)
                .iter()
                .any(|&v| !(v > 0.0))
            {
                above = false;
            }
            // The right edge belongs to the following off-window piece.
            if k < w.ka.1 && !(sched.phi.eval(t)? > 0.0) {
                phi_pos = false;
            }
        }
    }
    let (d0, e0) = sched.p_at(sched.t_bar0)?;
    let local = TimeGrid::new(sched.t_bar0, sched.t_end, p.h)?;
    let mut off_ok = true;
    for t in local.times() {
        if sched.window_at(t).is_some() {
            continue;
        }
        let (d, e) = sched.p_at(t)?;
        if d.iter().any(|&v| v != sched.l) || e.iter().any(|&v| v != 0.0) {
            off_ok = false;
        }
        if sched.d.eval(t)? != -sched.envelopes.sigma_bar.eval(t)? {
            off_ok = false;
        }
    }
    if min_eig == f64::INFINITY {
        min_eig = min_eigenvalue(&d0, &e0);
    }
    let tol = 1e-9 * p.h;
    // det(P_m − I) of the trailing blocks, exactly, at the grid points of every J_ν.
    let mut det_rel = 0.0f64;
    for w in &sched.windows {
        for t in local.times().filter(|&t| t >= w.window.j.0 - tol && t <= w.window.j.1 + tol) {
            let (d, e) = sched.p_at(t)?;
            let dets = exact_trailing_dets(&d, &e, 1.0);
            for m in 2..=n {
                let target = (sched.l - 1.0).powi(m as i32);
                det_rel = det_rel.max((dets[m] - target).abs() / target);
            }
        }
    }
    let int_d = cumulative_integral(&sched.d, &local)?;
    let int_db = cumulative_integral(&sched.d_bar, &local)?;
    let mut int_d_margin = f64::INFINITY;
    let mut int_db_margin = f64::INFINITY;
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    for (k, t) in local.times().enumerate() {
        let kap = sched.kappa.eval(t)?;
        if kap < prev {
            monotone = false;
        }
        prev = kap;
        int_d_margin = int_d_margin.min(int_d[k] - kap);
        int_db_margin = int_db_margin.min(int_db[k] - kap + 1.0);
    }
    Ok(CertificateReport {
        samples: p.cert_samples,
        failures,
        kernel_failures,
        worst_excess: worst,
        worst_at,
        min_eig_p: min_eig,
        p_above_identity: above,
        p_start_norm: spectral_norm(&d0, &e0),
        off_window_ok: off_ok,
        det_identity_max_rel: det_rel,
        int_d_margin,
        int_dbar_margin: int_db_margin,
        kappa_monotone: monotone,
        phi_positive: phi_pos,
    })
}
