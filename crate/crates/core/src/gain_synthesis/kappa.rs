//! The nondecreasing rate-bookkeeping function κ_R.

use crate::error::{Error, Result};
use crate::signals::{bridge, integrate, Joint, PiecewiseC1Fn, Segment};

/// Number of full periods whose delayed image `[T_{ν−1}+τ, T_ν+τ]` ends by `t_end`.
pub fn full_periods(t_seq: &[f64], tau: f64, t_end: f64, h: f64) -> usize {
    t_seq
        .iter()
        .skip(1)
        .take_while(|&&t| t + tau <= t_end + 1e-9 * h)
        .count()
}

/// Value of κ on its first constant piece:
/// `−∫_{t̄0}^{t̄0 + (T_1 − T_0) + τ} σ̄ − 1`.
pub fn kappa_floor(t_seq: &[f64], tau: f64, sigma_bar: &PiecewiseC1Fn, t_bar0: f64) -> Result<f64> {
    let upper = t_bar0 + (t_seq[1] - t_seq[0]) + tau;
    Ok(-integrate(sigma_bar, t_bar0, upper)? - 1.0)
}

/// Builds κ on `[t̄0, t_end]` for the sequence `t_seq` (with `T_0 = t̄0 − τ`):
///
/// * constant [`kappa_floor`] on `[T_0+τ, T_1+τ]`;
/// * `ν − 1` on `[(T_{ν−1}+T_ν)/2 + τ, T_ν + τ]` for `ν ≥ 2`;
/// * zero-slope cubic bridges on the rising parts in between;
/// * held at its last plateau beyond the last full period.
pub fn build_kappa(
    t_seq: &[f64],
    tau: f64,
    sigma_bar: &PiecewiseC1Fn,
    t_bar0: f64,
    t_end: f64,
) -> Result<PiecewiseC1Fn> {
    if t_seq.len() < 2 {
        return Err(Error::Scenario("T sequence too short for kappa".into()));
    }
    if (t_seq[0] + tau - t_bar0).abs() > 1e-9 * t_bar0.abs().max(1.0) {
        return Err(Error::Scenario(format!(
            "kappa needs t_bar0 = T_0 + tau, got T_0 = {} and t_bar0 = {t_bar0}",
            t_seq[0]
        )));
    }
    if !(t_end > t_bar0) {
        return Err(Error::DegenerateInterval { t0: t_bar0, t1: t_end });
    }
    if *t_seq.last().expect("len checked") + tau < t_end.min(t_seq[1] + tau) {
        return Err(Error::Scenario("T sequence too short for the horizon".into()));
    }
    let k0 = kappa_floor(t_seq, tau, sigma_bar, t_bar0)?;
    let periods = full_periods(t_seq, tau, t_end, 0.0);

    let mut breaks = vec![t_bar0];
    let mut segments = Vec::new();
    let mut level = k0;
    let push = |seg: Segment, end: f64, breaks: &mut Vec<f64>, segments: &mut Vec<Segment>| -> bool {
        let start = *breaks.last().expect("non-empty");
        let end_c = end.min(t_end);
        if end_c > start {
            breaks.push(end_c);
            segments.push(seg);
        }
        end_c >= t_end
    };
    let mut done = push(Segment::Constant(k0), t_seq[1] + tau, &mut breaks, &mut segments);
    let mut nu = 2;
    while !done && nu <= periods {
        let start = t_seq[nu - 1] + tau;
        let mid = 0.5 * (t_seq[nu - 1] + t_seq[nu]) + tau;
        let target = (nu - 1) as f64;
        let rise = bridge(start, level, 0.0, mid, target, 0.0)?;
        done = push(rise, mid, &mut breaks, &mut segments);
        if !done {
            done = push(Segment::Constant(target), t_seq[nu] + tau, &mut breaks, &mut segments);
        }
        level = target;
        nu += 1;
    }
    if !done {
        push(Segment::Constant(level), t_end, &mut breaks, &mut segments);
    }
    let joints = vec![Joint::C1; segments.len() - 1];
    PiecewiseC1Fn::new(breaks, segments, joints)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_and_floor() {
        let sb = PiecewiseC1Fn::constant(0.0, 20.0, 2.0).unwrap();
        let tau = 0.5;
        let t_seq: Vec<f64> = (0..10).map(|k| k as f64 * 2.0).collect();
        let k = build_kappa(&t_seq, tau, &sb, tau, 12.0).unwrap();
        assert!((k.eval(tau).unwrap() - (-2.0 * 2.5 - 1.0)).abs() < 1e-12);
        for nu in 2..=5 {
            assert_eq!(k.eval(t_seq[nu] + tau).unwrap(), (nu - 1) as f64);
        }
        // Beyond the last full period the last plateau is held.
        assert_eq!(k.eval(12.0).unwrap(), 4.0);
    }
}
