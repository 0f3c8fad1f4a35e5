//! Gain synthesis on Example 1 against closed forms and dense checks.

use std::sync::OnceLock;

use delobs_core::gain_synthesis::levels::bordered_diag;
use delobs_core::gain_synthesis::{admissible_xi, build_sigma_envelopes, causality_audit_at, resolve_xi};
use delobs_core::{
    causality_audit, certify, simulate_plant, synthesize_default, Example1Options, GainSchedule, PlantRun, Scenario,
};
use delobs_core::Joint;
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    sc: Scenario,
    plant: PlantRun,
    sched: GainSchedule,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let sc = Example1Options::default().build().unwrap();
        let plant = simulate_plant(&sc, &[0.6, 0.8]).unwrap();
        let sched = synthesize_default(&sc, &plant.y, &plant.u).unwrap();
        Fixture { sc, plant, sched }
    })
}

fn dense(d: &[f64], e: &[f64]) -> DMatrix<f64> {
    let n = d.len();
    DMatrix::from_fn(n, n, |i, j| match (i, j) {
        _ if i == j => d[i],
        _ if j == i + 1 => e[i],
        _ if i == j + 1 => e[j],
        _ => 0.0,
    })
}

#[test]
fn example1_envelopes_are_constant() {
    // q = 1: the drift Jacobian majorant is 1 and |a_1| = |u| ≤ ū = 1, so
    // σ_R ≡ 1, σ_{R,1} ≡ 1 and σ̄ = √2.
    let sc = &fixture().sc;
    let env = build_sigma_envelopes(sc, 1.0, 5.0).unwrap();
    for t in [0.0, 3.7, 20.0, 39.9] {
        assert_eq!(env.sigma_r.eval(t).unwrap(), 1.0);
        assert_eq!(env.sigma_ri[0].eval(t).unwrap(), 1.0);
        assert!((env.sigma_bar.eval(t).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}

#[test]
fn automatic_xi_is_a_fixed_point() {
    let f = fixture();
    let p = &f.sc.params;
    let t_bar0 = p.t0 + p.tau;
    let env = resolve_xi(&f.sc, &f.sc.t_seq, t_bar0, p.r).unwrap();
    let again = admissible_xi(&f.sc, &env, &f.sc.t_seq, t_bar0, p.r).unwrap();
    assert!((again - env.xi).abs() <= 1e-12 * env.xi);
    // Closed form for constant σ̄ = √2: κ(t̄0) = −√2·(T_1 − T_0 + τ) − 1.
    let kappa0 = -(2f64.sqrt()) * (2.0 + p.tau) - 1.0;
    let expected = p.l.sqrt() * (f.sc.beta)(t_bar0, p.r) * (1.0 - kappa0).exp();
    assert!((env.xi - expected).abs() <= 1e-9 * expected, "{} vs {expected}", env.xi);
    assert_eq!(f.sched.xi, env.xi);
}

#[test]
fn kappa_reaches_the_period_levels() {
    let f = fixture();
    let tau = f.sc.params.tau;
    let s = &f.sched;
    for nu in 2..15 {
        let t = f.sc.t_seq[nu] + tau;
        assert!((s.kappa.eval(t).unwrap() - (nu as f64 - 1.0)).abs() < 1e-12, "nu = {nu}");
    }
    let kappa0 = -(2f64.sqrt()) * (2.0 + tau) - 1.0;
    assert!((s.kappa.eval(s.t_bar0).unwrap() - kappa0).abs() < 1e-9);
    let mut prev = f64::NEG_INFINITY;
    for t in s.grid.times().filter(|&t| t <= s.t_end) {
        let v = s.kappa.eval(t).unwrap();
        assert!(v >= prev - 1e-12);
        prev = v;
    }
}

#[test]
fn p_is_scaled_identity_off_the_supports() {
    let s = &fixture().sched;
    for t in s.grid.times().filter(|&t| t <= s.t_end).step_by(37) {
        if s.window_at(t).is_none() {
            let (d, e) = s.p_at(t).unwrap();
            assert!(d.iter().all(|&v| v == s.l) && e.iter().all(|&v| v == 0.0), "t = {t}");
            assert!((s.d.eval(t).unwrap() + 2f64.sqrt()).abs() < 1e-12);
            assert_eq!(s.phi.eval(t).unwrap(), 0.0);
        }
    }
}

#[test]
fn p_stays_above_identity_between_grid_points() {
    // Dense eigenvalues and determinants at random off-grid times.
    let s = &fixture().sched;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let target = (s.l - 1.0).powi(s.n as i32);
    for _ in 0..4000 {
        let w = &s.windows[rng.random_range(0..s.windows.len())];
        let t = rng.random_range(w.a.0..w.a.1);
        let (d, e) = s.p_at(t).unwrap();
        let p = dense(&d, &e);
        let lo = p.clone().symmetric_eigen().eigenvalues.min();
        assert!(lo >= 1.0 - 1e-9, "min eig {lo} at t = {t}");
        let det = (p - DMatrix::identity(s.n, s.n)).determinant();
        assert!((det - target).abs() <= 1e-8 * target, "det {det} at t = {t}");
    }
}

#[test]
fn certificate_passes() {
    let f = fixture();
    let c = certify(&f.sched, &f.sc, &f.plant.y, &f.plant.u).unwrap();
    assert!(c.passed(), "{c:?}");
    assert_eq!(c.samples, 10_000);
    assert!((c.p_start_norm - f.sc.params.l).abs() < 1e-12);
}

#[test]
fn causality_audit_passes_and_detects_leaks() {
    let f = fixture();
    let ok = causality_audit(&f.sched, &f.sc, &f.plant.y, &f.plant.u).unwrap();
    assert!(ok.passed() && ok.windows == f.sched.windows.len() && ok.points > 0);
    // Overwriting data the window legitimately uses must be noticed.
    let leak = causality_audit_at(&f.sched, &f.sc, &f.plant.y, &f.plant.u, -0.3).unwrap();
    assert!(!leak.passed());
    assert!(leak.mismatches.len() >= f.sched.windows.len() / 2);
}

#[test]
fn synthesis_is_deterministic() {
    let f = fixture();
    let again = synthesize_default(&f.sc, &f.plant.y, &f.plant.u).unwrap();
    for t in f.sched.grid.times().filter(|&t| t <= f.sched.t_end).step_by(11) {
        assert_eq!(again.p_at(t).unwrap(), f.sched.p_at(t).unwrap());
        assert_eq!(again.phi.eval(t).unwrap().to_bits(), f.sched.phi.eval(t).unwrap().to_bits());
    }
}

#[test]
fn assembled_functions_are_continuous() {
    let s = &fixture().sched;
    let mut fns = vec![&s.d, &s.d_bar, &s.phi, &s.kappa];
    fns.extend(s.p_off.iter());
    for f in fns {
        for j in 1..f.breakpoints().len() - 1 {
            if f.joints()[j - 1] == Joint::Jump {
                continue;
            }
            let ((vl, _), (vr, _)) = f.limits_at_break(j);
            assert!((vl - vr).abs() <= 1e-9 * (1.0 + vl.abs()), "jump {vl} -> {vr} at {}", f.breakpoints()[j]);
        }
    }
}

/// `det(A)` by Laplace expansion in exact rational arithmetic.
fn rational_det(a: &[Vec<BigRational>]) -> BigRational {
    let n = a.len();
    if n == 1 {
        return a[0][0].clone();
    }
    let mut total = BigRational::zero();
    for (c, lead) in a[0].iter().enumerate() {
        if lead.is_zero() {
            continue;
        }
        let minor: Vec<Vec<BigRational>> = a[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|&(k, _)| k != c).map(|(_, v)| v.clone()).collect())
            .collect();
        let term = lead * rational_det(&minor);
        total = if c % 2 == 0 { total + term } else { total - term };
    }
    total
}

fn exact_shifted_det(d: &[f64], e: &[f64]) -> f64 {
    let q = |v: f64| BigRational::from_float(v).unwrap();
    let m = d.len();
    let a: Vec<Vec<BigRational>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| match (i, j) {
                    _ if i == j => q(d[i]) - BigRational::one(),
                    _ if j == i + 1 => q(e[i]),
                    _ if i == j + 1 => q(e[j]),
                    _ => BigRational::zero(),
                })
                .collect()
        })
        .collect();
    rational_det(&a).to_f64().unwrap()
}

#[test]
fn schedule_determinants_hold_exactly_on_stored_entries() {
    let s = &fixture().sched;
    let target = (s.l - 1.0).powi(s.n as i32);
    for w in &s.windows {
        for t in s.grid.times().filter(|&t| t >= w.window.j.0 && t <= w.window.j.1).step_by(5) {
            let (d, e) = s.p_at(t).unwrap();
            let det = exact_shifted_det(&d, &e);
            assert!((det - target).abs() <= 1e-8 * target, "det {det} at t = {t}");
        }
    }
}

proptest! {
    /// The bordered diagonal makes `det(P_m − I) = (L−1)^m` for the stored
    /// entries up to rounding of the largest diagonal entry, and `P > I`.
    #[test]
    fn bordered_diagonal_determinant(
        off in prop::collection::vec(-200.0..200.0f64, 1..4),
        l in 1.2..4.0f64,
    ) {
        let dots = vec![0.0; off.len()];
        let (d, dd) = bordered_diag(&off, &dots, l);
        prop_assert_eq!(d[d.len() - 1], l);
        prop_assert!(dd.iter().all(|&v| v == 0.0));
        let m = d.len();
        let det = exact_shifted_det(&d, &off);
        let target = (l - 1.0).powi(m as i32);
        let top = d.iter().cloned().fold(0.0, f64::max);
        let bound = f64::EPSILON * top / (l - 1.0) + 1e-14;
        prop_assert!((det - target).abs() <= bound * target, "{} vs {} (bound {})", det, target, bound);
        // P − I > 0 by Sylvester's criterion on the trailing minors (exact).
        for k in 1..m {
            prop_assert!(exact_shifted_det(&d[k..], &off[k..]) > 0.0);
        }
    }

    /// The diagonal derivative is the derivative of the diagonal.
    #[test]
    fn bordered_diagonal_derivative(
        off in prop::collection::vec(-5.0..5.0f64, 1..4),
        dot in prop::collection::vec(-5.0..5.0f64, 3),
        l in 1.2..4.0f64,
    ) {
        let dot = &dot[..off.len()];
        let (_, dd) = bordered_diag(&off, dot, l);
        let step = 1e-6;
        let plus: Vec<f64> = off.iter().zip(dot).map(|(p, v)| p + step * v).collect();
        let minus: Vec<f64> = off.iter().zip(dot).map(|(p, v)| p - step * v).collect();
        let (dp, _) = bordered_diag(&plus, dot, l);
        let (dm, _) = bordered_diag(&minus, dot, l);
        for i in 0..dd.len() {
            let fd = (dp[i] - dm[i]) / (2.0 * step);
            prop_assert!((fd - dd[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "entry {}: {} vs {}", i, dd[i], fd);
        }
    }
}
