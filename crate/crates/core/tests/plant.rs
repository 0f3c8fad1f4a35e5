//! Plant simulation, hypothesis checks and window detection.

use std::sync::Arc;

use delobs_core::plant::{check_H1, validate_t_seq, DriftFn, CouplingFn};
use delobs_core::{
    detect_windows, periodic_t_seq, simulate_plant, Error, Example1Options, Gating, Params, Scenario, TriangularSystem,
};

/// `ẋ₁ = u x₂, ẋ₂ = −x₁` with the given input.
fn oscillator(input: Arc<dyn Fn(f64) -> f64 + Send + Sync>, params: Params) -> Scenario {
    let drift: Vec<DriftFn> = vec![Arc::new(|_t, _x, _u| 0.0), Arc::new(|_t, x, _u| -x[0])];
    let coupling: Vec<CouplingFn> = vec![Arc::new(|_t, _x1, u| u)];
    let system = TriangularSystem::new("oscillator", drift, coupling).unwrap();
    let t_seq = periodic_t_seq(params.t0, 1.0, params.t_end());
    let sc = Scenario {
        name: "oscillator".into(),
        system,
        input,
        u_bar: Arc::new(|_| 1.0),
        beta: Arc::new(|_t, r| r),
        t_seq,
        params,
    };
    sc.validate().unwrap();
    sc
}

fn short_params() -> Params {
    Params {
        horizon: 10.0,
        ..Default::default()
    }
}

#[test]
fn rk4_matches_rotation() {
    let sc = oscillator(Arc::new(|_| 1.0), short_params());
    let run = simulate_plant(&sc, &[1.0, 0.0]).unwrap();
    let g = run.x.grid();
    for k in (0..g.count()).step_by(97) {
        let t = g.time(k);
        let x = run.x.at(k);
        assert!((x[0] - t.cos()).abs() < 1e-11, "x1 at {t}");
        assert!((x[1] + t.sin()).abs() < 1e-11, "x2 at {t}");
    }
    assert_eq!(run.y.at(g.count() - 1)[0], run.x.at(g.count() - 1)[0]);
    // The rotation preserves |x|, so H1 holds with β(t, R) = R up to round-off.
    assert!(check_H1(&sc, &run.x, &run.u).input_violations.is_empty());
}

#[test]
fn escape_is_reported() {
    let drift: Vec<DriftFn> = vec![Arc::new(|_t, _x, _u| 0.0), Arc::new(|_t, x, _u| x[1] * x[1])];
    let coupling: Vec<CouplingFn> = vec![Arc::new(|_t, _x1, u| u)];
    let sc = Scenario {
        system: TriangularSystem::new("blowup", drift, coupling).unwrap(),
        ..oscillator(Arc::new(|_| 1.0), short_params())
    };
    let err = simulate_plant(&sc, &[0.0, 1.0]).unwrap_err();
    assert!(matches!(err, Error::ForwardCompleteness { .. }), "{err:?}");
}

#[test]
fn t_seq_gaps_must_be_whole_delays() {
    assert!(validate_t_seq(&[0.0, 0.5, 1.0], 0.0, 0.05).is_ok());
    let err = validate_t_seq(&[0.0, 0.125, 0.5], 0.0, 0.05).unwrap_err();
    assert!(err.to_string().contains("integer multiple"), "{err}");
    assert!(validate_t_seq(&[0.1, 0.5], 0.0, 0.05).is_err());
    assert!(validate_t_seq(&[0.0, 0.5, 0.5], 0.0, 0.05).is_err());
}

#[test]
fn example1_rejects_even_q_and_fractional_periods() {
    let even = Example1Options {
        q: 2,
        ..Default::default()
    };
    assert!(matches!(even.build(), Err(Error::Scenario(_))));
    let frac = Example1Options {
        period: 0.125,
        ..Default::default()
    };
    assert!(matches!(frac.build(), Err(Error::Scenario(_))));
}

#[test]
fn gate_is_on_during_the_configured_fraction() {
    let g = Gating::OnFirst(0.5);
    for k in 0..100 {
        let phase = k as f64 * 0.01;
        assert_eq!(g.gate(3.0 * 2.0 + phase, 0.0, 2.0), 1.0);
    }
    // Middle of the off portion.
    assert_eq!(g.gate(1.5, 0.0, 2.0), 0.0);
    assert_eq!(Gating::parse("off-first:0.25"), Some(Gating::OffFirst(0.25)));
    assert_eq!(Gating::parse("on-first:1.5"), None);
}

#[test]
fn one_window_per_period_inside_the_on_phase() {
    let sc = Example1Options::default().build().unwrap();
    let run = simulate_plant(&sc, &[0.6, 0.8]).unwrap();
    let tau = sc.params.tau;
    let windows = detect_windows(&sc, &run.y, &run.u, &sc.t_seq, sc.params.t_end()).unwrap();
    assert!(windows.len() >= 10);
    for (k, w) in windows.iter().enumerate() {
        assert_eq!(w.nu, k + 1);
        let (lo, hi) = w.period;
        assert!(w.j.0 > lo + tau && w.j.1 < hi + tau, "J inside the shifted period");
        assert!(w.i.0 > w.j.0 && w.i.1 < w.j.1, "I strictly inside J");
        // The window's plant-time image lies where the input is bounded away from 0.
        for t in [w.j.0 - tau, 0.5 * (w.j.0 + w.j.1) - tau, w.j.1 - tau] {
            assert!((sc.input)(t).abs() >= sc.params.delta_a);
        }
    }
}

#[test]
fn missing_window_is_an_h2_violation() {
    let sc = oscillator(Arc::new(|t| if t < 3.0 { 1.0 } else { 0.0 }), short_params());
    let run = simulate_plant(&sc, &[1.0, 0.0]).unwrap();
    let err = detect_windows(&sc, &run.y, &run.u, &sc.t_seq, sc.params.t_end()).unwrap_err();
    assert!(matches!(err, Error::H2Violation { nu: 4, .. }), "{err:?}");
}
