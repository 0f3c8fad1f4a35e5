//! Grids, traces and piecewise functions against closed forms.

use std::sync::Arc;

use delobs_core::signals::{bridge, integrate, shift_tau, smoothstep};
use delobs_core::{Error, Interpolation, Joint, PiecewiseC1Fn, Segment, SignalTrace, TimeGrid};
use proptest::prelude::*;

#[test]
fn grid_endpoints_and_lookup() {
    let g = TimeGrid::new(0.0, 1.0, 0.001).unwrap();
    assert_eq!(g.count(), 1001);
    assert_eq!(g.time(1000), 1.0);
    assert_eq!(g.index_of(0.25), Some(250));
    assert_eq!(g.index_of(0.2505), None);
    assert_eq!(g.nearest_index(0.2506), 251);
    assert!(TimeGrid::new(1.0, 0.0, 0.1).is_err());
}

#[test]
fn cubic_trace_reproduces_smooth_signal() {
    let g = TimeGrid::new(0.0, 2.0, 0.01).unwrap();
    let tr = SignalTrace::from_fn(g, 1, |t| vec![t.sin()], Interpolation::Cubic, "sin").unwrap();
    for k in 0..400 {
        let t = 0.003 + k as f64 * 0.004_97;
        let (v, d) = tr.sample_component_d(t, 0).unwrap();
        assert!((v - t.sin()).abs() < 1e-9, "value at {t}");
        assert!((d - t.cos()).abs() < 1e-6, "slope at {t}");
    }
    assert!(matches!(tr.sample(2.5), Err(Error::Domain { .. })));
}

#[test]
fn linear_trace_is_exact_on_affine_signals() {
    let g = TimeGrid::new(-1.0, 1.0, 0.1).unwrap();
    let tr = SignalTrace::from_fn(g, 2, |t| vec![2.0 * t + 1.0, -t], Interpolation::Linear, "affine").unwrap();
    let v = tr.sample(0.337).unwrap();
    assert!((v[0] - 1.674).abs() < 1e-12 && (v[1] + 0.337).abs() < 1e-12);
}

#[test]
fn shift_tau_relabels_time_only() {
    let g = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
    let tr = SignalTrace::from_fn(g, 1, |t| vec![t * t], Interpolation::Cubic, "sq").unwrap();
    let sh = shift_tau(&tr, 0.2).unwrap();
    assert!((sh.grid().t_start() - 0.2).abs() < 1e-15);
    assert_eq!(sh.values(), tr.values());
    let v = sh.sample_component(0.7, 0).unwrap();
    assert!((v - 0.25).abs() < 1e-12);
}

#[test]
fn declared_c1_joints_are_checked() {
    let ok = PiecewiseC1Fn::new(
        vec![0.0, 1.0, 2.0],
        vec![Segment::Constant(0.0), bridge(1.0, 0.0, 0.0, 2.0, 1.0, 0.0).unwrap()],
        vec![Joint::C1],
    );
    assert!(ok.is_ok());
    let bad = PiecewiseC1Fn::new(
        vec![0.0, 1.0, 2.0],
        vec![Segment::Constant(0.0), bridge(1.0, 0.5, 0.0, 2.0, 1.0, 0.0).unwrap()],
        vec![Joint::C1],
    );
    assert!(matches!(bad, Err(Error::Piecewise(_))));
    let jump = PiecewiseC1Fn::new(
        vec![0.0, 1.0, 2.0],
        vec![Segment::Constant(0.0), Segment::Constant(3.0)],
        vec![Joint::Jump],
    );
    assert!(jump.is_ok());
}

#[test]
fn integral_of_analytic_segment() {
    let f = PiecewiseC1Fn::analytic(0.0, std::f64::consts::PI, Arc::new(f64::sin)).unwrap();
    let v = integrate(&f, 0.0, std::f64::consts::PI).unwrap();
    assert!((v - 2.0).abs() < 1e-12);
    assert!((integrate(&f, 1.0, 0.5).unwrap() + (0.5f64.cos() - 1.0f64.cos())).abs() < 1e-12);
}

proptest! {
    /// A Hermite bridge interpolates its end data, and its integral matches
    /// the closed form `w(v0+v1)/2 + w²(s0−s1)/12`.
    #[test]
    fn bridge_end_data_and_integral(
        t0 in -5.0..5.0f64, w in 0.01..3.0f64,
        v0 in -10.0..10.0f64, s0 in -10.0..10.0f64,
        v1 in -10.0..10.0f64, s1 in -10.0..10.0f64,
    ) {
        let t1 = t0 + w;
        let seg = bridge(t0, v0, s0, t1, v1, s1).unwrap();
        let (a0, d0) = seg.eval_d(t0);
        let (a1, d1) = seg.eval_d(t1);
        prop_assert!((a0 - v0).abs() < 1e-9 && (a1 - v1).abs() < 1e-9);
        prop_assert!((d0 - s0).abs() < 1e-8 && (d1 - s1).abs() < 1e-8);
        let f = PiecewiseC1Fn::new(vec![t0, t1], vec![seg], vec![]).unwrap();
        let exact = w * (v0 + v1) / 2.0 + w * w * (s0 - s1) / 12.0;
        let got = f.integrate(t0, t1).unwrap();
        prop_assert!((got - exact).abs() <= 1e-10 * (1.0 + exact.abs()), "{} vs {}", got, exact);
    }

    /// Smoothstep is monotone from 0 to 1 with the derivative of `3θ²−2θ³`.
    #[test]
    fn smoothstep_closed_form(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(smoothstep(lo).0 <= smoothstep(hi).0);
        let (v, d) = smoothstep(a);
        prop_assert!((v - a * a * (3.0 - 2.0 * a)).abs() < 1e-15);
        prop_assert!((d - 6.0 * a * (1.0 - a)).abs() < 1e-14);
    }
}
