//! Observer runs on Example 1: envelope, tube, exact initialisation and the
//! saturation contract.

use std::sync::OnceLock;

use delobs_core::observer::{run_observer_from, saturation_factor, xi_threshold};
use delobs_core::{run_observer, simulate_plant, synthesize_default, Example1Options, GainSchedule, PlantRun, Scenario};
use proptest::prelude::*;

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

#[test]
fn error_stays_under_the_envelope_and_in_the_tube() {
    let f = fixture();
    let run = run_observer(&f.sc, &f.plant, &f.sched).unwrap();
    assert!(run.envelope_violations(1e-3, 0.0).is_empty());
    assert!(run.in_tube().iter().all(|&b| b));
    assert!(run.worst_envelope_ratio() <= 1.0 + 1e-3);
    // The observer starts from zero, so the initial error is |x(t̄0 − τ)|,
    // which the envelope must dominate.
    assert!(run.e_norm[0] > 0.1);
    assert!(*run.e_norm.last().unwrap() < 1e-9 * run.e_norm[0]);
}

#[test]
fn tube_constant_is_admissible() {
    let f = fixture();
    let s = &f.sched;
    let beta = (f.sc.beta)(s.t_bar0, s.r);
    let kappa0 = s.kappa.eval(s.t_bar0).unwrap();
    let min_xi = xi_threshold(beta, s.l, kappa0);
    assert!(s.xi >= min_xi * (1.0 - 1e-12), "xi {} below threshold {min_xi}", s.xi);
    // Closed form: √L·β·e^{1−κ(t̄0)}.
    assert!((min_xi - s.l.sqrt() * beta * (1.0 - kappa0).exp()).abs() <= 1e-12 * min_xi);
}

#[test]
fn exact_initialisation_keeps_the_error_at_zero() {
    let f = fixture();
    let s = &f.sched;
    let k = f.plant.x.grid().nearest_index(s.t_bar0 - f.sc.params.tau);
    let x_start = f.plant.x.at(k).to_vec();
    let run = run_observer_from(&f.sc, &f.plant, s, &x_start).unwrap();
    let worst = run.e_norm.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-6, "max |e| = {worst}");
}

#[test]
fn envelope_is_nonincreasing() {
    let f = fixture();
    let run = run_observer(&f.sc, &f.plant, &f.sched).unwrap();
    let b: Vec<f64> = (0..run.bound.grid().count()).map(|k| run.bound.at(k)[0]).collect();
    assert!(b.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}

#[test]
fn saturation_factor_breakpoints() {
    assert_eq!(saturation_factor(0.0, 2.0), 1.0);
    assert_eq!(saturation_factor(2.0, 2.0), 1.0);
    assert_eq!(saturation_factor(3.0, 2.0), 0.5);
    assert_eq!(saturation_factor(4.0, 2.0), 0.0);
    assert_eq!(saturation_factor(100.0, 2.0), 0.0);
}

proptest! {
    /// The factor lies in [0, 1], is nonincreasing in |z| and is
    /// 1/ζ-Lipschitz.
    #[test]
    fn saturation_factor_is_monotone_and_lipschitz(
        a in 0.0..10.0f64,
        b in 0.0..10.0f64,
        zeta in 0.1..5.0f64,
    ) {
        let (fa, fb) = (saturation_factor(a, zeta), saturation_factor(b, zeta));
        prop_assert!((0.0..=1.0).contains(&fa));
        if a <= b {
            prop_assert!(fa >= fb);
        }
        prop_assert!((fa - fb).abs() <= (a - b).abs() / zeta + 1e-12);
    }
}
