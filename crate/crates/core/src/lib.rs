//! Delayed switching Luenberger observers for nonlinear triangular systems
//! whose couplings may vanish on intervals.
//!
//! The crate covers the whole chain:
//!
//! * [`signals`] — time grids, sampled traces and C¹ piecewise functions;
//! * [`plant`] — the triangular system class, scenarios, plant simulation,
//!   forward-completeness checks and observability-window detection;
//! * [`gain_synthesis`] — the strongly causal construction of the
//!   time-varying gains `(P_R, d_R, φ_R)` with a-posteriori certification;
//! * [`observer`] — the single τ-delayed observer and its error envelope;
//! * [`switching`] — the switching scheme over growing radii.

pub mod error;
pub mod gain_synthesis;
pub mod linalg;
pub mod observer;
pub mod plant;
pub mod signals;
pub mod switching;

pub use error::{Error, Result};
pub use gain_synthesis::{causality_audit, certify, CausalityReport, synthesize, synthesize_default, CertificateReport, GainSchedule};
pub use observer::{error_envelope, run_observer, run_open_loop, ObserverRun};
pub use plant::{
    contractive_scenario, detect_windows, periodic_t_seq, simulate_plant, Example1Options, Gating, Params, PhiRule, PlantRun,
    Scenario, Synthetic3Options, TriangularSystem, Window, XiSpec,
};
pub use signals::{Interpolation, Joint, PiecewiseC1Fn, Segment, SignalTrace, TimeGrid};
pub use switching::{plan_switching, run_switching, saturated_rhs, CompositeEstimate, SwitchPlan};
