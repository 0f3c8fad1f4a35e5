//! Synthesis of the time-varying observer gains `(P_R, d_R, φ_R)`.
//!
//! The pipeline is: σ-envelopes → observability windows → the level-`m`
//! induction on each window → the final injection gain on `A_ν` → the
//! full-horizon assembly, with κ_R as the rate bookkeeping.  [`certify`]
//! checks the result a posteriori.

pub mod audit;
pub mod certify;
pub mod envelopes;
pub mod kappa;
pub mod lemma;
pub mod levels;
pub mod schedule;

pub use audit::{causality_audit, causality_audit_at, CausalityMismatch, CausalityReport};
pub use certify::{certify, CertificateReport};
pub use envelopes::{build_sigma_envelopes, BoundEnvelopes};
pub use kappa::build_kappa;
pub use levels::{Knots, LevelRecord, WindowPlan};
pub use schedule::{admissible_xi, assemble_full, resolve_xi, synthesize, synthesize_default, GainSchedule};
