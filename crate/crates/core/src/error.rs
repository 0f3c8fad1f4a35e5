//! Error type shared by every stage of the pipeline.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building signals, simulating the
/// plant, synthesizing gains or running observers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An interval whose right end does not exceed its left end.
    #[error("degenerate interval [{t0}, {t1}]")]
    DegenerateInterval { t0: f64, t1: f64 },

    /// A query outside the domain of a trace or piecewise function.
    #[error("time {t} outside the domain [{start}, {end}] of {what}")]
    Domain {
        what: String,
        t: f64,
        start: f64,
        end: f64,
    },

    /// Invalid grid construction parameters.
    #[error("invalid time grid: {0}")]
    Grid(String),

    /// Malformed sample data.
    #[error("invalid trace: {0}")]
    Trace(String),

    /// Malformed piecewise function (ordering, continuity, ...).
    #[error("invalid piecewise function: {0}")]
    Piecewise(String),

    /// Scenario or parameter validation failure.
    #[error("invalid scenario: {0}")]
    Scenario(String),

    /// The simulated state escaped the forward-completeness envelope.
    #[error("forward completeness violated at t = {t}: |x| = {norm:e} exceeds 10·β(t,|x0|) = {bound:e}")]
    ForwardCompleteness { t: f64, norm: f64, bound: f64 },

    /// No observability window could be found in a period.
    #[error("H2 violation: no observability window in period {nu} = [{start}, {end}]")]
    H2Violation { nu: usize, start: f64, end: f64 },

    /// A collar width fell below the grid resolution.
    #[error(
        "resolution error in window {nu}, level {m}: collar increment {delta:e} <= step {h:e}; reduce h or widen the window"
    )]
    Resolution {
        nu: usize,
        m: usize,
        delta: f64,
        h: f64,
    },

    /// A division by a coupling term whose magnitude is below the threshold.
    #[error("coupling a_{index} too small at t = {t}: |a| = {value:e} < {threshold:e}")]
    Division {
        index: usize,
        t: f64,
        value: f64,
        threshold: f64,
    },

    /// The lemma's ω degenerated to (numerically) zero.
    #[error("ill-conditioned window {nu} at t = {t}: omega = {omega:e}")]
    IllConditioned { nu: usize, t: f64, omega: f64 },

    /// A NaN or infinity appeared where a finite number was required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A schedule invariant failed during assembly.
    #[error("invariant violated at t = {t}: {what}")]
    Invariant { t: f64, what: String },

    /// P(t) became numerically singular during observer integration.
    #[error("numerically singular P at t = {t}: minimum eigenvalue {lambda:e}")]
    SingularP { t: f64, lambda: f64 },
}
