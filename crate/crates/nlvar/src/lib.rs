//! Toolkit for additively time-separable nonlinear (structural) VARs.
//!
//! The crate works with VAR(k) models of the form
//!
//! ```text
//! f0(z_t) = c + f1(z_{t-1}) + ... + fk(z_{t-k}) + u_t
//! ```
//!
//! where each `f_i` is drawn from a concrete functional family: linear,
//! threshold-affine, piecewise-linear on cones, or a Gaussian-smoothed
//! threshold model. For such models it provides
//!
//! * derivation of the error-correction (VECM) form and the stacked state
//!   representation ([`vecm`]),
//! * certified joint-spectral-radius brackets for finite matrix families
//!   ([`jsr`]),
//! * verification that a model admits `q = p - r` common stochastic trends
//!   and `r` equilibrium relations ([`membership`]),
//! * reproducible simulation of shock-driven paths ([`dynamics`]),
//! * the common-trend / equilibrium-error decomposition of a simulated path
//!   through the coordinate map `chi` ([`gjrt`]),
//! * attractor sets, deterministic long-run limits, long-run multiplier
//!   matrices and long-run identifying restrictions ([`longrun`]),
//! * a command-line front end ([`cli`]).
//!
//! All operations are pure functions over immutable inputs and can be called
//! concurrently from multiple threads.

pub mod cli;
pub mod dynamics;
#[cfg(test)]
pub(crate) mod testkit;
pub mod error;
pub mod gauss;
pub mod gjrt;
pub mod jsr;
pub mod linalg;
pub mod longrun;
pub mod membership;
pub mod model;
pub mod vecm;

pub use error::{Error, Result};
pub use model::{FamilyVariant, ModelSpec, RegimeIndex};
pub use vecm::{derive_vecm, BoldMatrices, BoldState, VecmForm};
pub use jsr::{jsr_bounds, jsr_decision, JsrBracket, JsrOptions, JsrVerdict};
pub use membership::{check_membership, MembershipReport, Verdict};
pub use dynamics::{simulate, PathResult, ShockPlan};
pub use gjrt::{chi, chi_inverse, decompose, ChiValue, GjrtDecomposition};
pub use longrun::{
    attractor_points, longrun_multipliers, z_infinity, AttractorSample, MultiplierResult,
    TransitoryConfig, TransitoryCurve,
};
