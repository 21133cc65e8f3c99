//! Exact analysis of finite systems of random variables.
//!
//! A *system* is a finite family of random variables, each indexed by a
//! *content* (what the variable measures) and a *context* (the conditions
//! under which it is recorded). Variables sharing a context are jointly
//! distributed (a *bunch*); variables sharing a content across contexts are
//! *not* jointly distributed (a *connection*) — any joint law imposed on a
//! connection is a modelling choice, called a coupling.
//!
//! This crate decides, by exact rational linear programming,
//!
//! * whether a consistently connected system admits an overall coupling whose
//!   connections are identity-coupled (the traditional question), and
//! * whether an arbitrary system admits an overall coupling whose connections
//!   realize a chosen coupling rule (the extended question),
//!
//! and implements the *consistification* construction, which rewrites the
//! extended question for a system as the traditional question for a derived,
//! consistently connected system. Both directions of that reduction are
//! machine-checked: every verdict carries either an explicit coupling witness
//! or an infeasibility certificate that can be re-verified independently of
//! the solver.
//!
//! All arithmetic is exact (arbitrary-precision rationals); there are no
//! tolerances anywhere. The crate is `no_std`-compatible (requires `alloc`).

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod consistify;
pub mod contextuality;
pub mod coupling;
pub mod generate;
pub mod hvm;
pub mod linprog;
pub mod model;
pub mod rational;
pub mod space;

pub use consistify::{consistify, consistify_coupling, verify_equivalence, ConsistifiedSystem};
pub use contextuality::{
    build_decision_lp, decide_contextual, decide_contextual_constrained, decide_traditional,
    hull_oracle, AnalysisConfig, Coupling, Status, Verdict,
};
pub use coupling::{
    check_well_fitting, comonotonic_coupling, identity_coupling, pairwise_equality_prob,
    ConnectionConstraintSet, CouplingRule,
};
pub use generate::{gen_named, gen_system, ConsistencyMode, GeneratorSpec};
pub use hvm::{hvm_from_witness, hvm_obstructions, hvm_reproduces, HiddenVariableModel};
pub use linprog::{solve_feasibility, verify_result, FeasibilityResult, LinearSystem};
pub use model::{
    connection_of, consistency_report, is_consistently_connected, validate_system, Alphabet,
    BunchDistribution, Connection, ContentId, ContextId, JointDistribution, Marginal, System,
    SystemFormat,
};
pub use rational::Rational;
