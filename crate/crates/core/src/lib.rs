//! Data-aware finite state machines for multiparty protocol coordination.
//!
//! A machine couples an FSM with a single coordinator whose functions
//! participants call: transition labels carry a guard, a caller annotation,
//! a function with typed parameters, and simultaneous assignments to the
//! coordinator's variables. This crate provides the textual format
//! ([`dsl`]), structural validation ([`model`]), the path-based caller
//! checks ([`paths`]), solver formula construction for consistency and
//! strong determinism ([`smtgen`]), the external-solver driver producing a
//! verdict ([`solver`]), DOT rendering ([`viz`]) and a randomized benchmark
//! harness ([`bench`]).

pub mod bench;
pub mod dsl;
pub mod expr;
pub mod model;
pub mod paths;
pub mod smtgen;
pub mod solver;
pub mod viz;

pub use expr::{DataType, Expr, VarRef};
pub use model::{
    validate_structure, Assignment, ConstructorLabel, Dafsm, Declaration, DeclSort,
    QualifiedParticipant, Site, StateId, StructuralError, Transition, TransitionLabel,
};
pub use solver::{CheckKind, CheckOutcome, Overall, SolverConfig, SolverMode, Verdict};
