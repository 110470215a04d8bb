//! Event-driven hard-ball billiards on the flat torus, with the linearized
//! flow carried alongside the base flow.
//!
//! Modules follow the data flow of an experiment: [`phase_space`] holds the
//! system and its metric, [`flow`] integrates orbits, [`tangent`] pushes
//! tangent vectors along them, [`graphs`] analyses the symbolic collision
//! sequence, [`estimates`] evaluates the relative-velocity bounds and
//! [`subspaces`] builds stable/unstable curvature operators and
//! expansion/contraction certificates. [`cli`] wires everything into
//! reproducible experiment runs.

pub mod cli;
pub mod error;
pub mod estimates;
pub mod flow;
pub mod graphs;
pub mod phase_space;
pub mod subspaces;
pub mod tangent;

pub use error::{Error, Result};
