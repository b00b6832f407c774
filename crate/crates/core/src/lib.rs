//! Pointer statistics of von Neumann measurements on pre- and post-selected
//! ensembles, read as quantum averages of weak values.
//!
//! * [`hilbert`]: states, observables, the back-reaction `exp(i A q)` and weak values.
//! * [`pointer`]: apparatus wavefunctions on a uniform grid and the q/p transform.
//! * [`ensemble`]: PME/PPME distributions, weak-value orbits, posteriors and sum rules.
//! * [`spin`]: spin-j coherent-state scenarios with closed-form oracles.
//! * [`classical`]: impulsive boundary-value trajectories and the classical posterior.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod ensemble;
pub mod error;
pub mod hilbert;
pub mod numeric;
pub mod pointer;
pub mod random;
pub mod spin;

pub use error::{Error, Result};
pub use hilbert::{Observable, PostSelectionBasis, StateVector, C64};
pub use pointer::{Grid, PdfSummary, PointerState, Representation};
