//! Minimizing-movement gradient flows of the elastic bending energy for
//! graphs `u: [0, 1] → ℝ` with zero end values, constrained to stay above an
//! obstacle `ψ`.
//!
//! The state space is discretized on a uniform grid with the inner product
//! `(u, v) = ∫ u″ v″`. Each time step minimizes `‖u − v‖²/2τ + E(u)` over the
//! admissible set, and [`diagnostics`] checks the resulting trajectory
//! against the estimates such flows satisfy.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod config;
pub mod diagnostics;
pub mod elastica;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod mms;
pub mod obstacle;
pub mod preset;
pub mod qp;

pub use error::{Error, Result};
