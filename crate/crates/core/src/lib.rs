//! Dissipative Lipkin-Meshkov-Glick (LMG) collective spin model with delayed
//! Pyragas feedback on the spin-spin coupling.
//!
//! The crate is `no_std` (it needs `alloc`) and purely computational:
//!
//! - [`model`]: parameters, the classical spin state on the Bloch sphere,
//!   the classical energy and the feedback coupling law.
//! - [`spectrum`]: collective spin matrices, the non-Hermitian effective
//!   Hamiltonian, its complex spectrum and the density of states.
//! - [`dynamics`]: mean-field equations of motion integrated as a delay
//!   differential equation.
//! - [`stability`]: fixed points, delayed linearization, the transcendental
//!   characteristic equation and closed-form stability boundaries.
//! - [`analysis`]: time averages, rotation periods, closed-orbit reference
//!   curves, feedback sweeps and bifurcation scans.
//! - [`linalg`]: the dense complex eigenvalue solver backing [`spectrum`].
//!
//! Units: energies and rates are in units of the field `h`, times in `1/h`.
//! Everything defaults to `h = 1`.

#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod model;
pub mod spectrum;
pub mod stability;

pub use error::{BrokenBranchAbsence, Error, Result};
pub use model::{ModelParams, SpinState};
pub use num_complex::Complex64;
