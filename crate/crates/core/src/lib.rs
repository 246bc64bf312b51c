//! Numerical laboratory for the absorbing boundary rule of quantum detection
//! times and the time-energy uncertainty relations `sigma_T sigma_E >= hbar/2`
//! and `sigma_T sigma_E >= sqrt(p) hbar/2`.
//!
//! Layers, bottom up: [`geometry`] and [`state`] (grids, constants, initial
//! wave functions), [`propagator`] (dissipative Hamiltonian, Crank-Nicolson),
//! [`detection`] (distribution of the detection time), [`energy`] (energy
//! spread by three routes), [`oplab`] (dense operator identities and the
//! dilation field) and [`harness`] (configured experiments, sweeps, search).

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod oplab;
pub mod propagator;
pub mod state;
pub mod tridiag;

pub use error::{Error, Result};
