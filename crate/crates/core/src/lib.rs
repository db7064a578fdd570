//! Discrete optimal control of the two-dimensional Boussinesq system.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numerical
//! piece: a MAC-staggered grid with a discrete Leray projection, an IMEX
//! forward solver, its exact tangent, second-order and adjoint solvers, the
//! tracking functional with its first and second variations, a spectral
//! projected gradient method over box constraints, and the stability
//! experiments built on top of them. File formats, configuration and the
//! command line live in the `boussinesq-lab` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod boussinesq;
pub mod control;
mod error;
pub mod fit;
pub mod grid;
pub mod mms;
pub mod objective;
pub mod optimizer;
pub mod sensitivity;
pub mod stability;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
