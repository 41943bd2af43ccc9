//! Best constants of fractional p-Poincaré inequalities.
//!
//! The crate discretizes the Gagliardo energy with cell-integrated kernel
//! weights on uniform tensor grids, minimizes the nonlocal Rayleigh quotient and
//! runs a set of numerical experiments around the resulting constants.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cli;
pub mod domain;
pub mod eigensolver;
pub mod error;
pub mod experiments;
pub mod quadrature;
pub mod report;
pub mod special_fn;

pub use error::{Error, Result};
