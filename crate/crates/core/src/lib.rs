//! Stability analysis for linear cocycles over measure-preserving systems.

// comparisons are written as `!(a < b)` so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod cocycle;
pub mod expr;
pub mod linalg;
pub mod lyapunov;
pub mod quadrature;
pub mod datko;
pub mod tempering;
pub mod induced;
pub mod uniform;
pub mod fixtures;
pub mod experiment;
