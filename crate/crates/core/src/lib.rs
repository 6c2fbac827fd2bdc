//! Graphon mean field games: kernels, closed-form and numerical equilibria,
//! and finite-player validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arena;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod law;
pub mod lqflock;
pub mod measure;
pub mod mfgpde;
pub mod model;
pub mod nashgap;
pub mod netgen;
pub mod seeds;
pub mod stats;

pub use error::{Error, Result};
