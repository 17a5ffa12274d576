//! Numerical laboratory for Riesz transforms of classical orthogonal expansions.

pub mod assumptions;
pub mod bellman;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod normest;
pub mod orthosys;
pub mod quadgrid;
pub mod spectral;
pub mod tolerances;
pub mod tensor;
pub mod tridiag;

pub use error::{LabError, Result};
