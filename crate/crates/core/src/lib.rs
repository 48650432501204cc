//! Numerical laboratory for entrance measures of time-inhomogeneous SDEs.

pub mod catalog;
pub mod cli;
pub mod coefficients;
pub mod config;
pub mod contraction;
pub mod density;
pub mod entrance;
pub mod error;
pub mod expr;
pub mod measures;
pub mod quadrature;
pub mod quasiperiodic;
pub mod report;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
