//! Transition densities: deterministic flow, frozen Gaussian proxy, parametrix, Fokker–Planck solver,
//! explicit lower bound, minorization sweeps and the two-point comparison.

mod flow;
mod fp;
mod lower_bound;
mod minorization;
mod parametrix;
mod two_point;

pub use flow::*;
pub use fp::*;
pub use lower_bound::*;
pub use minorization::*;
pub use parametrix::*;
pub use two_point::*;
