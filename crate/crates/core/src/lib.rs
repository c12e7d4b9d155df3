//! Data-driven surrogates of center manifolds.
//!
//! Trajectories of a split polynomial system `x' = f1(x, y)`, `y' = f2(x, y)`
//! are integrated with implicit Euler ([`dynamics`]), a small set of centers
//! is picked from the visited `x` values by P-greedy ([`greedy`]), and a
//! kernel expansion `s(x) ~ y` is fitted under the hard constraints
//! `s(0) = 0`, `Ds(0) = 0` ([`regression`]). [`analysis`] supplies the Taylor
//! oracle and the invariance residual used to judge the result, and
//! [`pipeline`] wires the stages together through files ([`artifacts`]).

pub mod analysis;
pub mod artifacts;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod greedy;
pub mod kernels;
pub mod pipeline;
pub mod polynomial;
pub mod regression;

pub use error::{Error, Result};
