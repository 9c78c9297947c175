//! Numerical laboratory for Birkhoff sums of the Riemann zeta-function
//! along the orbits of the Boolean-type map `φ(x) = (x - 1/x)/2`.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod numeric;
pub mod observables;
pub mod stats;
pub mod transfer;
pub mod zeta;

pub use error::{Error, Result};
