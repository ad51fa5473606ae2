//! Exact finite-N distributions for the two-species asymmetric simple
//! exclusion process with one second-class particle started at the right end
//! of a block of first-class particles.
//!
//! The formulas are contour integrals over small circles, evaluated with a
//! tensor trapezoid rule in double-double arithmetic. Two independent oracles
//! are bundled: a Monte Carlo simulator ([`sim`]) and a master-equation solver
//! on a truncated window ([`oracle`]).

pub mod algebra;
pub mod cli;
pub mod dist;
pub mod error;
pub mod oracle;
pub mod prec;
pub mod qcomb;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};
