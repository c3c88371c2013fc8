//! Anharmonic lattice systems: severed box dynamics, ensembles of initial
//! states, and finite-volume thermodynamic estimators.

pub mod dynamics;
pub mod ensembles;
pub mod error;
pub mod lab;
pub mod model;
pub mod stats;
pub mod thermo;

pub use error::{Error, Result};
