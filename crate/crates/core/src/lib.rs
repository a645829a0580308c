//! Coverage path planning for mine-countermeasure survey vehicles carrying a
//! forward-looking sonar.
//!
//! The library models the sonar detection rate ([`sensor`]), the vehicle's
//! steering dynamics ([`dynamics`]), and the residual risk that a target in
//! the survey area is left undetected ([`risk`]). Paths are produced either by
//! a classic boustrophedon planner ([`baseline`]) or by a minimum-time
//! optimal-control solver ([`solver`]) that drives the residual risk below a
//! threshold and returns every vehicle to its start.

pub mod baseline;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod risk;
pub mod scenario;
pub mod sensor;
pub mod solver;

pub use error::{Error, Result};
