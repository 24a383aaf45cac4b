//! Numerical laboratory for forced linear differential equations
//! `y' = -alpha y + f` and `x' = A x + F`: it relates the asymptotic size of
//! solutions to moving averages `f_theta(t) = int_{t-theta}^t f` of the
//! forcing, measured against a weight `gamma`.
//!
//! The crate is organised by stage: [`funcspec`] parses forcings and
//! weights, [`weights`] classifies weights, [`forcing`] computes moving
//! averages and the forcing decomposition, [`solver`] integrates the
//! equations, [`classify`] turns samples into limsup verdicts and
//! cross-checks condition against simulation, and [`runner`] drives
//! scenario files end to end.

pub mod classify;
pub mod error;
pub mod forcing;
pub mod funcspec;
pub mod numfmt;
pub mod quadrature;
pub mod runner;
pub mod solver;
pub mod weights;

pub use error::{Error, ParseError, Result};
