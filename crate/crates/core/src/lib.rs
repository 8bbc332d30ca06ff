//! Stationary analysis of an M/M/1 queue whose service rate is modulated by
//! an Ornstein-Uhlenbeck process: perturbation series, error bounds, a
//! discretized CTMC reference solution and a Monte Carlo simulator.

pub mod bounds;
pub mod error;
pub mod expansion;
pub mod model;
pub mod operators;
pub mod oracle;
pub mod orthopoly;
pub mod quadrature;
pub mod rational;
pub mod simulate;

pub use error::{Error, Result};
pub use model::ModelParams;
