//! Simulation, resolvent solvers and limit-theorem verification for marked
//! Hawkes point measures with homogeneous immigration.

pub mod config;
pub mod error;
pub mod grid;
pub mod limits;
pub mod microbes;
pub mod model;
pub mod montecarlo;
pub mod resolvent;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid64 = grid::GridFunction<f64>;
pub type Grid32 = grid::GridFunction<f32>;
