pub mod bounds_ledger;
pub mod config;
pub mod diffusion_models;
pub mod error;
pub mod geometry;
pub mod hedge_operators;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod runner;
pub mod simulation;

pub use error::{Error, Result};
