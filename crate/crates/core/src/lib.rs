//! Fixed-time stabilization of perturbed integrator chains with a
//! prescribed settling deadline, using time-varying gains.

pub mod canonical;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod error;
pub mod plant;
pub mod poly;
pub mod presets;
pub mod runner;
pub mod sim;
pub mod special;
pub mod svg;
pub mod timebase;
pub mod verify;

pub use error::{Error, Result};
