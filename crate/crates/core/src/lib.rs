//! Independent sampling from unnormalized densities by decomposing the
//! support into ellipsoidal shells and running perfect samplers inside each.

pub mod diagnostics;
pub mod diffeo;
pub mod config;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod io;
pub mod modes;
pub mod numeric;
pub mod perfect;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod targets;
pub mod tmcmc;

pub use error::{Error, Result};
