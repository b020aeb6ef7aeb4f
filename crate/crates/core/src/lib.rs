//! Learned policy switching for a planar biped crossing box terrain.

pub mod error;
pub mod eval;
pub mod nn;
pub mod rl;
pub mod rng;
pub mod sim;
pub mod switch;
pub mod terrain;
pub mod verify;

pub use error::{Error, Result};
