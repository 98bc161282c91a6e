//! Radially symmetric solutions of `Δ²u + u⁻ᑫ = 0` in ℝ³.

pub mod asymptotics;
pub mod error;
pub mod io;
pub mod oracles;
pub mod phase_space;
pub mod poly;
pub mod radial_ode;
pub mod shooting;
pub mod verify;

pub use error::{Error, Result};
