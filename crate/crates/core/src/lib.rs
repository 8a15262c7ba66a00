//! Numerical toolkit for a pair of anharmonic oscillators coupled by a
//! spring, one in contact with a bath at temperature `T` and the other
//! subject to noise at temperature `T_inf` but no friction.

pub mod error;
pub mod linear;
pub mod lyapunov;
pub mod model;
pub mod oscillator;
pub mod reduced;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
