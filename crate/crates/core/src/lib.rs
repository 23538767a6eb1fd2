//! Bound-preserving surrogates for effective conductivity of periodic
//! two-phase microstructures.

pub mod bounds;
pub mod dataset;
pub mod error;
pub mod features;
mod fft;
pub mod homsolve;
pub mod microgen;
pub mod orth;
pub mod rng;
pub mod spd;
pub mod specnorm;
pub mod surrogate;

pub use error::{Error, Result};
