//! Fusion adversarial underwater image enhancement.
//!
//! The crate is split along the pipeline: [`tensor`] is a small reverse-mode
//! autodiff engine, [`nn`] builds the two-input generator and the spectrally
//! normalized patch discriminator on top of it, [`training`] holds the
//! relativistic losses, Adam and the toy training loop. [`imaging`],
//! [`fusion`] and [`metrics`] are the classical image side: the fusion
//! enhancer used as the generator's second input and the UCIQE/UIQM scores.

pub mod error;
pub mod fusion;
pub mod imaging;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
