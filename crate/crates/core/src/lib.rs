//! Simulator of a recursive optical linear-operator processor.
//!
//! A 4×4 bank of MZI weights sits in an amplified optical loop. Depending on
//! what is injected and how many circulations are allowed, the loop adds,
//! subtracts, multiplies or (by Richardson iteration) inverts matrices.
//! Larger problems are tiled onto the 4×4 bank, and integral/differential
//! equations are reduced to those tiled operations.
//!
//! Modules, bottom-up:
//! - [`linalg`]: dense reference arithmetic and the accuracy metric
//! - [`hardware`]: MZI transmission, calibration lookup, quantization, noise
//! - [`engine`]: circulation protocols on one bank
//! - [`block`]: padding, tiling, block arithmetic and Schur inversion
//! - [`equations`]: discretization and solving

pub mod block;
pub mod engine;
pub mod equations;
pub mod error;
pub mod fixtures;
pub mod functions;
pub mod hardware;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{ColumnVector, Matrix, Sign};
pub use rng::StreamKey;
