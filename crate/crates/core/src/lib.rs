//! n-dimensional deautoconvolution.

pub mod autoconv;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod grid;
pub mod io;
pub mod par;
pub mod phantoms;
pub mod regularize;

pub use error::{Error, Result};
