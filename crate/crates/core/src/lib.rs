//! Pump-probe spectral hole burning of multi-level solid-state emitters:
//! rate-equation spectra, global curve fitting, transient analysis and
//! spin-photon interface planning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod fit;
pub mod holeburn;
pub mod io;
pub mod lineshape;
pub mod planner;
pub mod rate;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Result};
