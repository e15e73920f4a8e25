//! Semiclassical simulation of an inhomogeneous spin-1/2 ensemble coupled to
//! a lossy single-mode cavity, with pulse design and echo detection tools.
//!
//! The crate is organized around a small number of layers:
//!
//! - [`dynamics`]: the coupled cavity + spin equations of motion and their
//!   integrators (full model and the bad-cavity reduction).
//! - [`ensemble`]: discretization of detuning and coupling distributions
//!   into weighted bins, including thermal polarization via cavity cooling.
//! - [`pulses`]: pulse parameterizations (square, bump, Fourier-phase),
//!   bundled robust pulse tables, and drive synthesis by deconvolving the
//!   cavity response.
//! - [`optimizer`]: derivative-free search for robust pulse coefficients.
//! - [`sequences`]: Hahn echo and CPMG detection sequences with windowed
//!   signal-to-noise accounting.
//! - [`io`]: plain-text CSV output with reproducibility headers.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod num;
pub mod optimizer;
pub mod pulses;
pub mod sequences;
pub mod su2;

pub use error::{Error, Result};
