//! Simulation and learning-based calibration of DC flux crosstalk in arrays of
//! flux-tunable transmon qubits.
//!
//! The crate is organised bottom-up:
//!
//! - [`transmon`]: the transmon spectrum, its inversion, parameter sampling and
//!   spectroscopy fitting.
//! - [`crosstalk`]: the linear voltage-to-flux relation, array geometry and the
//!   distance-based synthetic crosstalk generator.
//! - [`device`]: a ground-truth simulated array with noisy frequency readout.
//! - [`optim`]: L-BFGS, SGD with momentum and Adam behind one `minimize` entry
//!   point, plus a finite-difference gradient oracle.
//! - [`calibrate`]: target sampling, training-set acquisition, row-wise
//!   training, validation and the direct-measurement baseline.

pub mod calibrate;
pub mod crosstalk;
pub mod device;
pub mod error;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod transmon;

pub use error::{Error, Result};
