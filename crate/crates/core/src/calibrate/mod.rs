//! The learning-based calibration protocol and the direct-measurement
//! baseline.
//!
//! A round picks random target frequencies, converts them to fluxes with the
//! believed transmon parameters, solves for voltages under the current
//! crosstalk estimate, measures the device and inverts the measured
//! frequencies back to fluxes. Rows of the crosstalk matrix are then fitted
//! independently by least squares over the collected rounds.

mod batched;
mod cost;
mod direct;
mod scalars;
mod targets;
mod train;
mod training;
mod validate;

pub use batched::{batched_train, BatchedResult};
pub use cost::{closed_form_row, row_cost};
pub use direct::{direct_measure_matrix, direct_measurement_count, DirectMeasurement, DIRECT_BIAS_DETUNING, DIRECT_RESOLUTION};
pub use scalars::{retrain_scalars, scalar_cost, ScalarTarget};
pub use targets::{satisfies_constraints, sample_target_frequencies, TargetConstraints, MAX_ATTEMPTS_PER_QUBIT, MAX_RESTARTS};
pub use train::{train_matrix, train_matrix_with, CalibrationResult, DiagonalMode, TrainOptions, LBFGS_COST_SCALE};
pub use training::{build_training_set, Beliefs, TrainingSample, TrainingSet};
pub use validate::{validate, validate_matrix, ValidationEntry, ValidationReport};
