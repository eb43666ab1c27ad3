use rand::Rng;
use serde::{Deserialize, Serialize};

use super::targets::{sample_target_frequencies, TargetConstraints};
use super::train::CalibrationResult;
use crate::crosstalk::{CrosstalkMatrix, CrosstalkSolver, ScalarCalibration};
use crate::device::DeviceModel;
use crate::error::{check_len, Error, Result};
use crate::stats::{median, percentile_sorted};
use crate::transmon::{flux_from_freq, TransmonParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub round: usize,
    pub qubit: usize,
    /// GHz.
    pub target_frequency: f64,
    /// Achieved minus target frequency (MHz).
    pub delta_f: f64,
}

/// Frequency errors over every qubit and validation round. Summary
/// statistics are over `|delta_f|` in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
    pub median_abs: f64,
    pub percentile_5: f64,
    pub percentile_95: f64,
}

impl ValidationReport {
    pub fn from_entries(entries: Vec<ValidationEntry>) -> Self {
        let mut abs: Vec<f64> = entries.iter().map(|e| e.delta_f.abs()).collect();
        abs.sort_by(f64::total_cmp);
        Self {
            median_abs: median(&abs),
            percentile_5: percentile_sorted(&abs, 5.0),
            percentile_95: percentile_sorted(&abs, 95.0),
            entries,
        }
    }

    pub fn abs_errors(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.delta_f.abs()).collect()
    }
}

/// Score a trained calibration by targeting `n_targets` random frequency
/// vectors and comparing the noiseless device response with the targets.
pub fn validate<R: Rng + ?Sized>(
    dev: &DeviceModel,
    result: &CalibrationResult,
    beliefs: &[TransmonParams],
    n_targets: usize,
    c: &TargetConstraints,
    rng: &mut R,
) -> Result<ValidationReport> {
    validate_matrix(dev, &result.s_learned, &result.cal, beliefs, n_targets, c, rng)
}

/// [`validate`] for a bare matrix and scalar calibration.
pub fn validate_matrix<R: Rng + ?Sized>(
    dev: &DeviceModel,
    s: &CrosstalkMatrix,
    cal: &ScalarCalibration,
    beliefs: &[TransmonParams],
    n_targets: usize,
    c: &TargetConstraints,
    rng: &mut R,
) -> Result<ValidationReport> {
    if n_targets == 0 {
        return Err(Error::InvalidArgument("n_targets must be at least 1".into()));
    }
    check_len(dev.n, s.n())?;
    check_len(dev.n, cal.n())?;
    check_len(dev.n, beliefs.len())?;
    let solver = CrosstalkSolver::new(s)?;
    let mut entries = Vec::with_capacity(n_targets * dev.n);
    for round in 0..n_targets {
        let targets = sample_target_frequencies(beliefs, &dev.geometry, c, rng)?;
        let phi = beliefs
            .iter()
            .zip(&targets)
            .map(|(p, &f)| flux_from_freq(p, f, 0.25))
            .collect::<Result<Vec<f64>>>()?;
        let v = solver.voltages_for_fluxes(cal, &phi)?;
        let f = dev.true_frequencies(&v)?;
        entries.extend(targets.iter().zip(&f).enumerate().map(|(qubit, (&t, &fq))| ValidationEntry {
            round,
            qubit,
            target_frequency: t,
            delta_f: (fq - t) * 1e3,
        }));
    }
    Ok(ValidationReport::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn perfect_calibration_has_no_error() {
        let dev = DeviceModel::reference(0.5, 1).unwrap();
        let r = validate_matrix(
            &dev,
            &dev.s_target,
            &dev.true_calibration(),
            &dev.params,
            10,
            &TargetConstraints::default(),
            &mut seeded(2),
        )
        .unwrap();
        assert_eq!(r.entries.len(), 160);
        assert!(r.median_abs < 1e-9 && r.percentile_95 < 1e-9);
    }

    #[test]
    fn identity_estimate_misses_and_report_is_ordered() {
        let dev = DeviceModel::reference(0.0, 1).unwrap();
        let r = validate_matrix(
            &dev,
            &CrosstalkMatrix::identity(16),
            &dev.true_calibration(),
            &dev.params,
            10,
            &TargetConstraints::default(),
            &mut seeded(2),
        )
        .unwrap();
        assert!(r.median_abs > 1.0);
        assert!(r.percentile_5 <= r.median_abs && r.median_abs <= r.percentile_95);
        assert!(matches!(
            validate_matrix(&dev, &dev.s_target, &dev.true_calibration(), &dev.params, 0, &TargetConstraints::default(), &mut seeded(2)),
            Err(Error::InvalidArgument(_))
        ));
    }
}
