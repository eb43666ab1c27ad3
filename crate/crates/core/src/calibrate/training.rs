use rand::Rng;
use serde::{Deserialize, Serialize};

use super::targets::{sample_target_frequencies, TargetConstraints};
use crate::crosstalk::{CrosstalkMatrix, CrosstalkSolver, ScalarCalibration};
use crate::device::DeviceModel;
use crate::error::{check_len, Error, Result};
use crate::transmon::{flux_from_freq, TransmonParams};

/// What the experimenter believes about the device: spectrum parameters for
/// frequency/flux conversion and the scalar calibration used to turn fluxes
/// into voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beliefs {
    pub params: Vec<TransmonParams>,
    pub cal: ScalarCalibration,
}

impl Beliefs {
    pub fn from_params(params: Vec<TransmonParams>) -> Self {
        let cal = ScalarCalibration::from_params(&params);
        Self { params, cal }
    }

    pub fn with_cal(mut self, cal: ScalarCalibration) -> Result<Self> {
        check_len(self.params.len(), cal.n())?;
        self.cal = cal;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub voltages: Vec<f64>,
    /// Fluxes inferred from the measured frequencies.
    pub fluxes: Vec<f64>,
    /// Fluxes the round was aiming for.
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub n: usize,
    pub samples: Vec<TrainingSample>,
    /// Rounds discarded because a measured frequency could not be inverted.
    pub failed_rounds: usize,
}

impl TrainingSet {
    pub fn new(n: usize) -> Self {
        Self { n, samples: Vec::new(), failed_rounds: 0 }
    }

    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn push(&mut self, s: TrainingSample) -> Result<()> {
        check_len(self.n, s.voltages.len())?;
        check_len(self.n, s.fluxes.len())?;
        check_len(self.n, s.predicted.len())?;
        if s.fluxes.iter().chain(&s.voltages).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("training sample has non-finite entries".into()));
        }
        self.samples.push(s);
        Ok(())
    }

    pub fn extend(&mut self, other: &TrainingSet) -> Result<()> {
        check_len(self.n, other.n)?;
        self.samples.extend(other.samples.iter().cloned());
        self.failed_rounds += other.failed_rounds;
        Ok(())
    }

    /// The first `m` samples.
    pub fn truncated(&self, m: usize) -> TrainingSet {
        TrainingSet { n: self.n, samples: self.samples[..m.min(self.m())].to_vec(), failed_rounds: 0 }
    }

    pub fn subset(&self, indices: &[usize]) -> Result<TrainingSet> {
        let mut out = TrainingSet::new(self.n);
        for &i in indices {
            let s = self.samples.get(i).ok_or_else(|| Error::InvalidArgument(format!("sample index {i} out of range")))?;
            out.samples.push(s.clone());
        }
        Ok(out)
    }

    /// Median over samples and qubits of |predicted - measured| flux.
    pub fn median_flux_discrepancy(&self) -> f64 {
        let d: Vec<f64> = self
            .samples
            .iter()
            .flat_map(|s| s.predicted.iter().zip(&s.fluxes).map(|(p, f)| (p - f).abs()))
            .collect();
        crate::stats::median(&d)
    }
}

/// Collect `m` rounds of (voltages, inferred fluxes) against the device.
///
/// A round whose measured frequency cannot be inverted is discarded and
/// redrawn; the call fails once more than 10% of `m` (at least one) rounds
/// have been discarded.
pub fn build_training_set<R: Rng + ?Sized>(
    dev: &DeviceModel,
    beliefs: &Beliefs,
    s_est: &CrosstalkMatrix,
    m: usize,
    c: &TargetConstraints,
    rng: &mut R,
) -> Result<TrainingSet> {
    if m == 0 {
        return Err(Error::InvalidArgument("training set size must be at least 1".into()));
    }
    let n = dev.n;
    check_len(n, beliefs.n())?;
    check_len(n, s_est.n())?;
    let solver = CrosstalkSolver::new(s_est)?;
    let allowed = (m / 10).max(1);
    let mut ts = TrainingSet::new(n);

    while ts.m() < m {
        let targets = sample_target_frequencies(&beliefs.params, &dev.geometry, c, rng)?;
        let predicted = beliefs
            .params
            .iter()
            .zip(&targets)
            .map(|(p, &f)| flux_from_freq(p, f, 0.25))
            .collect::<Result<Vec<f64>>>()?;
        let voltages = solver.voltages_for_fluxes(&beliefs.cal, &predicted)?;
        let measured = dev.measure_frequencies(&voltages, rng)?;
        let fluxes: Result<Vec<f64>> = beliefs
            .params
            .iter()
            .zip(measured.iter().zip(&predicted))
            .map(|(p, (&f, &hint))| flux_from_freq(p, f, hint))
            .collect();
        match fluxes {
            Ok(fluxes) => ts.push(TrainingSample { voltages, fluxes, predicted })?,
            Err(Error::OutOfRange { .. }) => {
                ts.failed_rounds += 1;
                if ts.failed_rounds > allowed {
                    return Err(Error::TrainingAborted { failed: ts.failed_rounds, requested: m });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ts)
}
