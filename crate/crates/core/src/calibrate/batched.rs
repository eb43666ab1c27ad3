use rand::Rng;
use serde::{Deserialize, Serialize};

use super::targets::TargetConstraints;
use super::train::{train_matrix_with, CalibrationResult, TrainOptions};
use super::training::{build_training_set, Beliefs, TrainingSet};
use crate::crosstalk::{CrosstalkMatrix, ScalarCalibration};
use crate::device::DeviceModel;
use crate::error::{check_len, Error, Result};
use crate::optim::OptimizerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchedResult {
    pub result: CalibrationResult,
    /// Median |predicted - measured| flux of each batch's fresh samples.
    pub batch_discrepancy: Vec<f64>,
    pub training: TrainingSet,
}

/// Learn the matrix in batches: each batch is acquired with the previous
/// batch's estimate and training always runs over every sample so far.
#[allow(clippy::too_many_arguments)]
pub fn batched_train<R: Rng + ?Sized>(
    dev: &DeviceModel,
    beliefs: &Beliefs,
    init: &CrosstalkMatrix,
    m_batch: usize,
    n_batches: usize,
    c: &TargetConstraints,
    cfg: &OptimizerConfig,
    options: TrainOptions,
    rng: &mut R,
) -> Result<BatchedResult> {
    if m_batch == 0 || n_batches == 0 {
        return Err(Error::InvalidArgument("batch size and batch count must be at least 1".into()));
    }
    check_len(dev.n, init.n())?;
    let mut s_est = init.clone();
    let mut cal_est = beliefs.cal.clone();
    let mut start = init.clone();
    let mut all = TrainingSet::new(dev.n);
    let mut batch_discrepancy = Vec::with_capacity(n_batches);
    let mut result = None;

    for _ in 0..n_batches {
        let acquire = beliefs.clone().with_cal(cal_est.clone())?;
        let batch = build_training_set(dev, &acquire, &s_est, m_batch, c, rng)?;
        batch_discrepancy.push(batch.median_flux_discrepancy());
        all.extend(&batch)?;
        let r = train_matrix_with(&all, &beliefs.cal, &start, cfg, options)?;
        start = belief_units(&r.s_learned, &r.cal, &beliefs.cal)?;
        s_est = r.s_learned.clone();
        cal_est = r.cal.clone();
        result = Some(r);
    }
    Ok(BatchedResult { result: result.expect("at least one batch"), batch_discrepancy, training: all })
}

/// Undo the unit-diagonal normalization so the rows are expressed against the
/// believed `v_phi0` again; used as the warm start for the next batch.
fn belief_units(s: &CrosstalkMatrix, effective: &ScalarCalibration, believed: &ScalarCalibration) -> Result<CrosstalkMatrix> {
    let rows: Vec<Vec<f64>> = (0..s.n())
        .map(|k| {
            let f = believed.v_phi0[k] / effective.v_phi0[k];
            s.row(k).iter().map(|x| x * f).collect()
        })
        .collect();
    CrosstalkMatrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::train_matrix;
    use crate::rng::seeded;

    #[test]
    fn single_batch_equals_single_shot() {
        let dev = DeviceModel::reference(0.5, 1).unwrap();
        let beliefs = Beliefs::from_params(dev.params.clone());
        let init = CrosstalkMatrix::identity(16);
        let c = TargetConstraints::default();
        let cfg = OptimizerConfig::lbfgs();
        let b = batched_train(&dev, &beliefs, &init, 25, 1, &c, &cfg, TrainOptions::default(), &mut seeded(7)).unwrap();
        let ts = build_training_set(&dev, &beliefs, &init, 25, &c, &mut seeded(7)).unwrap();
        let single = train_matrix(&ts, &beliefs.cal, &init, &cfg).unwrap();
        assert_eq!(b.result, single);
        assert_eq!(b.batch_discrepancy.len(), 1);
    }

    #[test]
    fn later_batches_aim_better() {
        let dev = DeviceModel::reference(0.5, 2).unwrap();
        let beliefs = Beliefs::from_params(dev.params.clone());
        let b = batched_train(
            &dev,
            &beliefs,
            &CrosstalkMatrix::identity(16),
            20,
            3,
            &TargetConstraints::default(),
            &OptimizerConfig::lbfgs(),
            TrainOptions::default(),
            &mut seeded(3),
        )
        .unwrap();
        assert_eq!(b.training.m(), 60);
        assert_eq!(b.result.m, 60);
        assert!(b.batch_discrepancy[2] < b.batch_discrepancy[0]);
    }

    #[test]
    fn rejects_empty_batches() {
        let dev = DeviceModel::reference(0.5, 2).unwrap();
        let beliefs = Beliefs::from_params(dev.params.clone());
        let r = batched_train(
            &dev,
            &beliefs,
            &CrosstalkMatrix::identity(16),
            0,
            3,
            &TargetConstraints::default(),
            &OptimizerConfig::lbfgs(),
            TrainOptions::default(),
            &mut seeded(3),
        );
        assert!(r.is_err());
    }
}
