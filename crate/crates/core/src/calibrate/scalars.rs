use serde::{Deserialize, Serialize};

use super::training::TrainingSet;
use crate::crosstalk::{CrosstalkMatrix, ScalarCalibration};
use crate::error::{check_len, Error, Result};
use crate::optim::{minimize, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarTarget {
    VPhi0,
    PhiOffset,
    Both,
}

/// Mean-squared residual of `y ≈ inv_v·x + offset` and its gradient with
/// respect to `(inv_v, offset)`.
pub fn scalar_cost(x: &[f64], y: &[f64], inv_v: f64, offset: f64) -> (f64, [f64; 2]) {
    let m = x.len() as f64;
    let (mut c, mut gx, mut g1) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - inv_v * xi - offset;
        c += r * r;
        gx += r * xi;
        g1 += r;
    }
    (c / m, [-2.0 * gx / m, -2.0 * g1 / m])
}

/// Refit `v_phi0`, `phi_offset` or both for every qubit with the crosstalk
/// matrix held fixed. Scalars that are not retrained keep their values from
/// `start`.
pub fn retrain_scalars(
    ts: &TrainingSet,
    s_fixed: &CrosstalkMatrix,
    start: &ScalarCalibration,
    which: ScalarTarget,
    cfg: &OptimizerConfig,
) -> Result<ScalarCalibration> {
    let n = ts.n;
    check_len(n, s_fixed.n())?;
    check_len(n, start.n())?;
    let m = ts.m();
    let min_m = if which == ScalarTarget::Both { 2 } else { 1 };
    if m < min_m {
        return Err(Error::DegenerateData(0));
    }

    let mut out = start.clone();
    for k in 0..n {
        let row = s_fixed.row(k);
        let x: Vec<f64> = ts.samples.iter().map(|s| row.iter().zip(&s.voltages).map(|(a, b)| a * b).sum()).collect();
        let y: Vec<f64> = ts.samples.iter().map(|s| s.fluxes[k]).collect();
        let spread = x.iter().map(|v| (v - x[0]).abs()).fold(0.0, f64::max);
        let scale = (x.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt();
        let degenerate = match which {
            ScalarTarget::Both => !(spread > 1e-12 * scale.max(1.0)),
            ScalarTarget::VPhi0 => !(scale > 0.0),
            ScalarTarget::PhiOffset => false,
        };
        if degenerate {
            return Err(Error::DegenerateData(k));
        }
        let scale = if scale > 0.0 { scale } else { 1.0 };

        // Optimize u = inv_v * scale so both coordinates are in flux units.
        let inv_v0 = 1.0 / start.v_phi0[k];
        let off0 = start.phi_offset[k];
        let unpack = |p: &[f64]| -> (f64, f64) {
            match which {
                ScalarTarget::VPhi0 => (p[0] / scale, off0),
                ScalarTarget::PhiOffset => (inv_v0, p[0]),
                ScalarTarget::Both => (p[0] / scale, p[1]),
            }
        };
        let x0 = match which {
            ScalarTarget::VPhi0 => vec![inv_v0 * scale],
            ScalarTarget::PhiOffset => vec![off0],
            ScalarTarget::Both => vec![inv_v0 * scale, off0],
        };
        let objective = |p: &[f64]| {
            let (iv, off) = unpack(p);
            scalar_cost(&x, &y, iv, off).0
        };
        let gradient = |p: &[f64]| {
            let (iv, off) = unpack(p);
            let (_, g) = scalar_cost(&x, &y, iv, off);
            match which {
                ScalarTarget::VPhi0 => vec![g[0] / scale],
                ScalarTarget::PhiOffset => vec![g[1]],
                ScalarTarget::Both => vec![g[0] / scale, g[1]],
            }
        };
        let res = minimize(objective, gradient, &x0, cfg).map_err(|e| Error::Row { row: k, source: Box::new(e) })?;
        let (iv, off) = unpack(&res.x_star);
        if iv == 0.0 || !iv.is_finite() {
            return Err(Error::DegenerateData(k));
        }
        out.v_phi0[k] = 1.0 / iv;
        out.phi_offset[k] = off;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{build_training_set, Beliefs, TargetConstraints};
    use crate::device::DeviceModel;
    use crate::optim::{finite_difference_gradient, max_abs_difference};
    use crate::rng::seeded;
    use rand::Rng;

    /// Noiseless data from a device whose offsets drifted after the believed
    /// calibration was taken.
    fn drifted(seed: u64) -> (DeviceModel, ScalarCalibration, TrainingSet) {
        let dev = DeviceModel::reference(0.0, seed).unwrap();
        let believed = ScalarCalibration::from_params(&dev.params);
        let mut drifted = dev.clone();
        let mut rng = seeded(seed + 1);
        for p in &mut drifted.params {
            p.phi_offset += rng.random_range(-0.01..0.01);
        }
        let beliefs = Beliefs::from_params(dev.params.clone());
        let ts = build_training_set(&drifted, &beliefs, &dev.s_target, 30, &TargetConstraints::default(), &mut rng).unwrap();
        (drifted, believed, ts)
    }

    #[test]
    fn recovers_drifted_offsets() {
        let (truth, believed, ts) = drifted(1);
        let cfg = OptimizerConfig::lbfgs();
        for which in [ScalarTarget::PhiOffset, ScalarTarget::Both] {
            let cal = retrain_scalars(&ts, &truth.s_target, &believed, which, &cfg).unwrap();
            for (k, p) in truth.params.iter().enumerate() {
                assert!((cal.phi_offset[k] - p.phi_offset).abs() < 1e-8, "{which:?} {k}");
                assert!((cal.v_phi0[k] / p.v_phi0 - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn affine_regression_oracle() {
        let (truth, believed, ts) = drifted(2);
        let cal = retrain_scalars(&ts, &truth.s_target, &believed, ScalarTarget::Both, &OptimizerConfig::lbfgs()).unwrap();
        for k in 0..truth.n {
            let row = truth.s_target.row(k);
            let x: Vec<f64> = ts.samples.iter().map(|s| row.iter().zip(&s.voltages).map(|(a, b)| a * b).sum()).collect();
            let y: Vec<f64> = ts.samples.iter().map(|s| s.fluxes[k]).collect();
            let (mx, my) = (crate::stats::mean(&x), crate::stats::mean(&y));
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
            let slope = sxy / sxx;
            assert!((cal.phi_offset[k] - (my - slope * mx)).abs() < 1e-8);
            assert!((1.0 / cal.v_phi0[k] - slope).abs() < 1e-8);
        }
    }

    #[test]
    fn correct_offsets_are_a_fixed_point() {
        let dev = DeviceModel::reference(0.0, 3).unwrap();
        let beliefs = Beliefs::from_params(dev.params.clone());
        let ts = build_training_set(&dev, &beliefs, &dev.s_target, 10, &TargetConstraints::default(), &mut seeded(4)).unwrap();
        let cal = retrain_scalars(&ts, &dev.s_target, &beliefs.cal, ScalarTarget::PhiOffset, &OptimizerConfig::lbfgs()).unwrap();
        assert!(max_abs_difference(&cal.phi_offset, &beliefs.cal.phi_offset) < 1e-10);
    }

    #[test]
    fn one_sample_cannot_fit_both() {
        let (truth, believed, ts) = drifted(5);
        let one = ts.truncated(1);
        assert!(matches!(
            retrain_scalars(&one, &truth.s_target, &believed, ScalarTarget::Both, &OptimizerConfig::lbfgs()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded(6);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-15.0..15.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v / 29.0 + 0.01 + rng.random_range(-1e-3..1e-3)).collect();
        for _ in 0..20 {
            let p = [rng.random_range(0.02..0.05), rng.random_range(-0.05..0.05)];
            let (_, g) = scalar_cost(&x, &y, p[0], p[1]);
            let fd = finite_difference_gradient(|q| scalar_cost(&x, &y, q[0], q[1]).0, &p, 1e-6);
            assert!(max_abs_difference(&g, &fd) < 1e-5);
        }
    }
}
