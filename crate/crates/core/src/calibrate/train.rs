use serde::{Deserialize, Serialize};

use super::cost::row_cost;
use super::training::TrainingSet;
use crate::crosstalk::{normalize_unit_diagonal, CrosstalkMatrix, ScalarCalibration};
use crate::error::{check_len, Error, Result};
use crate::optim::{minimize, Method, OptimizerConfig};

/// Whether row training may move the diagonal element.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagonalMode {
    /// Train the whole row, then rescale to a unit diagonal and fold the
    /// scale into the effective `v_phi0`.
    #[default]
    Free,
    /// Hold the diagonal at its initial value; `v_phi0` stays as believed.
    Fixed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub diagonal: DiagonalMode,
    /// Fit each qubit's flux offset together with its row.
    pub joint_offsets: bool,
    /// Factor applied to the row cost before it reaches the optimizer, so
    /// that the optimizer tolerance is in these units. `None` picks
    /// [`LBFGS_COST_SCALE`] for L-BFGS and 1 otherwise.
    pub cost_scale: Option<f64>,
}

/// Default L-BFGS cost scale: residuals in micro flux quanta.
pub const LBFGS_COST_SCALE: f64 = 1e12;

impl TrainOptions {
    pub fn effective_cost_scale(&self, method: Method) -> f64 {
        self.cost_scale.unwrap_or(match method {
            Method::Lbfgs => LBFGS_COST_SCALE,
            Method::Sgd | Method::Adam => 1.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub s_learned: CrosstalkMatrix,
    /// Effective scalars after normalization.
    #[serde(flatten)]
    pub cal: ScalarCalibration,
    pub per_row_cost: Vec<f64>,
    pub per_row_iterations: Vec<usize>,
    pub config: OptimizerConfig,
    pub options: TrainOptions,
    pub seed: Option<u64>,
    pub m: usize,
}

impl CalibrationResult {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: CalibrationResult = serde_json::from_str(s)?;
        check_len(r.s_learned.n(), r.cal.n())?;
        Ok(r)
    }
}

/// Fit every row of the crosstalk matrix independently with default options.
pub fn train_matrix(
    ts: &TrainingSet,
    beliefs: &ScalarCalibration,
    init: &CrosstalkMatrix,
    cfg: &OptimizerConfig,
) -> Result<CalibrationResult> {
    train_matrix_with(ts, beliefs, init, cfg, TrainOptions::default())
}

pub fn train_matrix_with(
    ts: &TrainingSet,
    beliefs: &ScalarCalibration,
    init: &CrosstalkMatrix,
    cfg: &OptimizerConfig,
    options: TrainOptions,
) -> Result<CalibrationResult> {
    let n = ts.n;
    check_len(n, beliefs.n())?;
    check_len(n, init.n())?;
    if ts.m() == 0 {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }

    let mut rows = Vec::with_capacity(n);
    let mut offsets = beliefs.phi_offset.clone();
    let mut per_row_cost = Vec::with_capacity(n);
    let mut per_row_iterations = Vec::with_capacity(n);
    for k in 0..n {
        let (row, off, cost, iters) =
            train_row(ts, k, beliefs.v_phi0[k], beliefs.phi_offset[k], &init.row(k), cfg, options)
                .map_err(|e| Error::Row { row: k, source: Box::new(e) })?;
        rows.push(row);
        offsets[k] = off;
        per_row_cost.push(cost);
        per_row_iterations.push(iters);
    }

    let raw = CrosstalkMatrix::from_rows(&rows)?;
    let (s_learned, cal) = normalize_unit_diagonal(&raw, &ScalarCalibration::new(beliefs.v_phi0.clone(), offsets)?)?;
    Ok(CalibrationResult {
        s_learned,
        cal,
        per_row_cost,
        per_row_iterations,
        config: cfg.clone(),
        options,
        seed: None,
        m: ts.m(),
    })
}

/// Free variables are the row (minus the diagonal when fixed), followed by
/// the offset when it is trained jointly.
fn train_row(
    ts: &TrainingSet,
    k: usize,
    v: f64,
    off0: f64,
    init_row: &[f64],
    cfg: &OptimizerConfig,
    options: TrainOptions,
) -> Result<(Vec<f64>, f64, f64, usize)> {
    let n = init_row.len();
    let fixed_diag = options.diagonal == DiagonalMode::Fixed;
    let joint = options.joint_offsets;

    let unpack = |x: &[f64]| -> (Vec<f64>, f64) {
        let row = if fixed_diag {
            let mut r = Vec::with_capacity(n);
            r.extend_from_slice(&x[..k]);
            r.push(init_row[k]);
            r.extend_from_slice(&x[k..n - 1]);
            r
        } else {
            x[..n].to_vec()
        };
        let off = if joint { x[x.len() - 1] } else { off0 };
        (row, off)
    };
    let pack_grad = |g: Vec<f64>, off_grad: f64| -> Vec<f64> {
        let mut out: Vec<f64> = if fixed_diag {
            g.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| *v).collect()
        } else {
            g
        };
        if joint {
            out.push(off_grad);
        }
        out
    };

    let mut x0: Vec<f64> = if fixed_diag {
        init_row.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| *v).collect()
    } else {
        init_row.to_vec()
    };
    if joint {
        x0.push(off0);
    }

    let scale = options.effective_cost_scale(cfg.method);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("cost scale must be positive, got {scale}")));
    }
    let objective = |x: &[f64]| {
        let (row, off) = unpack(x);
        scale * row_cost(&row, ts, k, v, off).0
    };
    let gradient = |x: &[f64]| {
        let (row, off) = unpack(x);
        let (_, mut g) = row_cost(&row, ts, k, v, off);
        g.iter_mut().for_each(|x| *x *= scale);
        let off_grad = if joint { scale * offset_gradient(&row, ts, k, v, off) } else { 0.0 };
        pack_grad(g, off_grad)
    };
    let res = minimize(objective, gradient, &x0, cfg)?;
    let (row, off) = unpack(&res.x_star);
    let cost = row_cost(&row, ts, k, v, off).0;
    Ok((row, off, cost, res.iterations))
}

fn offset_gradient(row: &[f64], ts: &TrainingSet, k: usize, v: f64, off: f64) -> f64 {
    let sum: f64 = ts
        .samples
        .iter()
        .map(|s| s.fluxes[k] - (row.iter().zip(&s.voltages).map(|(a, b)| a * b).sum::<f64>() / v + off))
        .sum();
    -2.0 * sum / ts.m() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{build_training_set, closed_form_row, Beliefs, TargetConstraints};
    use crate::device::DeviceModel;
    use crate::rng::seeded;

    fn noiseless_set(m: usize, seed: u64) -> (DeviceModel, Beliefs, TrainingSet) {
        let dev = DeviceModel::reference(0.0, seed).unwrap();
        let beliefs = Beliefs::from_params(dev.params.clone());
        let ts = build_training_set(
            &dev,
            &beliefs,
            &CrosstalkMatrix::identity(16),
            m,
            &TargetConstraints::default(),
            &mut seeded(seed + 100),
        )
        .unwrap();
        (dev, beliefs, ts)
    }

    fn max_entry_error(a: &CrosstalkMatrix, b: &CrosstalkMatrix) -> f64 {
        a.matrix().iter().zip(b.matrix().iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn noiseless_training_recovers_target() {
        let (dev, beliefs, ts) = noiseless_set(40, 1);
        let r = train_matrix(&ts, &beliefs.cal, &CrosstalkMatrix::identity(16), &OptimizerConfig::lbfgs()).unwrap();
        assert!(r.s_learned.is_unit_diagonal());
        assert!(max_entry_error(&r.s_learned, &dev.s_target) < 1e-6, "{}", max_entry_error(&r.s_learned, &dev.s_target));
        assert!(r.per_row_cost.iter().all(|c| *c >= 0.0));
        for (v, t) in r.cal.v_phi0.iter().zip(&dev.params) {
            assert!((v / t.v_phi0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lbfgs_matches_closed_form() {
        let dev = DeviceModel::reference(0.5, 2).unwrap();
        let beliefs = Beliefs::from_params(dev.params.clone());
        let ts = build_training_set(&dev, &beliefs, &CrosstalkMatrix::identity(16), 30, &TargetConstraints::default(), &mut seeded(3))
            .unwrap();
        let init = CrosstalkMatrix::identity(16);
        let r = train_matrix_with(&ts, &beliefs.cal, &init, &OptimizerConfig::lbfgs(), TrainOptions::default()).unwrap();
        for k in 0..16 {
            let exact = closed_form_row(&ts, k, &beliefs.cal).unwrap();
            let scale = exact[k];
            let learned: Vec<f64> = r.s_learned.row(k).iter().map(|x| x * scale).collect();
            let rel = learned.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                / exact.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(rel < 1e-6, "row {k}: {rel}");
        }
    }

    #[test]
    fn warm_start_does_not_increase_cost() {
        let dev = DeviceModel::reference(0.5, 4).unwrap();
        let beliefs = Beliefs::from_params(dev.params.clone());
        let ts = build_training_set(&dev, &beliefs, &CrosstalkMatrix::identity(16), 20, &TargetConstraints::default(), &mut seeded(5))
            .unwrap();
        let r = train_matrix(&ts, &beliefs.cal, &dev.s_target, &OptimizerConfig::lbfgs()).unwrap();
        for k in 0..16 {
            let start = row_cost(&dev.s_target.row(k), &ts, k, beliefs.cal.v_phi0[k], beliefs.cal.phi_offset[k]).0;
            assert!(r.per_row_cost[k] <= start);
        }
    }

    #[test]
    fn fixed_diagonal_keeps_believed_scalars() {
        let (dev, beliefs, ts) = noiseless_set(40, 6);
        let opts = TrainOptions { diagonal: DiagonalMode::Fixed, ..Default::default() };
        let r = train_matrix_with(&ts, &beliefs.cal, &CrosstalkMatrix::identity(16), &OptimizerConfig::lbfgs(), opts).unwrap();
        assert_eq!(r.cal, beliefs.cal);
        assert!(max_entry_error(&r.s_learned, &dev.s_target) < 1e-6);
    }

    #[test]
    fn joint_offsets_recover_shifted_offsets() {
        let (dev, beliefs, ts) = noiseless_set(60, 7);
        let mut wrong = beliefs.cal.clone();
        wrong.phi_offset.iter_mut().for_each(|o| *o += 0.002);
        let opts = TrainOptions { joint_offsets: true, ..Default::default() };
        let r = train_matrix_with(&ts, &wrong, &CrosstalkMatrix::identity(16), &OptimizerConfig::lbfgs(), opts).unwrap();
        for (o, p) in r.cal.phi_offset.iter().zip(&dev.params) {
            assert!((o - p.phi_offset).abs() < 1e-6, "{o} vs {}", p.phi_offset);
        }
    }

    #[test]
    fn underdetermined_fits_but_misses() {
        let (dev, beliefs, ts) = noiseless_set(8, 8);
        let r = train_matrix(&ts, &beliefs.cal, &CrosstalkMatrix::identity(16), &OptimizerConfig::lbfgs()).unwrap();
        assert!(r.per_row_cost.iter().all(|c| *c < 1e-12));
        assert!(max_entry_error(&r.s_learned, &dev.s_target) > 1e-4);
    }

    #[test]
    fn result_json_round_trip() {
        let (_, beliefs, ts) = noiseless_set(20, 9);
        let r = train_matrix(&ts, &beliefs.cal, &CrosstalkMatrix::identity(16), &OptimizerConfig::lbfgs()).unwrap().with_seed(9);
        let json = r.to_json().unwrap();
        for key in ["s_learned", "v_phi0", "phi_offset", "per_row_cost", "config", "seed"] {
            assert!(json.contains(&format!("\"{key}\"")), "{key}");
        }
        assert_eq!(CalibrationResult::from_json(&json).unwrap(), r);
    }
}
