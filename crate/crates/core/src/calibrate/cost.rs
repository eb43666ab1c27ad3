use nalgebra::{DMatrix, DVector};

use super::training::TrainingSet;
use crate::crosstalk::ScalarCalibration;
use crate::error::{check_len, Error, Result};

/// Mean-squared flux residual of row `k` and its gradient with respect to
/// `s_row`.
pub fn row_cost(s_row: &[f64], ts: &TrainingSet, k: usize, v_phi0_k: f64, offset_k: f64) -> (f64, Vec<f64>) {
    let n = s_row.len();
    let m = ts.m() as f64;
    let mut cost = 0.0;
    let mut grad = vec![0.0; n];
    for s in &ts.samples {
        let pred: f64 = s_row.iter().zip(&s.voltages).map(|(a, v)| a * v).sum::<f64>() / v_phi0_k + offset_k;
        let r = s.fluxes[k] - pred;
        cost += r * r;
        for (g, v) in grad.iter_mut().zip(&s.voltages) {
            *g += r * v;
        }
    }
    let scale = -2.0 / (m * v_phi0_k);
    grad.iter_mut().for_each(|g| *g *= scale);
    (cost / m, grad)
}

/// Smallest singular value of the voltage design matrix relative to its
/// largest, below which a row fit is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Exact least-squares solution of row `k` via the normal equations.
pub fn closed_form_row(ts: &TrainingSet, k: usize, cal: &ScalarCalibration) -> Result<Vec<f64>> {
    let n = ts.n;
    check_len(n, cal.n())?;
    if k >= n {
        return Err(Error::InvalidArgument(format!("row {k} out of range for N={n}")));
    }
    let m = ts.m();
    if m < n {
        return Err(Error::RankDeficient { rows: m, cols: n });
    }
    let a = DMatrix::from_fn(m, n, |i, j| ts.samples[i].voltages[j]);
    let sv = a.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if !(lo > RANK_TOLERANCE * hi) {
        return Err(Error::RankDeficient { rows: m, cols: n });
    }
    let y = DVector::from_iterator(m, ts.samples.iter().map(|s| cal.v_phi0[k] * (s.fluxes[k] - cal.phi_offset[k])));
    let ata = a.transpose() * &a;
    let aty = a.transpose() * y;
    let x = ata
        .cholesky()
        .map(|ch| ch.solve(&aty))
        .ok_or(Error::RankDeficient { rows: m, cols: n })?;
    Ok(x.iter().copied().collect())
}
