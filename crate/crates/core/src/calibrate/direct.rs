use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crosstalk::{CrosstalkMatrix, ScalarCalibration};
use crate::device::DeviceModel;
use crate::error::{check_len, Error, Result};
use crate::optim::{minimize, OptimizerConfig};
use crate::transmon::{sweep_voltages, flux_from_freq, freq_from_flux, freq_slope, TransmonParams};

/// Bias point of the victim qubit below its believed maximum (GHz).
pub const DIRECT_BIAS_DETUNING: f64 = 0.5;
/// Fitted elements smaller than this are reported as zero.
pub const DIRECT_RESOLUTION: f64 = 1e-4;
/// Sweep half-width as a fraction of the mean believed `v_phi0`.
const SWEEP_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectMeasurement {
    pub s: CrosstalkMatrix,
    /// Ordered pairs `(i, j)` whose fit failed; those elements are zero.
    pub flagged: Vec<(usize, usize)>,
    pub measurements: usize,
}

/// Frequency measurements used by the direct approach.
pub fn direct_measurement_count(n: usize, n_points: usize) -> usize {
    n * n.saturating_sub(1) * n_points
}

/// Measure every off-diagonal element individually: bias the victim qubit
/// `i` off its sweet spot, sweep the aggressor line `j` and fit the victim's
/// spectrum for the aggressor's voltage per flux quantum.
pub fn direct_measure_matrix<R: Rng + ?Sized>(
    dev: &DeviceModel,
    beliefs: &[TransmonParams],
    n_points: usize,
    rng: &mut R,
) -> Result<DirectMeasurement> {
    if n_points < 3 {
        return Err(Error::InvalidArgument("direct measurement needs at least 3 sweep points".into()));
    }
    let n = dev.n;
    check_len(n, beliefs.len())?;
    let cal = ScalarCalibration::from_params(beliefs);
    let mean_v = cal.v_phi0.iter().sum::<f64>() / n as f64;
    let half = SWEEP_FRACTION * mean_v.abs();
    let sweep = sweep_voltages(n_points, SWEEP_FRACTION, mean_v);

    let mut s = nalgebra::DMatrix::identity(n, n);
    let mut flagged = Vec::new();
    let mut v = vec![0.0; n];
    for i in 0..n {
        let p = &beliefs[i];
        let phi_bias = flux_from_freq(p, p.f_max - DIRECT_BIAS_DETUNING, 0.25)?;
        let v_bias = cal.v_phi0[i] * (phi_bias - cal.phi_offset[i]);
        for j in (0..n).filter(|&j| j != i) {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[i] = v_bias;
            let mut freqs = Vec::with_capacity(n_points);
            for &vj in &sweep {
                v[j] = vj;
                freqs.push(dev.measure_frequencies(&v, rng)?[i]);
            }
            match fit_element(p, phi_bias, &sweep, &freqs, half) {
                Ok(g) => {
                    let sij = cal.v_phi0[i] * g;
                    s[(i, j)] = if sij.abs() < DIRECT_RESOLUTION { 0.0 } else { sij };
                }
                Err(Error::FitDiverged { .. }) => flagged.push((i, j)),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(DirectMeasurement { s: CrosstalkMatrix::new(s)?, flagged, measurements: direct_measurement_count(n, n_points) })
}

/// Fit `f = spectrum(g·V + offset)` with the spectrum shape fixed. Returns
/// `g = 1/V^Φ0_ij`. The sign of `g` is pinned by the linear-regression slope.
fn fit_element(p: &TransmonParams, phi_bias: f64, sweep: &[f64], freqs: &[f64], half: f64) -> Result<f64> {
    let m = sweep.len() as f64;
    let mv = sweep.iter().sum::<f64>() / m;
    let mf = freqs.iter().sum::<f64>() / m;
    let slope = sweep.iter().zip(freqs).map(|(a, b)| (a - mv) * (b - mf)).sum::<f64>()
        / sweep.iter().map(|a| (a - mv) * (a - mv)).sum::<f64>();
    let g0 = slope / freq_slope(p, phi_bias);

    // Coordinates: u = g·half (flux swing at the sweep edge) and the offset;
    // cost in MHz².
    let cost = |x: &[f64]| -> (f64, Vec<f64>) {
        let (g, off) = (x[0] / half, x[1]);
        let (mut c, mut gu, mut go) = (0.0, 0.0, 0.0);
        for (&vt, &ft) in sweep.iter().zip(freqs) {
            let phi = g * vt + off;
            let r = (ft - freq_from_flux(p, phi)) * 1e3;
            let d = -freq_slope(p, phi) * 1e3;
            c += r * r;
            gu += 2.0 * r * d * vt / half;
            go += 2.0 * r * d;
        }
        (c / m, vec![gu / m, go / m])
    };
    let x0 = [g0 * half, phi_bias];
    let c0 = cost(&x0).0;
    let cfg = OptimizerConfig::lbfgs().with_tolerance(1e-14).with_max_iters(500);
    let res = minimize(|x| cost(x).0, |x| cost(x).1, &x0, &cfg).map_err(|_| Error::FitDiverged { initial_rms: c0.sqrt(), final_rms: f64::NAN })?;
    let g = res.x_star[0] / half;
    if !(res.final_cost <= c0) || !g.is_finite() {
        return Err(Error::FitDiverged { initial_rms: c0.sqrt(), final_rms: res.final_cost.sqrt() });
    }
    // A fit that lands on the mirrored branch reports the regression sign.
    Ok(if g0 != 0.0 && g.signum() != g0.signum() { -g } else { g })
}
