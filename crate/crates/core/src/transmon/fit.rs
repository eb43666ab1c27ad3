//! Least-squares fit of the transmon spectrum to spectroscopy points, with
//! `flux = V / v_phi0 + phi_offset`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{freq_from_flux, nominal, SpectroscopyPoint, TransmonParams};
use crate::error::{Error, Result};
use crate::optim::{minimize, OptimizerConfig};

/// Parameters held at their initial value during a fit (`true` = fixed).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitMask {
    pub f_max: bool,
    pub ec_h: bool,
    pub d: bool,
    pub v_phi0: bool,
    pub phi_offset: bool,
}

impl FitMask {
    pub fn all_free() -> Self {
        Self::default()
    }

    fn fixed(&self) -> [bool; 5] {
        [self.f_max, self.ec_h, self.d, self.v_phi0, self.phi_offset]
    }

    pub fn free_count(&self) -> usize {
        self.fixed().iter().filter(|f| !**f).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    pub params: TransmonParams,
    /// Root-mean-square frequency residual (GHz).
    pub rms_residual: f64,
    pub iterations: usize,
}

fn to_array(p: &TransmonParams) -> [f64; 5] {
    [p.f_max, p.ec_h, p.d, p.v_phi0, p.phi_offset]
}

fn from_array(a: [f64; 5]) -> TransmonParams {
    TransmonParams { f_max: a[0], ec_h: a[1], d: a[2], v_phi0: a[3], phi_offset: a[4] }
}

/// Sum of squared frequency residuals (GHz²) and its gradient with respect to
/// `(f_max, ec_h, d, v_phi0, phi_offset)`.
pub fn spectrum_cost(points: &[SpectroscopyPoint], p: &TransmonParams) -> (f64, [f64; 5]) {
    let mut cost = 0.0;
    let mut grad = [0.0; 5];
    for pt in points {
        let (r, partials) = residual(pt, p);
        cost += r * r;
        for (gi, di) in grad.iter_mut().zip(partials) {
            *gi += 2.0 * r * di;
        }
    }
    (cost, grad)
}

/// Model minus measured frequency and the model's partial derivatives.
fn residual(pt: &SpectroscopyPoint, p: &TransmonParams) -> (f64, [f64; 5]) {
    let d2 = p.d * p.d;
    let amp = p.f_max + p.ec_h;
    let phi = pt.voltage / p.v_phi0 + p.phi_offset;
    let c = (PI * phi).cos();
    let g = d2 + (1.0 - d2) * c * c;
    let x = g.sqrt().sqrt();
    let g34 = x * x * x;
    let r = amp * x - p.ec_h - pt.frequency;
    let df_dphi = -amp * 0.25 * PI * (1.0 - d2) * (2.0 * PI * phi).sin() / g34;
    (
        r,
        [
            x,
            x - 1.0,
            amp * 0.5 * p.d * (1.0 - c * c) / g34,
            -df_dphi * pt.voltage / (p.v_phi0 * p.v_phi0),
            df_dphi,
        ],
    )
}

/// Starting point for a fit when nothing better is known.
///
/// `f_max` is the largest measured frequency and the offset places the sweet
/// spot at that point's voltage. `v_phi0` is twice the voltage distance from
/// the maximum to the minimum when the minimum lies strictly inside the sweep,
/// otherwise the population mean. `d` and `ec_h` take population means.
pub fn initial_guess(points: &[SpectroscopyPoint]) -> TransmonParams {
    assert!(!points.is_empty(), "initial_guess needs at least one point");
    let by_freq = |a: &&SpectroscopyPoint, b: &&SpectroscopyPoint| a.frequency.total_cmp(&b.frequency);
    let top = points.iter().max_by(by_freq).unwrap();
    let bottom = points.iter().min_by(by_freq).unwrap();
    let v_lo = points.iter().map(|p| p.voltage).fold(f64::INFINITY, f64::min);
    let v_hi = points.iter().map(|p| p.voltage).fold(f64::NEG_INFINITY, f64::max);

    let interior_min = bottom.voltage > v_lo && bottom.voltage < v_hi;
    let distance = (bottom.voltage - top.voltage).abs();
    let v_phi0 = if interior_min && distance > 0.0 { 2.0 * distance } else { nominal::V_PHI0.0 };
    let mut phi_offset = -top.voltage / v_phi0;
    phi_offset -= phi_offset.round();

    TransmonParams { f_max: top.frequency, ec_h: nominal::EC_H.0, d: nominal::D.0, v_phi0, phi_offset }
}

/// Fit the spectrum to `points`, starting at `init` and holding the parameters
/// flagged in `fixed`.
pub fn fit_spectrum(points: &[SpectroscopyPoint], fixed: FitMask, init: &TransmonParams) -> Result<SpectrumFit> {
    let free: Vec<usize> = (0..5).filter(|&i| !fixed.fixed()[i]).collect();
    if points.len() < free.len() {
        return Err(Error::InsufficientData { points: points.len(), free: free.len() });
    }
    if !(init.ec_h > 0.0) {
        return Err(Error::InvalidParams(format!("initial ec_h must be positive, got {}", init.ec_h)));
    }
    let initial_cost = spectrum_cost(points, init).0;
    if free.is_empty() || initial_cost == 0.0 {
        return Ok(SpectrumFit { params: *init, rms_residual: rms(initial_cost, points.len()), iterations: 0 });
    }
    let (coarse, iterations) = lbfgs_fit(points, &free, init)?;
    let (mut params, cost, steps) = polish(points, &free, coarse);
    let iterations = iterations + steps;
    if !(cost < initial_cost) {
        return Err(Error::FitDiverged { initial_rms: rms(initial_cost, points.len()), final_rms: rms(cost, points.len()) });
    }

    params.d = params.d.abs();
    if params.v_phi0.signum() != init.v_phi0.signum() {
        // The spectrum is even in flux, so (v, o) and (-v, -o) are equivalent.
        params.v_phi0 = -params.v_phi0;
        params.phi_offset = -params.phi_offset;
    }
    params.phi_offset -= params.phi_offset.round();
    let rms_residual = rms(cost, points.len());
    if params.validate().is_err() {
        return Err(Error::FitDiverged { initial_rms: rms(initial_cost, points.len()), final_rms: rms_residual });
    }
    Ok(SpectrumFit { params, rms_residual, iterations })
}

/// L-BFGS in coordinates scaled by the population spread around `init`.
fn lbfgs_fit(points: &[SpectroscopyPoint], free: &[usize], init: &TransmonParams) -> Result<(TransmonParams, usize)> {
    let base = to_array(init);
    const EC: usize = 1;
    let spread = [
        nominal::F_MAX.1,
        nominal::EC_H.1,
        nominal::D.1,
        nominal::V_PHI0.1,
        nominal::PHI_OFFSET_ABS.1,
    ];
    // Objective in MHz².
    const COST_SCALE: f64 = 1e6;
    // E_C is kept positive through a log parametrization.
    let unpack = |z: &[f64]| {
        let mut a = base;
        for (k, &i) in free.iter().enumerate() {
            a[i] = if i == EC { base[i] * (spread[i] / base[i] * z[k]).exp() } else { base[i] + spread[i] * z[k] };
        }
        from_array(a)
    };
    let objective = |z: &[f64]| COST_SCALE * spectrum_cost(points, &unpack(z)).0;
    let gradient = |z: &[f64]| {
        let p = unpack(z);
        let (_, g) = spectrum_cost(points, &p);
        free.iter()
            .map(|&i| {
                let da = if i == EC { p.ec_h * spread[i] / base[i] } else { spread[i] };
                COST_SCALE * da * g[i]
            })
            .collect()
    };
    let cfg = OptimizerConfig::lbfgs().with_tolerance(1e-18).with_max_iters(5000);
    let result = minimize(objective, gradient, &vec![0.0; free.len()], &cfg)?;
    Ok((unpack(&result.x_star), result.iterations))
}

const POLISH_STEPS: usize = 100;

/// Levenberg-Marquardt refinement of an L-BFGS estimate. Each damped
/// Gauss-Newton step is solved by SVD of the augmented Jacobian; only steps
/// that lower the cost are taken.
fn polish(points: &[SpectroscopyPoint], free: &[usize], start: TransmonParams) -> (TransmonParams, f64, usize) {
    let spread = [nominal::F_MAX.1, nominal::EC_H.1, nominal::D.1, nominal::V_PHI0.1, nominal::PHI_OFFSET_ABS.1];
    let (n, k) = (points.len(), free.len());
    let mut p = start;
    let mut cost = spectrum_cost(points, &p).0;
    let mut lambda: f64 = 1e-6;
    let mut steps = 0;
    while steps < POLISH_STEPS && cost > 0.0 {
        steps += 1;
        let mut a = DMatrix::zeros(n + k, k);
        let mut b = DVector::zeros(n + k);
        for (row, pt) in points.iter().enumerate() {
            let (r, d) = residual(pt, &p);
            b[row] = -r;
            for (col, &i) in free.iter().enumerate() {
                a[(row, col)] = d[i] * spread[i];
            }
        }
        let norms: Vec<f64> = (0..k).map(|c| a.column(c).norm()).collect();
        let mut improved = false;
        while lambda < 1e12 {
            for (c, norm) in norms.iter().enumerate() {
                a[(n + c, c)] = lambda.sqrt() * norm;
            }
            let Ok(step) = a.clone().svd(true, true).solve(&b, 1e-15) else { break };
            let mut arr = to_array(&p);
            for (col, &i) in free.iter().enumerate() {
                arr[i] += spread[i] * step[col];
            }
            let trial = from_array(arr);
            let c = spectrum_cost(points, &trial).0;
            if trial.ec_h > 0.0 && c < cost {
                improved = cost - c > 1e-15 * cost;
                (p, cost) = (trial, c);
                lambda = (lambda * 0.1).max(1e-15);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost, steps)
}

fn rms(cost: f64, n: usize) -> f64 {
    (cost / n as f64).sqrt()
}

/// Uniformly spaced sweep over `±span · v_ref` volts.
pub fn sweep_voltages(n_points: usize, span: f64, v_ref: f64) -> Vec<f64> {
    if n_points == 1 {
        return vec![0.0];
    }
    let lo = -span * v_ref.abs();
    let step = 2.0 * span * v_ref.abs() / (n_points - 1) as f64;
    (0..n_points).map(|i| lo + step * i as f64).collect()
}

/// Spectroscopy points of a single qubit swept on its own line, without noise.
pub fn noiseless_points(p: &TransmonParams, voltages: &[f64]) -> Vec<SpectroscopyPoint> {
    voltages
        .iter()
        .map(|&v| SpectroscopyPoint { voltage: v, frequency: freq_from_flux(p, p.flux_from_voltage(v)) })
        .collect()
}
