//! Flux-tunable transmon spectrum.
//!
//! Frequencies and charging energies are in GHz, flux in units of the flux
//! quantum and voltages in volts. The spectrum of a qubit threaded by external
//! flux `phi` is
//!
//! ```text
//! f(phi) = (f_max + E_C/h) * (d^2 + (1 - d^2) cos^2(pi phi))^(1/4) - E_C/h
//! ```
//!
//! which is even and 1-periodic in `phi`, maximal at integer flux (the sweet
//! spot) and minimal at half-integer flux.

mod fit;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{fit_spectrum, initial_guess, spectrum_cost, sweep_voltages, noiseless_points, FitMask, SpectrumFit};

/// Relative slack allowed when inverting a frequency that noise has pushed just
/// past either end of the spectrum.
pub const OVERSHOOT_TOLERANCE: f64 = 1e-6;

/// Population statistics (mean, standard deviation) of the reference device.
pub mod nominal {
    pub const F_MAX: (f64, f64) = (4.887, 0.110);
    pub const V_PHI0: (f64, f64) = (29.2, 2.7);
    pub const D: (f64, f64) = (0.35, 0.04);
    pub const EC_H: (f64, f64) = (0.1961, 0.0052);
    /// Magnitude of the flux offset; the sign is drawn uniformly.
    pub const PHI_OFFSET_ABS: (f64, f64) = (0.0197, 0.0059);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    /// Sweet-spot frequency (GHz).
    pub f_max: f64,
    /// Charging energy over Planck's constant (GHz).
    pub ec_h: f64,
    /// Junction asymmetry.
    pub d: f64,
    /// Voltage per flux quantum on the qubit's own line (V).
    pub v_phi0: f64,
    /// Static flux offset (flux quanta).
    pub phi_offset: f64,
}

impl TransmonParams {
    pub fn new(f_max: f64, ec_h: f64, d: f64, v_phi0: f64, phi_offset: f64) -> Result<Self> {
        let p = Self { f_max, ec_h, d, v_phi0, phi_offset };
        p.validate()?;
        Ok(p)
    }

    /// Table I means with zero flux offset.
    pub fn nominal() -> Self {
        Self {
            f_max: nominal::F_MAX.0,
            ec_h: nominal::EC_H.0,
            d: nominal::D.0,
            v_phi0: nominal::V_PHI0.0,
            phi_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.f_max, self.ec_h, self.d, self.v_phi0, self.phi_offset]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("non-finite value".into()));
        }
        if self.f_max <= 0.0 {
            return Err(Error::InvalidParams(format!("f_max must be positive, got {}", self.f_max)));
        }
        if self.ec_h <= 0.0 {
            return Err(Error::InvalidParams(format!("ec_h must be positive, got {}", self.ec_h)));
        }
        if !(0.0..1.0).contains(&self.d) {
            return Err(Error::InvalidParams(format!("d must lie in [0, 1), got {}", self.d)));
        }
        if self.v_phi0 == 0.0 {
            return Err(Error::InvalidParams("v_phi0 must be nonzero".into()));
        }
        if self.phi_offset.abs() >= 0.5 {
            return Err(Error::InvalidParams(format!(
                "|phi_offset| must be below 0.5, got {}",
                self.phi_offset
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// External flux for a voltage on the qubit's own line, ignoring crosstalk.
    pub fn flux_from_voltage(&self, voltage: f64) -> f64 {
        voltage / self.v_phi0 + self.phi_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyPoint {
    pub voltage: f64,
    pub frequency: f64,
}

pub fn freq_from_flux(p: &TransmonParams, phi_ext: f64) -> f64 {
    let c = (PI * phi_ext).cos();
    let d2 = p.d * p.d;
    (p.f_max + p.ec_h) * (d2 + (1.0 - d2) * c * c).sqrt().sqrt() - p.ec_h
}

/// Derivative of [`freq_from_flux`] with respect to flux (GHz per flux quantum).
pub fn freq_slope(p: &TransmonParams, phi_ext: f64) -> f64 {
    let c = (PI * phi_ext).cos();
    let d2 = p.d * p.d;
    let g = d2 + (1.0 - d2) * c * c;
    -(p.f_max + p.ec_h) * 0.25 * PI * (1.0 - d2) * (2.0 * PI * phi_ext).sin() * g.powf(-0.75)
}

pub fn min_frequency(p: &TransmonParams) -> f64 {
    (p.f_max + p.ec_h) * p.d.sqrt() - p.ec_h
}

/// Invert the spectrum, choosing among `±phi + k` the candidate closest to
/// `predicted_flux`.
pub fn flux_from_freq(p: &TransmonParams, f: f64, predicted_flux: f64) -> Result<f64> {
    let f_min = min_frequency(p);
    let out_of_range = || Error::OutOfRange { frequency: f, min: f_min, max: p.f_max };
    if !f.is_finite() {
        return Err(out_of_range());
    }
    let d2 = p.d * p.d;
    let cos2 = if f >= p.f_max {
        if (f - p.f_max) > OVERSHOOT_TOLERANCE * p.f_max {
            return Err(out_of_range());
        }
        1.0
    } else if f <= f_min {
        if (f_min - f) > OVERSHOOT_TOLERANCE * f_min.abs() {
            return Err(out_of_range());
        }
        0.0
    } else {
        let ratio = (f + p.ec_h) / (p.f_max + p.ec_h);
        let r4 = (ratio * ratio) * (ratio * ratio);
        ((r4 - d2) / (1.0 - d2)).clamp(0.0, 1.0)
    };
    let principal = cos2.sqrt().acos() / PI;
    let plus = principal + (predicted_flux - principal).round();
    let minus = -principal + (predicted_flux + principal).round();
    if (plus - predicted_flux).abs() <= (minus - predicted_flux).abs() {
        Ok(plus)
    } else {
        Ok(minus)
    }
}

/// Draw `count` qubits from the reference-device population. Each parameter is
/// normal with the nominal mean and spread; invalid draws are redrawn.
pub fn sample_device_params<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<TransmonParams> {
    let normal = |(m, s): (f64, f64)| Normal::new(m, s).expect("nominal spreads are finite");
    let f_max = normal(nominal::F_MAX);
    let v_phi0 = normal(nominal::V_PHI0);
    let d = normal(nominal::D);
    let ec_h = normal(nominal::EC_H);
    let offset = normal(nominal::PHI_OFFSET_ABS);

    (0..count)
        .map(|_| loop {
            let magnitude = offset.sample(rng);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let p = TransmonParams {
                f_max: f_max.sample(rng),
                ec_h: ec_h.sample(rng),
                d: d.sample(rng),
                v_phi0: v_phi0.sample(rng),
                phi_offset: sign * magnitude,
            };
            if magnitude >= 0.0 && p.is_valid() {
                break p;
            }
        })
        .collect()
}
