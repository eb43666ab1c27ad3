//! Ground-truth simulated array.
//!
//! A [`DeviceModel`] owns the true transmon parameters and the true crosstalk
//! matrix. Frequency "measurements" are the true frequencies plus i.i.d.
//! Gaussian noise; all qubits are read out together. Parameter errors are
//! modeled as wrong *beliefs* handed to the calibrator, never as changes to
//! the device.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::crosstalk::{
    flux_from_voltages, generate_crosstalk_matrix, grid_positions, ArrayGeometry, CrosstalkMatrix, ScalarCalibration,
    DECAY_A, DECAY_C, DECAY_SIGMA,
};
use crate::error::{check_len, Error, Result};
use crate::rng::seeded;
use crate::transmon::{freq_from_flux, sample_device_params, TransmonParams};

/// Seed used to generate the shipped 16-qubit reference crosstalk matrix.
pub const REFERENCE_SEED: u64 = 16;

const REFERENCE_S_TARGET: &str = include_str!("../data/s_target_16.json");

/// The shipped 16-qubit crosstalk matrix (distance-decay model, seed
/// [`REFERENCE_SEED`]).
pub fn reference_crosstalk() -> CrosstalkMatrix {
    CrosstalkMatrix::from_json(REFERENCE_S_TARGET).expect("shipped reference matrix parses")
}

/// Regenerate the reference matrix from its seed.
pub fn regenerate_reference_crosstalk() -> CrosstalkMatrix {
    let geom = grid_positions(16).expect("16 is a perfect square");
    generate_crosstalk_matrix(&geom, DECAY_A, DECAY_C, DECAY_SIGMA, &mut seeded(REFERENCE_SEED))
        .expect("decay constants are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub n: usize,
    pub geometry: ArrayGeometry,
    pub params: Vec<TransmonParams>,
    pub s_target: CrosstalkMatrix,
    /// Standard deviation of frequency readout noise (MHz).
    pub sigma_meas: f64,
    pub seed: u64,
}

impl DeviceModel {
    pub fn new(
        geometry: ArrayGeometry,
        params: Vec<TransmonParams>,
        s_target: CrosstalkMatrix,
        sigma_meas: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = geometry.n();
        check_len(n, params.len())?;
        check_len(n, s_target.n())?;
        if !(sigma_meas >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma_meas must be non-negative, got {sigma_meas}")));
        }
        for p in &params {
            p.validate()?;
        }
        Ok(Self { n, geometry, params, s_target, sigma_meas, seed })
    }

    /// Square array with population-drawn parameters and a distance-decay
    /// crosstalk matrix, all drawn from `seed`.
    pub fn sample(n: usize, sigma_meas: f64, seed: u64) -> Result<Self> {
        let geometry = grid_positions(n)?;
        let mut rng = seeded(seed);
        let params = sample_device_params(&mut rng, n);
        let s = generate_crosstalk_matrix(&geometry, DECAY_A, DECAY_C, DECAY_SIGMA, &mut rng)?;
        Self::new(geometry, params, s, sigma_meas, seed)
    }

    /// 4×4 array using the shipped reference crosstalk matrix and parameters
    /// drawn from `seed`.
    pub fn reference(sigma_meas: f64, seed: u64) -> Result<Self> {
        let params = sample_device_params(&mut seeded(seed), 16);
        Self::new(grid_positions(16)?, params, reference_crosstalk(), sigma_meas, seed)
    }

    pub fn with_s_target(mut self, s: CrosstalkMatrix) -> Result<Self> {
        check_len(self.n, s.n())?;
        self.s_target = s;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma_meas: f64) -> Self {
        self.sigma_meas = sigma_meas;
        self
    }

    pub fn true_calibration(&self) -> ScalarCalibration {
        ScalarCalibration::from_params(&self.params)
    }

    pub fn true_fluxes(&self, v: &[f64]) -> Result<Vec<f64>> {
        flux_from_voltages(&self.s_target, &self.true_calibration(), v)
    }

    pub fn true_frequencies(&self, v: &[f64]) -> Result<Vec<f64>> {
        let phi = self.true_fluxes(v)?;
        Ok(self.params.iter().zip(&phi).map(|(p, &x)| freq_from_flux(p, x)).collect())
    }

    /// One simultaneous noisy readout of every qubit (GHz).
    pub fn measure_frequencies<R: Rng + ?Sized>(&self, v: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut f = self.true_frequencies(v)?;
        if self.sigma_meas > 0.0 {
            let noise = Normal::new(0.0, self.sigma_meas * 1e-3).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            f.iter_mut().for_each(|x| *x += noise.sample(rng));
        }
        Ok(f)
    }

    /// The experimenter's parameter estimates: ground truth with one parameter
    /// perturbed per qubit.
    pub fn perturbed_beliefs<R: Rng + ?Sized>(&self, spec: &ParamErrorSpec, rng: &mut R) -> Result<Vec<TransmonParams>> {
        spec.apply(&self.params, rng)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: DeviceModel = serde_json::from_str(s)?;
        Self::new(d.geometry, d.params, d.s_target, d.sigma_meas, d.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    FMax,
    EcH,
    D,
    VPhi0,
    PhiOffset,
}

impl ParamKind {
    pub const ALL: [ParamKind; 5] = [ParamKind::FMax, ParamKind::D, ParamKind::EcH, ParamKind::VPhi0, ParamKind::PhiOffset];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::FMax => "f_max",
            ParamKind::EcH => "ec_h",
            ParamKind::D => "d",
            ParamKind::VPhi0 => "v_phi0",
            ParamKind::PhiOffset => "phi_offset",
        }
    }
}

impl std::str::FromStr for ParamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {s:?}")))
    }
}

/// Belief error for one parameter: absolute MHz for `f_max`, percent of the
/// true value for everything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrorSpec {
    pub target: ParamKind,
    pub std: f64,
}

impl ParamErrorSpec {
    pub fn new(target: ParamKind, std: f64) -> Result<Self> {
        if !(std >= 0.0) {
            return Err(Error::InvalidArgument(format!("perturbation std must be non-negative, got {std}")));
        }
        Ok(Self { target, std })
    }

    pub fn apply<R: Rng + ?Sized>(&self, truth: &[TransmonParams], rng: &mut R) -> Result<Vec<TransmonParams>> {
        let scale = match self.target {
            ParamKind::FMax => self.std * 1e-3,
            _ => self.std / 100.0,
        };
        let noise = Normal::new(0.0, scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(truth
            .iter()
            .map(|p| {
                let e = noise.sample(rng);
                let mut b = *p;
                match self.target {
                    ParamKind::FMax => b.f_max += e,
                    ParamKind::EcH => b.ec_h *= 1.0 + e,
                    ParamKind::D => b.d *= 1.0 + e,
                    ParamKind::VPhi0 => b.v_phi0 *= 1.0 + e,
                    ParamKind::PhiOffset => b.phi_offset *= 1.0 + e,
                }
                b
            })
            .collect())
    }
}

/// Multiply every off-diagonal entry by `1 + N(0, level)`; the diagonal is
/// left untouched.
pub fn perturb_matrix<R: Rng + ?Sized>(s: &CrosstalkMatrix, level: f64, rng: &mut R) -> Result<CrosstalkMatrix> {
    if !(level >= 0.0) {
        return Err(Error::InvalidArgument(format!("perturbation level must be non-negative, got {level}")));
    }
    let noise = Normal::new(0.0, level).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n = s.n();
    let mut m = s.matrix().clone();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[(i, j)] *= 1.0 + noise.sample(rng);
            }
        }
    }
    CrosstalkMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crosstalk::CrosstalkSolver;
    use crate::stats::{mean, std_dev};

    #[test]
    fn shipped_reference_matches_its_seed() {
        let shipped = reference_crosstalk();
        let regenerated = regenerate_reference_crosstalk();
        for (a, b) in shipped.matrix().iter().zip(regenerated.matrix().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn sweet_spot_targeting_hits_f_max() {
        let dev = DeviceModel::reference(0.0, 3).unwrap();
        let cal = dev.true_calibration();
        let v = CrosstalkSolver::new(&dev.s_target).unwrap().voltages_for_fluxes(&cal, &vec![0.0; 16]).unwrap();
        let f = dev.true_frequencies(&v).unwrap();
        for (fi, p) in f.iter().zip(&dev.params) {
            assert!((fi - p.f_max).abs() < 1e-12);
        }
    }

    #[test]
    fn two_qubit_composition_by_hand() {
        let geom = grid_positions(1).unwrap();
        let _ = geom;
        let geom = ArrayGeometry::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![(0, 1)]).unwrap();
        let params = vec![
            TransmonParams { f_max: 4.9, ec_h: 0.2, d: 0.3, v_phi0: 30.0, phi_offset: 0.01 },
            TransmonParams { f_max: 4.8, ec_h: 0.19, d: 0.4, v_phi0: 25.0, phi_offset: -0.02 },
        ];
        let s = CrosstalkMatrix::from_rows(&[vec![1.0, 0.01], vec![-0.02, 1.0]]).unwrap();
        let dev = DeviceModel::new(geom, params.clone(), s, 0.0, 0).unwrap();
        let f = dev.true_frequencies(&[3.0, 6.0]).unwrap();
        let spectrum = |p: &TransmonParams, phi: f64| {
            let c2 = (std::f64::consts::PI * phi).cos().powi(2);
            (p.f_max + p.ec_h) * (p.d * p.d + (1.0 - p.d * p.d) * c2).powf(0.25) - p.ec_h
        };
        assert!((f[0] - spectrum(&params[0], 0.112)).abs() < 1e-12);
        assert!((f[1] - spectrum(&params[1], 0.2176)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_measurement_equals_truth_and_is_deterministic() {
        let dev = DeviceModel::sample(9, 0.0, 4).unwrap();
        let v = vec![1.5; 9];
        let truth = dev.true_frequencies(&v).unwrap();
        assert_eq!(dev.measure_frequencies(&v, &mut seeded(1)).unwrap(), truth);
        assert_eq!(dev.true_frequencies(&v).unwrap(), truth);
        assert!(matches!(dev.true_frequencies(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn readout_noise_statistics() {
        let dev = DeviceModel::sample(4, 0.5, 4).unwrap();
        let v = vec![2.0; 4];
        let truth = dev.true_frequencies(&v).unwrap()[0];
        let mut rng = seeded(77);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| (dev.measure_frequencies(&v, &mut rng).unwrap()[0] - truth) * 1e3)
            .collect();
        let sd = std_dev(&draws);
        assert!((sd - 0.5).abs() < 0.025, "std {sd} MHz");

        let a = dev.measure_frequencies(&v, &mut seeded(1)).unwrap();
        let b = dev.measure_frequencies(&v, &mut seeded(2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn beliefs_perturb_only_the_target() {
        let dev = DeviceModel::sample(16, 0.5, 8).unwrap();
        let before = dev.clone();
        let zero = dev.perturbed_beliefs(&ParamErrorSpec::new(ParamKind::D, 0.0).unwrap(), &mut seeded(1)).unwrap();
        assert_eq!(zero, dev.params);

        let big = DeviceModel::sample(100, 0.5, 8).unwrap();
        let mut rng = seeded(2);
        let mut abs_err = Vec::new();
        for _ in 0..20 {
            let b = big.perturbed_beliefs(&ParamErrorSpec::new(ParamKind::FMax, 0.5).unwrap(), &mut rng).unwrap();
            for (x, t) in b.iter().zip(&big.params) {
                abs_err.push((x.f_max - t.f_max).abs() * 1e3);
                assert_eq!((x.d, x.ec_h, x.v_phi0, x.phi_offset), (t.d, t.ec_h, t.v_phi0, t.phi_offset));
            }
        }
        // Half-normal mean: 0.5 * sqrt(2/pi) ≈ 0.399 MHz.
        assert!((mean(&abs_err) - 0.5 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02);

        let b = big.perturbed_beliefs(&ParamErrorSpec::new(ParamKind::VPhi0, 0.1).unwrap(), &mut rng).unwrap();
        let rel: Vec<f64> = b.iter().zip(&big.params).map(|(x, t)| x.v_phi0 / t.v_phi0 - 1.0).collect();
        assert!((std_dev(&rel) - 1e-3).abs() < 2e-4);
        assert_eq!(dev, before);
        assert!(ParamErrorSpec::new(ParamKind::D, -1.0).is_err());
    }

    #[test]
    fn matrix_perturbation() {
        let s = reference_crosstalk();
        assert_eq!(perturb_matrix(&s, 0.0, &mut seeded(1)).unwrap(), s);
        let mut rng = seeded(4);
        let mut rel = Vec::new();
        for _ in 0..50 {
            let p = perturb_matrix(&s, 0.2, &mut rng).unwrap();
            assert!(p.is_unit_diagonal());
            rel.extend(p.off_diagonal().zip(s.off_diagonal()).map(|(a, b)| a / b - 1.0));
        }
        assert!((std_dev(&rel) - 0.2).abs() < 0.01);
    }

    #[test]
    fn device_json_round_trip() {
        let dev = DeviceModel::sample(9, 0.25, 5).unwrap();
        let back = DeviceModel::from_json(&dev.to_json().unwrap()).unwrap();
        assert_eq!(back, dev);
        assert!(back.geometry.are_neighbors(0, 1));
    }
}
