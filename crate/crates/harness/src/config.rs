//! Scenario configuration files (TOML).

use std::path::{Path, PathBuf};

use fluxcal_core::calibrate::{ScalarTarget, TargetConstraints, TrainOptions};
use fluxcal_core::device::ParamKind;
use fluxcal_core::optim::{Method, OptimizerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    NoiseSweep,
    MSweep,
    Scaling,
    ParamError,
    ScalarError,
    CrosstalkLevel,
    DirectVsLearning,
    OptimizerCompare,
    Recalibration,
    SpectrumFit,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::NoiseSweep,
        Scenario::MSweep,
        Scenario::Scaling,
        Scenario::ParamError,
        Scenario::ScalarError,
        Scenario::CrosstalkLevel,
        Scenario::DirectVsLearning,
        Scenario::OptimizerCompare,
        Scenario::Recalibration,
        Scenario::SpectrumFit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NoiseSweep => "noise-sweep",
            Scenario::MSweep => "m-sweep",
            Scenario::Scaling => "scaling",
            Scenario::ParamError => "param-error",
            Scenario::ScalarError => "scalar-error",
            Scenario::CrosstalkLevel => "crosstalk-level",
            Scenario::DirectVsLearning => "direct-vs-learning",
            Scenario::OptimizerCompare => "optimizer-compare",
            Scenario::Recalibration => "recalibration",
            Scenario::SpectrumFit => "spectrum-fit",
        }
    }

    /// Sweep grid used when the config does not give one.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Scenario::NoiseSweep => vec![0.0, 0.1, 0.5, 1.0],
            Scenario::MSweep => vec![5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 100.0, 150.0, 200.0],
            Scenario::Scaling => vec![16.0, 36.0, 64.0, 100.0],
            Scenario::ParamError => error_grid(ParamKind::FMax),
            Scenario::ScalarError => error_grid(ParamKind::VPhi0),
            Scenario::CrosstalkLevel => vec![2.0, 5.0, 10.0, 15.0],
            Scenario::DirectVsLearning => vec![3.0, 5.0, 8.0, 10.0, 12.0, 15.0, 20.0],
            Scenario::OptimizerCompare => vec![],
            Scenario::Recalibration => vec![5.0, 10.0, 20.0, 30.0],
            Scenario::SpectrumFit => vec![5.0, 7.0, 10.0, 15.0, 20.0, 30.0],
        }
    }

    fn default_m(self) -> usize {
        match self {
            Scenario::DirectVsLearning => 30,
            _ => 100,
        }
    }
}

/// Belief-error levels for one parameter: MHz for `f_max`, percent otherwise.
/// Each grid brackets the level at which calibration is expected to fail.
pub fn error_grid(kind: ParamKind) -> Vec<f64> {
    match kind {
        ParamKind::FMax => vec![0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0],
        ParamKind::D => vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0],
        ParamKind::EcH => vec![0.0, 1.0, 2.5, 5.0, 10.0, 20.0],
        ParamKind::VPhi0 => vec![0.0, 0.01, 0.025, 0.05, 0.1, 0.5, 1.0],
        ParamKind::PhiOffset => vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0],
    }
}

/// Any-pair detuning budget used by `scaling` when the config sets none.
pub const SCALING_DETUNING_BUDGET: f64 = 0.5;

impl std::str::FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| HarnessError::ConfigInvalid(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// 4×4 array with the shipped crosstalk matrix.
    #[default]
    Reference,
    /// Square array with a freshly drawn distance-decay matrix.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    pub n: usize,
    /// MHz.
    pub sigma_meas: f64,
    /// Load a fixed device from JSON instead of drawing one per repetition.
    pub path: Option<PathBuf>,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        Self { kind: DeviceKind::Reference, n: 16, sigma_meas: 0.5, path: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Grid values; their meaning depends on the scenario.
    pub values: Option<Vec<f64>>,
    /// Perturbed parameter for `param-error` and `scalar-error`.
    pub parameter: Option<ParamKind>,
    /// Optimizers raced in `optimizer-compare`.
    pub methods: Option<Vec<Method>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSpec {
    /// Training-set size.
    pub m: Option<usize>,
    /// Validation targets per qubit.
    pub n_targets: usize,
    /// Random training subsets per repetition (`m-sweep`).
    pub subsets: usize,
    /// Training sets are acquired in this many equal batches.
    pub batches: usize,
    pub optimizer: OptimizerConfig,
    pub train: TrainOptions,
    pub constraints: TargetConstraints,
    /// Cap the any-pair detuning at `budget / N` GHz.
    pub global_detuning_budget: Option<f64>,
    /// `scaling`: training-set size per qubit.
    pub m_per_qubit: f64,
    /// `recalibration`: relative off-diagonal error of the warm start.
    pub perturbation: f64,
    /// `recalibration`: cold-start reference point.
    pub cold_m: usize,
    pub cold_sigma: f64,
    /// `scalar-error`: retrain these scalars after learning the matrix.
    pub retrain: Option<ScalarTarget>,
    /// `optimizer-compare`: absolute cost gap that counts as reaching the
    /// optimum.
    pub target_gap: f64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            m: None,
            n_targets: 10,
            subsets: 1,
            batches: 1,
            optimizer: OptimizerConfig::lbfgs(),
            train: TrainOptions::default(),
            constraints: TargetConstraints::default(),
            global_detuning_budget: None,
            m_per_qubit: 2.0,
            perturbation: 0.2,
            cold_m: 30,
            cold_sigma: 0.5,
            retrain: None,
            target_gap: 1e-6,
        }
    }
}

/// Acceptance bound on a summary median, checked by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub metric: String,
    /// Restrict to one sweep point label; all points otherwise.
    #[serde(default)]
    pub point: Option<String>,
    #[serde(default)]
    pub max_median: Option<f64>,
    #[serde(default)]
    pub min_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub device: DeviceSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub thresholds: Vec<Threshold>,
}

fn default_repetitions() -> usize {
    10
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            seed: 0,
            repetitions: default_repetitions(),
            output_dir: None,
            device: DeviceSpec::default(),
            sweep: SweepSpec::default(),
            protocol: ProtocolSpec::default(),
            thresholds: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))
    }

    pub fn grid(&self) -> Vec<f64> {
        if let Some(v) = &self.sweep.values {
            return v.clone();
        }
        match self.scenario {
            Scenario::ParamError | Scenario::ScalarError => error_grid(self.parameter()),
            s => s.default_grid(),
        }
    }

    pub fn m(&self) -> usize {
        self.protocol.m.unwrap_or_else(|| self.scenario.default_m())
    }

    pub fn parameter(&self) -> ParamKind {
        self.sweep.parameter.unwrap_or(match self.scenario {
            Scenario::ScalarError => ParamKind::VPhi0,
            _ => ParamKind::FMax,
        })
    }

    pub fn methods(&self) -> Vec<Method> {
        self.sweep.methods.clone().unwrap_or_else(|| vec![Method::Lbfgs, Method::Sgd, Method::Adam])
    }

    /// SHA-256 of the canonical JSON form. Field order is fixed by the type,
    /// so the hash does not depend on key order in the source file.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        let grid = self.grid();
        let uses_grid = !(self.scenario == Scenario::OptimizerCompare && self.sweep.values.is_none());
        if uses_grid && grid.is_empty() {
            return bad("sweep grid is empty".into());
        }
        if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad(format!("sweep values must be finite and non-negative, got {grid:?}"));
        }
        let integral = |what: &str, min: f64| -> Result<()> {
            if grid.iter().any(|v| v.fract() != 0.0 || *v < min) {
                return Err(HarnessError::ConfigInvalid(format!("{what} must be integers >= {min}, got {grid:?}")));
            }
            Ok(())
        };
        match self.scenario {
            Scenario::MSweep | Scenario::Recalibration => integral("training-set sizes", 1.0)?,
            Scenario::DirectVsLearning => integral("sweep point counts", 3.0)?,
            Scenario::SpectrumFit => integral("spectroscopy point counts", 1.0)?,
            Scenario::Scaling => {
                integral("qubit counts", 1.0)?;
                if let Some(n) = grid.iter().find(|v| (v.sqrt().round() as usize).pow(2) != **v as usize) {
                    return bad(format!("qubit count {n} is not a perfect square"));
                }
            }
            Scenario::OptimizerCompare => {
                if self.sweep.values.is_some() && grid.iter().any(|t| *t <= 0.0) {
                    return bad("tolerances must be positive".into());
                }
                if self.methods().is_empty() {
                    return bad("no optimizers to compare".into());
                }
            }
            Scenario::ParamError | Scenario::ScalarError => {
                let allowed: &[ParamKind] = if self.scenario == Scenario::ParamError {
                    &[ParamKind::FMax, ParamKind::D, ParamKind::EcH]
                } else {
                    &[ParamKind::VPhi0, ParamKind::PhiOffset]
                };
                if !allowed.contains(&self.parameter()) {
                    return bad(format!("{} does not perturb {}", self.scenario.name(), self.parameter().name()));
                }
            }
            Scenario::NoiseSweep | Scenario::CrosstalkLevel => {}
        }
        if self.scenario == Scenario::CrosstalkLevel && grid.iter().any(|v| *v >= 100.0) {
            return bad("crosstalk levels are percentages below 100".into());
        }
        let d = &self.device;
        if d.path.is_none() {
            let root = (d.n as f64).sqrt().round() as usize;
            if d.n == 0 || root * root != d.n {
                return bad(format!("device.n = {} is not a positive perfect square", d.n));
            }
            if d.kind == DeviceKind::Reference && d.n != 16 && self.scenario != Scenario::Scaling {
                return bad("the reference device has 16 qubits".into());
            }
        }
        if !(d.sigma_meas >= 0.0) {
            return bad("device.sigma_meas must be non-negative".into());
        }
        let p = &self.protocol;
        if self.m() == 0 || p.n_targets == 0 || p.subsets == 0 || p.batches == 0 || p.cold_m == 0 {
            return bad("protocol sizes must be at least 1".into());
        }
        if self.m() % p.batches != 0 {
            return bad(format!("m = {} is not divisible into {} batches", self.m(), p.batches));
        }
        if !(p.m_per_qubit > 0.0) || !(p.perturbation >= 0.0) || !(p.cold_sigma >= 0.0) || !(p.target_gap > 0.0) {
            return bad("protocol scalars out of range".into());
        }
        if let Some(b) = p.global_detuning_budget {
            if !(b > 0.0) {
                return bad("global_detuning_budget must be positive".into());
            }
        }
        p.optimizer.validate().map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        p.constraints.validate().map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        for t in &self.thresholds {
            if t.max_median.is_none() && t.min_median.is_none() {
                return bad(format!("threshold on {} has no bound", t.metric));
            }
        }
        Ok(())
    }

    /// Constraints for an `n`-qubit array, with the any-pair detuning capped
    /// by the configured budget.
    pub fn constraints_for(&self, n: usize) -> TargetConstraints {
        let c = self.protocol.constraints;
        let budget = match self.scenario {
            Scenario::Scaling => self.protocol.global_detuning_budget.or(Some(SCALING_DETUNING_BUDGET)),
            _ => self.protocol.global_detuning_budget,
        };
        match budget {
            Some(b) => {
                let g = c.global_detuning.min(b / n as f64);
                TargetConstraints { global_detuning: g, neighbor_detuning: c.neighbor_detuning.max(g), ..c }
            }
            None => c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ScenarioConfig::from_toml("scenario = \"noise-sweep\"").unwrap();
        assert_eq!(cfg.repetitions, 10);
        assert_eq!(cfg.device.n, 16);
        assert_eq!(cfg.grid(), vec![0.0, 0.1, 0.5, 1.0]);
        assert_eq!(cfg.m(), 100);
        assert_eq!(ScenarioConfig::new(Scenario::DirectVsLearning).m(), 30);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        for text in [
            "scenario = \"noise-sweep\"\ncolour = 3",
            "scenario = \"warp-drive\"",
            "scenario = \"noise-sweep\"\nrepetitions = 0",
            "scenario = \"m-sweep\"\n[sweep]\nvalues = []",
            "scenario = \"m-sweep\"\n[sweep]\nvalues = [2.5]",
            "scenario = \"scaling\"\n[sweep]\nvalues = [15]",
            "scenario = \"param-error\"\n[sweep]\nparameter = \"v_phi0\"",
            "scenario = \"noise-sweep\"\n[device]\nn = 15",
            "scenario = \"noise-sweep\"\n[protocol.optimizer]\nmethod = \"sgd\"\nlearning_rate = -1.0\ntolerance = 1e-10\nmax_iters = 10",
            "scenario = \"noise-sweep\"\n[[thresholds]]\nmetric = \"delta_f_mhz\"",
        ] {
            assert!(matches!(ScenarioConfig::from_toml(text), Err(HarnessError::ConfigInvalid(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = ScenarioConfig::from_toml("scenario = \"noise-sweep\"\nseed = 4\nrepetitions = 3\n[device]\nn = 16\nsigma_meas = 0.25").unwrap();
        let b = ScenarioConfig::from_toml("repetitions = 3\nseed = 4\nscenario = \"noise-sweep\"\n[device]\nsigma_meas = 0.25\nn = 16").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ScenarioConfig { seed: 5, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::new(Scenario::ParamError);
        cfg.sweep.parameter = Some(ParamKind::D);
        cfg.thresholds.push(Threshold { metric: "delta_f_mhz".into(), point: None, max_median: Some(1.0), min_median: None });
        let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn detuning_budget_scales_with_n() {
        let mut cfg = ScenarioConfig::new(Scenario::Scaling);
        assert!((cfg.constraints_for(64).global_detuning - 0.5 / 64.0).abs() < 1e-15);
        cfg.protocol.global_detuning_budget = Some(0.8);
        assert_eq!(ScenarioConfig::new(Scenario::NoiseSweep).constraints_for(64).global_detuning, 0.05);
        assert_eq!(cfg.constraints_for(16).global_detuning, 0.05);
        assert!((cfg.constraints_for(64).global_detuning - 0.0125).abs() < 1e-15);
    }
}
