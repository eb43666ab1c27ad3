//! Per-scenario work units.
//!
//! A task is one (sweep point, repetition) pair. Every random stream a task
//! uses is derived from the repetition seed and a fixed stream id, so all
//! sweep points of one repetition share the same device, belief draws and
//! target sequences; only point-specific randomness adds the point index.

use fluxcal_core::calibrate::{
    batched_train, build_training_set, closed_form_row, direct_measure_matrix, retrain_scalars, row_cost, train_matrix_with,
    validate, validate_matrix, Beliefs, CalibrationResult, TargetConstraints, TrainingSet, ValidationReport,
};
use fluxcal_core::crosstalk::{uniform_level_matrix, CrosstalkMatrix};
use fluxcal_core::device::{perturb_matrix, DeviceModel, ParamErrorSpec};
use fluxcal_core::optim::{minimize, Method, OptimizerConfig};
use fluxcal_core::rng::{derive_seed, seeded};
use fluxcal_core::stats::median;
use fluxcal_core::transmon::{fit_spectrum, initial_guess, nominal, sweep_voltages, FitMask, SpectroscopyPoint};
use fluxcal_core::{Error, Result};
use rand::seq::index::sample;

use crate::config::{DeviceKind, Scenario, ScenarioConfig};

const STREAM_DEVICE: u64 = 0;
const STREAM_BELIEFS: u64 = 1;
const STREAM_TRAINING: u64 = 2;
const STREAM_VALIDATION: u64 = 3;
const STREAM_MATRIX: u64 = 4;
const STREAM_SUBSET: u64 = 5;
const STREAM_MEASURE: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub label: String,
    pub value: f64,
    kind: PointKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PointKind {
    Grid,
    Learning,
    Direct,
    Method(Method),
    Tolerance,
    Warm,
    Cold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    /// Per-repetition value.
    pub value: f64,
    /// Pooled samples for the percentile band.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskOutput {
    pub rows: Vec<Vec<String>>,
    pub metrics: Vec<Metric>,
}

pub fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn repetition_seed(run_seed: u64, repetition: usize) -> u64 {
    derive_seed(run_seed, &[repetition as u64])
}

fn stream(rep_seed: u64, id: u64) -> fluxcal_core::rng::SimRng {
    seeded(derive_seed(rep_seed, &[id]))
}

pub fn points(cfg: &ScenarioConfig) -> Vec<Point> {
    let grid = cfg.grid();
    let short = |v: f64| fmt(v).replace('.', "p");
    let on_grid = |prefix: &str| -> Vec<Point> {
        grid.iter().map(|&v| Point { label: format!("{prefix}{}", short(v)), value: v, kind: PointKind::Grid }).collect()
    };
    match cfg.scenario {
        Scenario::NoiseSweep => on_grid("sigma_"),
        Scenario::MSweep => on_grid("m_"),
        Scenario::Scaling => on_grid("n_"),
        Scenario::ParamError | Scenario::ScalarError => on_grid(&format!("{}_", cfg.parameter().name())),
        Scenario::CrosstalkLevel => on_grid("level_"),
        Scenario::SpectrumFit => on_grid("points_"),
        Scenario::DirectVsLearning => {
            let m = cfg.m() as f64;
            std::iter::once(Point { label: format!("learning_m{}", short(m)), value: m, kind: PointKind::Learning })
                .chain(grid.iter().map(|&v| Point { label: format!("direct_n{}", short(v)), value: v, kind: PointKind::Direct }))
                .collect()
        }
        Scenario::OptimizerCompare => match &cfg.sweep.values {
            Some(tols) => tols
                .iter()
                .map(|&t| Point { label: format!("tol_{t:e}"), value: t, kind: PointKind::Tolerance })
                .collect(),
            None => cfg
                .methods()
                .into_iter()
                .enumerate()
                .map(|(i, m)| Point { label: format!("{m:?}").to_lowercase(), value: i as f64, kind: PointKind::Method(m) })
                .collect(),
        },
        Scenario::Recalibration => {
            let cold = cfg.protocol.cold_m as f64;
            grid.iter()
                .map(|&v| Point { label: format!("warm_m{}", short(v)), value: v, kind: PointKind::Warm })
                .chain(std::iter::once(Point { label: format!("cold_m{}", short(cold)), value: cold, kind: PointKind::Cold }))
                .collect()
        }
    }
}

pub fn header(scenario: Scenario) -> Vec<&'static str> {
    match scenario {
        Scenario::OptimizerCompare => vec!["seed", "repetition", "point", "row", "iteration", "cost", "gap", "normalized_gap"],
        Scenario::SpectrumFit => vec![
            "seed",
            "repetition",
            "point",
            "qubit",
            "fit_ok",
            "f_max_error_mhz",
            "ec_h_error_mhz",
            "d_error",
            "v_phi0_error_pct",
            "phi_offset_error_mphi0",
            "rms_residual_mhz",
        ],
        _ => vec!["seed", "repetition", "point", "subset", "round", "qubit", "target_frequency", "delta_f"],
    }
}

/// Device for one repetition. A device loaded from file is shared by all
/// repetitions.
fn make_device(cfg: &ScenarioConfig, fixed: Option<&DeviceModel>, n: usize, sigma: f64, rep_seed: u64) -> Result<DeviceModel> {
    if let Some(d) = fixed {
        return Ok(d.clone().with_sigma(sigma));
    }
    let seed = derive_seed(rep_seed, &[STREAM_DEVICE]);
    if cfg.device.kind == DeviceKind::Reference && n == 16 {
        DeviceModel::reference(sigma, seed)
    } else {
        DeviceModel::sample(n, sigma, seed)
    }
}

/// Acquire and train, batched when configured.
fn learn(
    cfg: &ScenarioConfig,
    dev: &DeviceModel,
    beliefs: &Beliefs,
    init: &CrosstalkMatrix,
    m: usize,
    c: &TargetConstraints,
    rng: &mut fluxcal_core::rng::SimRng,
) -> Result<(CalibrationResult, TrainingSet)> {
    let p = &cfg.protocol;
    if p.batches > 1 && m % p.batches == 0 {
        let b = batched_train(dev, beliefs, init, m / p.batches, p.batches, c, &p.optimizer, p.train, rng)?;
        Ok((b.result, b.training))
    } else {
        let ts = build_training_set(dev, beliefs, init, m, c, rng)?;
        let r = train_matrix_with(&ts, &beliefs.cal, init, &p.optimizer, p.train)?;
        Ok((r, ts))
    }
}

fn delta_f_rows(out: &mut TaskOutput, seed: u64, rep: usize, label: &str, subset: usize, report: &ValidationReport) {
    out.rows.extend(report.entries.iter().map(|e| {
        vec![
            seed.to_string(),
            rep.to_string(),
            label.to_string(),
            subset.to_string(),
            e.round.to_string(),
            e.qubit.to_string(),
            fmt(e.target_frequency),
            fmt(e.delta_f),
        ]
    }));
}

fn delta_f_metric(abs: Vec<f64>) -> Metric {
    Metric { name: "delta_f_mhz", value: median(&abs), samples: abs }
}

fn scalar_metric(name: &'static str, value: f64) -> Metric {
    Metric { name, value, samples: vec![value] }
}

/// Run one (point, repetition) task.
pub fn run_task(
    cfg: &ScenarioConfig,
    fixed_device: Option<&DeviceModel>,
    point_index: usize,
    point: &Point,
    rep: usize,
) -> Result<TaskOutput> {
    let seed = repetition_seed(cfg.seed, rep);
    let p = &cfg.protocol;
    let sigma = cfg.device.sigma_meas;
    let n = fixed_device.map_or(cfg.device.n, |d| d.n);
    let mut out = TaskOutput::default();
    let mut validation_rng = stream(seed, STREAM_VALIDATION);
    let mut training_rng = stream(seed, STREAM_TRAINING);

    match cfg.scenario {
        Scenario::NoiseSweep | Scenario::CrosstalkLevel | Scenario::Scaling => {
            let (n, m, sigma) = match cfg.scenario {
                Scenario::NoiseSweep => (n, cfg.m(), point.value),
                Scenario::Scaling => {
                    let n = point.value as usize;
                    (n, (p.m_per_qubit * n as f64).round().max(1.0) as usize, sigma)
                }
                _ => (n, cfg.m(), sigma),
            };
            let mut dev = make_device(cfg, if cfg.scenario == Scenario::Scaling { None } else { fixed_device }, n, sigma, seed)?;
            if cfg.scenario == Scenario::CrosstalkLevel {
                let s = uniform_level_matrix(n, point.value / 100.0, &mut stream(seed, STREAM_MATRIX));
                dev = dev.with_s_target(s)?;
            }
            let c = cfg.constraints_for(n);
            let beliefs = Beliefs::from_params(dev.params.clone());
            let (r, ts) = learn(cfg, &dev, &beliefs, &CrosstalkMatrix::identity(n), m, &c, &mut training_rng)?;
            let report = validate(&dev, &r, &beliefs.params, p.n_targets, &c, &mut validation_rng)?;
            delta_f_rows(&mut out, seed, rep, &point.label, 0, &report);
            out.metrics.push(delta_f_metric(report.abs_errors()));
            out.metrics.push(scalar_metric("failed_rounds", ts.failed_rounds as f64));
        }
        Scenario::MSweep => {
            let dev = make_device(cfg, fixed_device, n, sigma, seed)?;
            let c = cfg.constraints_for(n);
            let beliefs = Beliefs::from_params(dev.params.clone());
            let pool_size = cfg.grid().iter().fold(0.0f64, |a, b| a.max(*b)) as usize;
            let init = CrosstalkMatrix::identity(n);
            let pool = build_training_set(&dev, &beliefs, &init, pool_size, &c, &mut training_rng)?;
            let m = point.value as usize;
            let mut abs = Vec::new();
            for subset in 0..p.subsets {
                let mut rng = seeded(derive_seed(seed, &[STREAM_SUBSET, point_index as u64, subset as u64]));
                let idx = sample(&mut rng, pool_size, m).into_vec();
                let ts = pool.subset(&idx)?;
                let r = train_matrix_with(&ts, &beliefs.cal, &init, &p.optimizer, p.train)?;
                let mut vrng = seeded(derive_seed(seed, &[STREAM_VALIDATION, subset as u64]));
                let report = validate(&dev, &r, &beliefs.params, p.n_targets, &c, &mut vrng)?;
                delta_f_rows(&mut out, seed, rep, &point.label, subset, &report);
                abs.extend(report.abs_errors());
            }
            out.metrics.push(delta_f_metric(abs));
        }
        Scenario::ParamError | Scenario::ScalarError => {
            let dev = make_device(cfg, fixed_device, n, sigma, seed)?;
            let c = cfg.constraints_for(n);
            let spec = ParamErrorSpec::new(cfg.parameter(), point.value)?;
            let believed = dev.perturbed_beliefs(&spec, &mut stream(seed, STREAM_BELIEFS))?;
            let beliefs = Beliefs::from_params(believed);
            let init = CrosstalkMatrix::identity(n);
            let (mut r, ts) = learn(cfg, &dev, &beliefs, &init, cfg.m(), &c, &mut training_rng)?;
            if let Some(which) = p.retrain {
                r.cal = retrain_scalars(&ts, &r.s_learned, &r.cal, which, &p.optimizer)?;
            }
            let report = validate(&dev, &r, &beliefs.params, p.n_targets, &c, &mut validation_rng)?;
            delta_f_rows(&mut out, seed, rep, &point.label, 0, &report);
            out.metrics.push(delta_f_metric(report.abs_errors()));
            out.metrics.push(scalar_metric("s_distance", r.s_learned.distance(&dev.s_target)));
        }
        Scenario::DirectVsLearning => {
            let dev = make_device(cfg, fixed_device, n, sigma, seed)?;
            let c = cfg.constraints_for(n);
            let beliefs = Beliefs::from_params(dev.params.clone());
            let (s, cal, measurements, flagged) = if point.kind == PointKind::Learning {
                let m = point.value as usize;
                let (r, _) = learn(cfg, &dev, &beliefs, &CrosstalkMatrix::identity(n), m, &c, &mut training_rng)?;
                (r.s_learned, r.cal, m * n, 0)
            } else {
                let d = direct_measure_matrix(&dev, &beliefs.params, point.value as usize, &mut stream(seed, STREAM_MEASURE))?;
                (d.s, beliefs.cal.clone(), d.measurements, d.flagged.len())
            };
            let report = validate_matrix(&dev, &s, &cal, &beliefs.params, p.n_targets, &c, &mut validation_rng)?;
            delta_f_rows(&mut out, seed, rep, &point.label, 0, &report);
            out.metrics.push(delta_f_metric(report.abs_errors()));
            out.metrics.push(scalar_metric("measurements", measurements as f64));
            out.metrics.push(scalar_metric("flagged", flagged as f64));
        }
        Scenario::OptimizerCompare => {
            let dev = make_device(cfg, fixed_device, n, sigma, seed)?;
            let c = cfg.constraints_for(n);
            let beliefs = Beliefs::from_params(dev.params.clone());
            let ts = build_training_set(&dev, &beliefs, &CrosstalkMatrix::identity(n), cfg.m(), &c, &mut training_rng)?;
            let k = rep % n;
            let (v, off) = (beliefs.cal.v_phi0[k], beliefs.cal.phi_offset[k]);
            let exact = closed_form_row(&ts, k, &beliefs.cal)?;
            let c_star = row_cost(&exact, &ts, k, v, off).0;
            let mut x0 = vec![0.0; n];
            x0[k] = 1.0;
            let c0 = row_cost(&x0, &ts, k, v, off).0;
            let opt = match point.kind {
                PointKind::Method(m) => OptimizerConfig::for_method(m),
                _ => OptimizerConfig::lbfgs().with_tolerance(point.value),
            };
            let res = minimize(|x| row_cost(x, &ts, k, v, off).0, |x| row_cost(x, &ts, k, v, off).1, &x0, &opt)?;
            let span = c0 - c_star;
            for (it, cost) in res.cost_trace.iter().enumerate() {
                out.rows.push(vec![
                    seed.to_string(),
                    rep.to_string(),
                    point.label.clone(),
                    k.to_string(),
                    it.to_string(),
                    fmt(*cost),
                    fmt(cost - c_star),
                    fmt((cost - c_star) / span),
                ]);
            }
            let reached = res
                .cost_trace
                .iter()
                .position(|cost| cost - c_star <= p.target_gap)
                .map_or(f64::INFINITY, |i| i as f64);
            out.metrics.push(scalar_metric("iterations_to_target", reached));
            out.metrics.push(scalar_metric("iterations", res.iterations as f64));
            out.metrics.push(scalar_metric("final_gap", res.final_cost - c_star));
            out.metrics.push(scalar_metric("final_normalized_gap", (res.final_cost - c_star) / span));
        }
        Scenario::Recalibration => {
            let c = cfg.constraints_for(n);
            let (dev, init, m) = if point.kind == PointKind::Cold {
                let dev = make_device(cfg, fixed_device, n, p.cold_sigma, seed)?;
                (dev, CrosstalkMatrix::identity(n), p.cold_m)
            } else {
                let dev = make_device(cfg, fixed_device, n, sigma, seed)?;
                let init = perturb_matrix(&dev.s_target, p.perturbation, &mut stream(seed, STREAM_MATRIX))?;
                (dev, init, point.value as usize)
            };
            let beliefs = Beliefs::from_params(dev.params.clone());
            let (r, _) = learn(cfg, &dev, &beliefs, &init, m, &c, &mut training_rng)?;
            let report = validate(&dev, &r, &beliefs.params, p.n_targets, &c, &mut validation_rng)?;
            delta_f_rows(&mut out, seed, rep, &point.label, 0, &report);
            out.metrics.push(delta_f_metric(report.abs_errors()));
            out.metrics.push(scalar_metric("s_distance", r.s_learned.distance(&dev.s_target)));
        }
        Scenario::SpectrumFit => {
            let dev = make_device(cfg, fixed_device, n, sigma, seed)?;
            let mut rng = stream(seed, STREAM_MEASURE);
            let sweep = sweep_voltages(point.value as usize, 0.3, nominal::V_PHI0.0);
            let (mut f_err, mut v_err, mut o_err) = (Vec::new(), Vec::new(), Vec::new());
            let mut v = vec![0.0; n];
            for (q, truth) in dev.params.iter().enumerate() {
                let mut pts = Vec::with_capacity(sweep.len());
                for &vq in &sweep {
                    v[q] = vq;
                    pts.push(SpectroscopyPoint { voltage: vq, frequency: dev.measure_frequencies(&v, &mut rng)?[q] });
                }
                v[q] = 0.0;
                let row_head = vec![seed.to_string(), rep.to_string(), point.label.clone(), q.to_string()];
                match fit_spectrum(&pts, FitMask::all_free(), &initial_guess(&pts)) {
                    Ok(fit) => {
                        let e = [
                            (fit.params.f_max - truth.f_max) * 1e3,
                            (fit.params.ec_h - truth.ec_h) * 1e3,
                            fit.params.d - truth.d,
                            (fit.params.v_phi0 / truth.v_phi0 - 1.0) * 100.0,
                            (fit.params.phi_offset - truth.phi_offset) * 1e3,
                            fit.rms_residual * 1e3,
                        ];
                        f_err.push(e[0].abs());
                        v_err.push(e[3].abs());
                        o_err.push(e[4].abs());
                        out.rows.push(row_head.into_iter().chain(std::iter::once("1".into())).chain(e.iter().map(|x| fmt(*x))).collect());
                    }
                    Err(Error::FitDiverged { .. } | Error::InsufficientData { .. }) => {
                        f_err.push(f64::INFINITY);
                        v_err.push(f64::INFINITY);
                        o_err.push(f64::INFINITY);
                        out.rows.push(row_head.into_iter().chain(std::iter::once("0".into())).chain((0..6).map(|_| "NaN".into())).collect());
                    }
                    Err(e) => return Err(e),
                }
            }
            out.metrics.push(Metric { name: "f_max_error_mhz", value: median(&f_err), samples: f_err });
            out.metrics.push(Metric { name: "v_phi0_error_pct", value: median(&v_err), samples: v_err });
            out.metrics.push(Metric { name: "phi_offset_error_mphi0", value: median(&o_err), samples: o_err });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_labels() {
        let cfg = ScenarioConfig::new(Scenario::NoiseSweep);
        let labels: Vec<String> = points(&cfg).into_iter().map(|p| p.label).collect();
        assert_eq!(labels, ["sigma_0", "sigma_0p1", "sigma_0p5", "sigma_1"]);

        let cfg = ScenarioConfig::new(Scenario::DirectVsLearning);
        let pts = points(&cfg);
        assert_eq!(pts[0].label, "learning_m30");
        assert_eq!(pts.len(), 8);

        let cfg = ScenarioConfig::new(Scenario::OptimizerCompare);
        let labels: Vec<String> = points(&cfg).into_iter().map(|p| p.label).collect();
        assert_eq!(labels, ["lbfgs", "sgd", "adam"]);

        let mut cfg = ScenarioConfig::new(Scenario::Recalibration);
        cfg.sweep.values = Some(vec![20.0]);
        let labels: Vec<String> = points(&cfg).into_iter().map(|p| p.label).collect();
        assert_eq!(labels, ["warm_m20", "cold_m30"]);
    }

    #[test]
    fn tasks_are_deterministic() {
        let mut cfg = ScenarioConfig::new(Scenario::NoiseSweep);
        cfg.protocol.m = Some(20);
        cfg.protocol.n_targets = 2;
        let pt = &points(&cfg)[2];
        let a = run_task(&cfg, None, 2, pt, 1).unwrap();
        let b = run_task(&cfg, None, 2, pt, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 32);
        assert_eq!(a.rows[0].len(), header(Scenario::NoiseSweep).len());
    }
}
