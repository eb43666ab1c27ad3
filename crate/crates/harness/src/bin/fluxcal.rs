use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluxcal_core::calibrate::{build_training_set, train_matrix_with, validate, Beliefs, CalibrationResult, TargetConstraints, TrainOptions};
use fluxcal_core::crosstalk::CrosstalkMatrix;
use fluxcal_core::device::DeviceModel;
use fluxcal_core::optim::{Method, OptimizerConfig};
use fluxcal_core::rng::task_rng;
use fluxcal_core::transmon::{fit_spectrum, initial_guess, nominal, sweep_voltages, FitMask, SpectroscopyPoint, TransmonParams};
use fluxcal_harness::config::{Scenario, ScenarioConfig};
use fluxcal_harness::error::{HarnessError, Result};
use fluxcal_harness::{report, run_to_dir};

#[derive(Parser)]
#[command(name = "fluxcal", version, about = "Flux-crosstalk calibration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Device model files.
    #[command(subcommand)]
    Device(DeviceCommand),
    /// Fit every qubit's spectrum to obtain believed parameters.
    Characterize {
        #[arg(long)]
        device: PathBuf,
        #[arg(long, default_value_t = 15)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the crosstalk matrix of a device.
    Calibrate {
        #[arg(long)]
        device: PathBuf,
        /// Believed parameters; the true ones when omitted.
        #[arg(long)]
        beliefs: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, value_enum, default_value = "lbfgs")]
        method: MethodArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a calibration against random frequency targets.
    Validate {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        beliefs: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n_targets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a scenario sweep.
    Experiment(ExperimentArgs),
    /// Summarize an output directory; fails when a threshold is violated.
    Report { dir: PathBuf },
}

#[derive(Subcommand)]
enum DeviceCommand {
    /// Draw a device and write it as JSON.
    Generate {
        /// Square qubit count; 16 uses the shipped reference matrix.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Draw a fresh crosstalk matrix even for 16 qubits.
        #[arg(long)]
        sampled: bool,
        /// Readout noise (MHz).
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    scenario: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Lbfgs,
    Sgd,
    Adam,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lbfgs => Method::Lbfgs,
            MethodArg::Sgd => Method::Sgd,
            MethodArg::Adam => Method::Adam,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| HarnessError::Io { path: path.into(), source })
}

fn load_beliefs(dev: &DeviceModel, path: Option<&Path>) -> Result<Vec<TransmonParams>> {
    match path {
        Some(p) => Ok(serde_json::from_str(&read(p)?)?),
        None => Ok(dev.params.clone()),
    }
}

fn characterize(dev: &DeviceModel, n_points: usize, seed: u64) -> Result<Vec<TransmonParams>> {
    let sweep = sweep_voltages(n_points, 0.3, nominal::V_PHI0.0);
    let mut v = vec![0.0; dev.n];
    let mut out = Vec::with_capacity(dev.n);
    for q in 0..dev.n {
        let mut rng = task_rng(seed, &[q as u64]);
        let mut pts = Vec::with_capacity(sweep.len());
        for &vq in &sweep {
            v[q] = vq;
            pts.push(SpectroscopyPoint { voltage: vq, frequency: dev.measure_frequencies(&v, &mut rng)?[q] });
        }
        v[q] = 0.0;
        let fit = fit_spectrum(&pts, FitMask::all_free(), &initial_guess(&pts))?;
        eprintln!("qubit {q:>3}: f_max {:.4} GHz  v_phi0 {:.3} V  rms {:.3} MHz", fit.params.f_max, fit.params.v_phi0, fit.rms_residual * 1e3);
        out.push(fit.params);
    }
    Ok(out)
}

fn experiment(args: ExperimentArgs) -> Result<bool> {
    let scenario: Scenario = args.scenario.parse()?;
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::new(scenario),
    };
    if cfg.scenario != scenario {
        return Err(HarnessError::ConfigInvalid(format!("config is for {}, not {}", cfg.scenario.name(), scenario.name())));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.reps {
        cfg.repetitions = r;
    }
    cfg.validate()?;
    let dir = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", scenario.name(), cfg.seed)));
    let (results, manifest) = run_to_dir(&cfg, &dir)?;
    let failures = results.failures();
    eprintln!("wrote {} ({} files, {} failed tasks)", dir.display(), manifest.files.len(), failures.len());
    let r = report::report(&dir)?;
    print!("{}", r.text);
    Ok(r.violations.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Device(DeviceCommand::Generate { n, sampled, sigma, seed, out }) => {
            let dev = if n == 16 && !sampled { DeviceModel::reference(sigma, seed)? } else { DeviceModel::sample(n, sigma, seed)? };
            write(&out, &dev.to_json()?)?;
            eprintln!("wrote {}-qubit device to {}", dev.n, out.display());
        }
        Command::Characterize { device, points, seed, out } => {
            let dev = DeviceModel::from_json(&read(&device)?)?;
            let params = characterize(&dev, points, seed)?;
            write(&out, &serde_json::to_string_pretty(&params)?)?;
        }
        Command::Calibrate { device, beliefs, m, method, seed, out } => {
            let dev = DeviceModel::from_json(&read(&device)?)?;
            let beliefs = Beliefs::from_params(load_beliefs(&dev, beliefs.as_deref())?);
            let c = TargetConstraints::default();
            let init = CrosstalkMatrix::identity(dev.n);
            let ts = build_training_set(&dev, &beliefs, &init, m, &c, &mut task_rng(seed, &[0]))?;
            let cfg = OptimizerConfig::for_method(method.into());
            let r = train_matrix_with(&ts, &beliefs.cal, &init, &cfg, TrainOptions::default())?.with_seed(seed);
            write(&out, &r.to_json()?)?;
            eprintln!("trained on {} samples ({} rounds redrawn); distance to truth {:.3e}", ts.m(), ts.failed_rounds, r.s_learned.distance(&dev.s_target));
        }
        Command::Validate { device, calibration, beliefs, n_targets, seed } => {
            let dev = DeviceModel::from_json(&read(&device)?)?;
            let beliefs = load_beliefs(&dev, beliefs.as_deref())?;
            let r = CalibrationResult::from_json(&read(&calibration)?)?;
            let rep = validate(&dev, &r, &beliefs, n_targets, &TargetConstraints::default(), &mut task_rng(seed, &[1]))?;
            println!("median |delta_f| {:.4} MHz  p5 {:.4}  p95 {:.4}", rep.median_abs, rep.percentile_5, rep.percentile_95);
        }
        Command::Experiment(args) => return experiment(args),
        Command::Report { dir } => {
            let r = report::report(&dir)?;
            print!("{}", r.text);
            return Ok(r.violations.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
