//! Running a scenario and writing its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use fluxcal_core::device::DeviceModel;
use fluxcal_core::stats::{median, percentile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, Threshold};
use crate::error::{io_err, Result};
use crate::scenarios::{fmt, header, points, repetition_seed, run_task, Point, TaskOutput};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.csv";
pub const REPETITIONS: &str = "repetitions.csv";
pub const FAILURES: &str = "failures.csv";
pub const CONFIG_COPY: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub point: String,
    pub value: f64,
    pub metric: String,
    pub completed: usize,
    pub failed: usize,
    /// Median of the per-repetition values.
    pub median: f64,
    /// Percentiles of the pooled samples.
    pub p5: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub point: String,
    pub value: f64,
    pub repetition: usize,
    pub seed: u64,
    pub metric: String,
    pub metric_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub point: String,
    pub repetition: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub point: String,
    pub repetition: usize,
    pub seed: u64,
    pub file: PathBuf,
    /// Data rows (after the header) belonging to this repetition.
    pub first_row: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub repetitions: usize,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub summary: PathBuf,
    pub repetitions_file: PathBuf,
    pub failures: PathBuf,
    pub files: Vec<FileEntry>,
    pub thresholds: Vec<Threshold>,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: Point,
    pub outputs: Vec<std::result::Result<TaskOutput, String>>,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    pub config: ScenarioConfig,
    pub points: Vec<PointResult>,
}

impl RunResults {
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for pr in &self.points {
            let done: Vec<&TaskOutput> = pr.outputs.iter().filter_map(|o| o.as_ref().ok()).collect();
            let failed = pr.outputs.len() - done.len();
            let mut names: Vec<&'static str> = Vec::new();
            for t in &done {
                for m in &t.metrics {
                    if !names.contains(&m.name) {
                        names.push(m.name);
                    }
                }
            }
            if names.is_empty() {
                out.push(SummaryRow {
                    point: pr.point.label.clone(),
                    value: pr.point.value,
                    metric: "none".into(),
                    completed: 0,
                    failed,
                    median: f64::NAN,
                    p5: f64::NAN,
                    p95: f64::NAN,
                });
            }
            for name in names {
                let metrics: Vec<_> = done.iter().flat_map(|t| t.metrics.iter().filter(|m| m.name == name)).collect();
                let values: Vec<f64> = metrics.iter().map(|m| m.value).collect();
                let pooled: Vec<f64> = metrics.iter().flat_map(|m| m.samples.iter().copied()).collect();
                out.push(SummaryRow {
                    point: pr.point.label.clone(),
                    value: pr.point.value,
                    metric: name.into(),
                    completed: values.len(),
                    failed,
                    median: median(&values),
                    p5: percentile(&pooled, 5.0),
                    p95: percentile(&pooled, 95.0),
                });
            }
        }
        out
    }

    /// Median of `metric` at the point labelled `point`.
    pub fn median_of(&self, point: &str, metric: &str) -> Option<f64> {
        self.summary().into_iter().find(|r| r.point == point && r.metric == metric).map(|r| r.median)
    }

    pub fn repetitions(&self) -> Vec<RepetitionRow> {
        let mut out = Vec::new();
        for pr in &self.points {
            for (rep, o) in pr.outputs.iter().enumerate() {
                let Ok(t) = o else { continue };
                for m in &t.metrics {
                    out.push(RepetitionRow {
                        point: pr.point.label.clone(),
                        value: pr.point.value,
                        repetition: rep,
                        seed: repetition_seed(self.config.seed, rep),
                        metric: m.name.into(),
                        metric_value: m.value,
                    });
                }
            }
        }
        out
    }

    pub fn failures(&self) -> Vec<Failure> {
        let mut out = Vec::new();
        for pr in &self.points {
            for (rep, o) in pr.outputs.iter().enumerate() {
                if let Err(e) = o {
                    out.push(Failure {
                        point: pr.point.label.clone(),
                        repetition: rep,
                        seed: repetition_seed(self.config.seed, rep),
                        error: e.clone(),
                    });
                }
            }
        }
        out
    }
}

/// Run every (point, repetition) task in parallel. A failing task is
/// recorded and the run continues.
pub fn run(cfg: &ScenarioConfig) -> Result<RunResults> {
    cfg.validate()?;
    let fixed = match &cfg.device.path {
        Some(p) => Some(DeviceModel::from_json(&fs::read_to_string(p).map_err(io_err(p))?)?),
        None => None,
    };
    let pts = points(cfg);
    let tasks: Vec<(usize, usize)> = (0..pts.len()).flat_map(|p| (0..cfg.repetitions).map(move |r| (p, r))).collect();
    let results: Vec<_> = tasks
        .par_iter()
        .map(|&(p, r)| run_task(cfg, fixed.as_ref(), p, &pts[p], r).map_err(|e| e.to_string()))
        .collect();
    let mut it = results.into_iter();
    let points = pts
        .into_iter()
        .map(|point| PointResult { point, outputs: it.by_ref().take(cfg.repetitions).collect() })
        .collect();
    Ok(RunResults { config: cfg.clone(), points })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path).map_err(io_err(path))?))
}

/// Write the output directory and return the manifest.
pub fn write(results: &RunResults, dir: &Path, started_at: String) -> Result<Manifest> {
    let cfg = &results.config;
    fs::create_dir_all(dir.join("points")).map_err(io_err(dir))?;
    let mut files = Vec::new();
    for (i, pr) in results.points.iter().enumerate() {
        let rel = PathBuf::from("points").join(format!("{i:02}_{}.csv", pr.point.label));
        let mut w = csv_writer(&dir.join(&rel))?;
        w.write_record(header(cfg.scenario))?;
        let mut row = 0;
        for (rep, o) in pr.outputs.iter().enumerate() {
            let rows = o.as_ref().map_or(&[][..], |t| &t.rows[..]);
            for r in rows {
                w.write_record(r)?;
            }
            files.push(FileEntry {
                point: pr.point.label.clone(),
                repetition: rep,
                seed: repetition_seed(cfg.seed, rep),
                file: rel.clone(),
                first_row: row,
                rows: rows.len(),
            });
            row += rows.len();
        }
        w.flush().map_err(io_err(&rel))?;
    }

    let mut w = csv_writer(&dir.join(SUMMARY))?;
    w.write_record(["point", "value", "metric", "completed", "failed", "median", "p5", "p95"])?;
    for r in results.summary() {
        w.write_record([r.point, fmt(r.value), r.metric, r.completed.to_string(), r.failed.to_string(), fmt(r.median), fmt(r.p5), fmt(r.p95)])?;
    }
    w.flush().map_err(io_err(dir.join(SUMMARY)))?;

    let mut w = csv_writer(&dir.join(REPETITIONS))?;
    w.write_record(["point", "value", "repetition", "seed", "metric", "metric_value"])?;
    for r in results.repetitions() {
        w.write_record([r.point, fmt(r.value), r.repetition.to_string(), r.seed.to_string(), r.metric, fmt(r.metric_value)])?;
    }
    w.flush().map_err(io_err(dir.join(REPETITIONS)))?;

    let mut w = csv_writer(&dir.join(FAILURES))?;
    w.write_record(["point", "repetition", "seed", "error"])?;
    for f in results.failures() {
        w.write_record([f.point, f.repetition.to_string(), f.seed.to_string(), f.error])?;
    }
    w.flush().map_err(io_err(dir.join(FAILURES)))?;

    let toml = cfg.to_toml()?;
    fs::write(dir.join(CONFIG_COPY), toml).map_err(io_err(dir.join(CONFIG_COPY)))?;

    let manifest = Manifest {
        scenario: cfg.scenario.name().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        repetitions: cfg.repetitions,
        version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: now(),
        summary: SUMMARY.into(),
        repetitions_file: REPETITIONS.into(),
        failures: FAILURES.into(),
        files,
        thresholds: cfg.thresholds.clone(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Run a scenario and write its outputs to `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<(RunResults, Manifest)> {
    let started = now();
    let results = run(cfg)?;
    let manifest = write(&results, dir, started)?;
    Ok((results, manifest))
}
