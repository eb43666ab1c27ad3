//! Summaries of a finished output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::Threshold;
use crate::error::{io_err, HarnessError, Result};
use crate::output::{Manifest, MANIFEST};

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub violations: Vec<String>,
}

#[derive(Debug, serde::Deserialize)]
struct Row {
    point: String,
    #[allow(dead_code)]
    value: f64,
    metric: String,
    completed: usize,
    failed: usize,
    median: f64,
    p5: f64,
    p95: f64,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(HarnessError::MissingManifest(dir.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?)
}

fn check(t: &Threshold, r: &Row) -> Option<String> {
    if t.metric != r.metric || t.point.as_ref().is_some_and(|p| *p != r.point) {
        return None;
    }
    let v = r.median;
    if let Some(max) = t.max_median {
        if !(v <= max) {
            return Some(format!("{} {}: median {v} > {max}", r.point, r.metric));
        }
    }
    if let Some(min) = t.min_median {
        if !(v >= min) {
            return Some(format!("{} {}: median {v} < {min}", r.point, r.metric));
        }
    }
    None
}

/// Build the report for `dir` and write it to `dir/report.txt`.
pub fn report(dir: &Path) -> Result<Report> {
    let manifest = read_manifest(dir)?;
    let mut rdr = csv::Reader::from_path(dir.join(&manifest.summary))?;
    let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;

    let mut text = String::new();
    let _ = writeln!(text, "scenario {}  seed {}  repetitions {}", manifest.scenario, manifest.seed, manifest.repetitions);
    let _ = writeln!(text, "config {}", manifest.config_hash);
    let _ = writeln!(text, "{:<24} {:<24} {:>12} {:>12} {:>12} {:>5} {:>5}", "point", "metric", "median", "p5", "p95", "ok", "fail");
    let mut violations = Vec::new();
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<24} {:<24} {:>12.5} {:>12.5} {:>12.5} {:>5} {:>5}",
            r.point, r.metric, r.median, r.p5, r.p95, r.completed, r.failed
        );
        violations.extend(manifest.thresholds.iter().filter_map(|t| check(t, r)));
    }
    for v in &violations {
        let _ = writeln!(text, "THRESHOLD VIOLATED: {v}");
    }
    if !manifest.thresholds.is_empty() && violations.is_empty() {
        let _ = writeln!(text, "thresholds: {} checked, all met", manifest.thresholds.len());
    }
    let path = dir.join("report.txt");
    fs::write(&path, &text).map_err(io_err(&path))?;
    Ok(Report { text, violations })
}
