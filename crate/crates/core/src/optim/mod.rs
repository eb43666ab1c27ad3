//! Unconstrained minimization of smooth objectives.
//!
//! Three interchangeable methods share one configuration type and one result
//! type: L-BFGS with a backtracking line search (terminates on objective
//! change), heavy-ball SGD and Adam (both run a fixed number of full-batch
//! steps).

mod adam;
mod finite_diff;
mod lbfgs;
mod sgd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use finite_diff::{finite_difference_gradient, max_abs_difference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lbfgs,
    Sgd,
    Adam,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lbfgs" | "l-bfgs" => Ok(Method::Lbfgs),
            "sgd" => Ok(Method::Sgd),
            "adam" => Ok(Method::Adam),
            other => Err(Error::InvalidArgument(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    /// Heavy-ball coefficient (SGD only).
    #[serde(default)]
    pub momentum: f64,
    /// First and second moment decay rates (Adam only).
    #[serde(default = "default_betas")]
    pub betas: [f64; 2],
    /// Absolute objective-change threshold.
    pub tolerance: f64,
    pub max_iters: usize,
    /// L-BFGS curvature-pair memory.
    #[serde(default = "default_history")]
    pub history: usize,
}

fn default_betas() -> [f64; 2] {
    [0.9, 0.999]
}

fn default_history() -> usize {
    10
}

impl OptimizerConfig {
    pub fn lbfgs() -> Self {
        Self {
            method: Method::Lbfgs,
            learning_rate: 1.0,
            momentum: 0.0,
            betas: default_betas(),
            tolerance: 1e-10,
            max_iters: 500,
            history: 10,
        }
    }

    pub fn sgd() -> Self {
        Self {
            method: Method::Sgd,
            learning_rate: 1.0,
            momentum: 0.7,
            betas: default_betas(),
            tolerance: 1e-10,
            max_iters: 1000,
            history: 10,
        }
    }

    pub fn adam() -> Self {
        Self {
            method: Method::Adam,
            learning_rate: 0.002,
            momentum: 0.0,
            betas: [0.7, 0.999],
            tolerance: 1e-10,
            max_iters: 1000,
            history: 10,
        }
    }

    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Lbfgs => Self::lbfgs(),
            Method::Sgd => Self::sgd(),
            Method::Adam => Self::adam(),
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("optimizer config: {m}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !self.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.history == 0 {
            return bad("history must be at least 1");
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::lbfgs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub x_star: Vec<f64>,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start point followed by one entry per iteration.
    pub cost_trace: Vec<f64>,
}

/// Minimize `objective` from `x0` with the method selected in `cfg`.
pub fn minimize<F, G>(objective: F, gradient: G, x0: &[f64], cfg: &OptimizerConfig) -> Result<MinimizeResult>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("x0 must be finite".into()));
    }
    match cfg.method {
        Method::Lbfgs => lbfgs::run(&objective, &gradient, x0, cfg),
        Method::Sgd => sgd::run(&objective, &gradient, x0, cfg),
        Method::Adam => adam::run(&objective, &gradient, x0, cfg),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn checked_value(v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteObjective { iteration })
    }
}

pub(crate) fn checked_gradient(g: Vec<f64>, iteration: usize) -> Result<Vec<f64>> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFiniteObjective { iteration })
    }
}
