use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crosstalk::ArrayGeometry;
use crate::error::{check_len, Error, Result};
use crate::transmon::{min_frequency, TransmonParams};

pub const MAX_ATTEMPTS_PER_QUBIT: usize = 1000;
pub const MAX_RESTARTS: usize = 100;

/// Frequency-placement rules for target sampling (GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConstraints {
    pub min_below_sweet: f64,
    pub max_below_sweet: f64,
    pub neighbor_detuning: f64,
    pub global_detuning: f64,
}

impl Default for TargetConstraints {
    fn default() -> Self {
        Self { min_below_sweet: 0.1, max_below_sweet: 1.0, neighbor_detuning: 0.2, global_detuning: 0.05 }
    }
}

impl TargetConstraints {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_below_sweet > 0.0
            && self.min_below_sweet < self.max_below_sweet
            && self.global_detuning > 0.0
            && self.neighbor_detuning >= self.global_detuning
            && self.max_below_sweet.is_finite()
            && self.neighbor_detuning.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid target constraints {self:?}")))
        }
    }

    pub fn with_global_detuning(mut self, g: f64) -> Self {
        self.global_detuning = g;
        self
    }

    /// Sampling window `[lo, hi]` for one qubit. The lower edge never drops
    /// below the bottom of the spectrum.
    pub fn window(&self, p: &TransmonParams) -> (f64, f64) {
        let lo = (p.f_max - self.max_below_sweet).max(min_frequency(p));
        (lo, p.f_max - self.min_below_sweet)
    }
}

/// Exhaustive pairwise audit of a target vector.
pub fn satisfies_constraints(targets: &[f64], beliefs: &[TransmonParams], geom: &ArrayGeometry, c: &TargetConstraints) -> bool {
    let n = targets.len();
    if beliefs.len() != n || geom.n() != n {
        return false;
    }
    for i in 0..n {
        let (lo, hi) = c.window(&beliefs[i]);
        if !(targets[i] >= lo && targets[i] <= hi) {
            return false;
        }
        for j in i + 1..n {
            let gap = (targets[i] - targets[j]).abs();
            if gap < c.global_detuning || (geom.are_neighbors(i, j) && gap < c.neighbor_detuning) {
                return false;
            }
        }
    }
    true
}

/// Random target frequencies placed one qubit at a time in a fresh random
/// order, by rejection sampling against the already-placed qubits.
pub fn sample_target_frequencies<R: Rng + ?Sized>(
    beliefs: &[TransmonParams],
    geom: &ArrayGeometry,
    c: &TargetConstraints,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = geom.n();
    check_len(n, beliefs.len())?;
    c.validate()?;
    let windows: Vec<(f64, f64)> = beliefs.iter().map(|p| c.window(p)).collect();
    if let Some(i) = windows.iter().position(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidArgument(format!("empty target window for qubit {i}")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut targets = vec![f64::NAN; n];
    let mut placed = Vec::with_capacity(n);
    'restart: for _ in 0..MAX_RESTARTS {
        order.shuffle(rng);
        targets.iter_mut().for_each(|t| *t = f64::NAN);
        placed.clear();
        for &q in &order {
            let (lo, hi) = windows[q];
            let mut ok = false;
            for _ in 0..MAX_ATTEMPTS_PER_QUBIT {
                let f = rng.random_range(lo..hi);
                let clash = placed.iter().any(|&j: &usize| {
                    let gap = (f - targets[j]).abs();
                    gap < c.global_detuning || (gap < c.neighbor_detuning && geom.are_neighbors(q, j))
                });
                if !clash {
                    targets[q] = f;
                    placed.push(q);
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue 'restart;
            }
        }
        return Ok(targets);
    }
    Err(Error::ConstraintsUnsatisfiable { restarts: MAX_RESTARTS })
}
