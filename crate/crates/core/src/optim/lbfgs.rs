use std::collections::VecDeque;

use super::{checked_gradient, checked_value, dot, MinimizeResult, OptimizerConfig};
use crate::error::Result;

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g` for the implicit inverse-Hessian `H`.
fn direction(g: &[f64], memory: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; memory.len()];
    for (i, p) in memory.iter().enumerate().rev() {
        alpha[i] = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= alpha[i] * yi);
    }
    if let Some(last) = memory.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, p) in memory.iter().enumerate() {
        let beta = p.rho * dot(&p.y, &q);
        q.iter_mut().zip(&p.s).for_each(|(qi, si)| *qi += (alpha[i] - beta) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

pub(super) fn run(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<MinimizeResult> {
    let mut x = x0.to_vec();
    let mut fx = checked_value(f(&x), 0)?;
    let mut g = checked_gradient(grad(&x), 0)?;
    let mut trace = vec![fx];
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(cfg.history);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        if g.iter().all(|v| *v == 0.0) {
            converged = true;
            break;
        }
        let mut d = direction(&g, &memory);
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            memory.clear();
            d = g.iter().map(|v| -v).collect();
            gd = dot(&g, &d);
        }
        let mut t = if memory.is_empty() {
            let g1: f64 = g.iter().map(|v| v.abs()).sum();
            cfg.learning_rate * (1.0 / g1).min(1.0)
        } else {
            cfg.learning_rate
        };

        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO_C1 * t * gd {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No representable decrease along a descent direction.
            converged = true;
            break;
        };
        let g_new = checked_gradient(grad(&x_new), iter)?;
        iterations = iter;
        trace.push(f_new);

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if memory.len() == cfg.history {
                memory.pop_front();
            }
            memory.push_back(Pair { s, y, rho: 1.0 / sy });
        }

        let change = (fx - f_new).abs();
        x = x_new;
        fx = f_new;
        g = g_new;
        if change < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(MinimizeResult { x_star: x, final_cost: fx, iterations, converged, cost_trace: trace })
}
