use super::{checked_gradient, checked_value, MinimizeResult, OptimizerConfig};
use crate::error::Result;

/// Full-batch gradient descent with heavy-ball momentum. The velocity buffer is
/// seeded with the first gradient.
pub(super) fn run(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<MinimizeResult> {
    let mut x = x0.to_vec();
    let mut fx = checked_value(f(&x), 0)?;
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(fx);
    let mut velocity: Option<Vec<f64>> = None;
    let mut change = f64::INFINITY;

    for iter in 1..=cfg.max_iters {
        let g = checked_gradient(grad(&x), iter)?;
        let v = match velocity.as_mut() {
            Some(v) => {
                v.iter_mut().zip(&g).for_each(|(vi, gi)| *vi = cfg.momentum * *vi + gi);
                v
            }
            None => velocity.insert(g),
        };
        x.iter_mut().zip(v.iter()).for_each(|(xi, vi)| *xi -= cfg.learning_rate * vi);
        let f_new = checked_value(f(&x), iter)?;
        change = (fx - f_new).abs();
        fx = f_new;
        trace.push(fx);
    }

    Ok(MinimizeResult {
        x_star: x,
        final_cost: fx,
        iterations: cfg.max_iters,
        converged: change < cfg.tolerance,
        cost_trace: trace,
    })
}
