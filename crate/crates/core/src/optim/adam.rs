use super::{checked_gradient, checked_value, MinimizeResult, OptimizerConfig};
use crate::error::Result;

const EPS: f64 = 1e-8;

pub(super) fn run(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<MinimizeResult> {
    let [b1, b2] = cfg.betas;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut fx = checked_value(f(&x), 0)?;
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(fx);
    let mut change = f64::INFINITY;

    for iter in 1..=cfg.max_iters {
        let g = checked_gradient(grad(&x), iter)?;
        let c1 = 1.0 - b1.powi(iter as i32);
        let c2 = 1.0 - b2.powi(iter as i32);
        for i in 0..n {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            x[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + EPS);
        }
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
