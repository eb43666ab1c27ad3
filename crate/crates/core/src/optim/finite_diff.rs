/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient<F>(objective: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = objective(&probe);
            probe[i] = x[i] - h;
            let down = objective(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_abs_difference(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matches_analytic() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let x = [0.4, -1.3, 2.0];
        let g = finite_difference_gradient(f, &x, 1e-5);
        let exact: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!(max_abs_difference(&g, &exact) < 1e-9);
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let g = finite_difference_gradient(|_| 3.5, &[1.0, 2.0], 1e-6);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn cubic_error_is_second_order() {
        let f = |x: &[f64]| x[0].powi(3);
        let exact = 3.0;
        let e1 = (finite_difference_gradient(f, &[1.0], 1e-2)[0] - exact).abs();
        let e2 = (finite_difference_gradient(f, &[1.0], 5e-3)[0] - exact).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.05, "ratio {}", e1 / e2);
    }
}
