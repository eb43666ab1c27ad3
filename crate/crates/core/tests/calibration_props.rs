use fluxcal_core::calibrate::{
    build_training_set, closed_form_row, row_cost, sample_target_frequencies, satisfies_constraints, scalar_cost, train_matrix_with,
    validate, Beliefs, TargetConstraints, TrainOptions,
};
use fluxcal_core::crosstalk::{grid_positions, CrosstalkMatrix};
use fluxcal_core::device::DeviceModel;
use fluxcal_core::optim::{finite_difference_gradient, max_abs_difference, minimize, OptimizerConfig};
use fluxcal_core::rng::seeded;
use fluxcal_core::stats::median;
use fluxcal_core::transmon::{noiseless_points, sample_device_params, spectrum_cost, sweep_voltages};
use fluxcal_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn setup(sigma: f64, m: usize, seed: u64) -> (DeviceModel, Beliefs, fluxcal_core::calibrate::TrainingSet) {
    let dev = DeviceModel::reference(sigma, seed).unwrap();
    let beliefs = Beliefs::from_params(dev.params.clone());
    let ts = build_training_set(&dev, &beliefs, &CrosstalkMatrix::identity(16), m, &TargetConstraints::default(), &mut seeded(seed ^ 0xabc))
        .unwrap();
    (dev, beliefs, ts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_targets_pass_the_pairwise_audit(seed in any::<u64>(), side in 1usize..5) {
        let n = side * side;
        let geom = grid_positions(n).unwrap();
        let mut rng = seeded(seed);
        let beliefs = sample_device_params(&mut rng, n);
        let c = TargetConstraints::default();
        match sample_target_frequencies(&beliefs, &geom, &c, &mut rng) {
            Ok(t) => prop_assert!(satisfies_constraints(&t, &beliefs, &geom, &c)),
            Err(Error::ConstraintsUnsatisfiable { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn row_cost_gradient_matches_finite_difference(seed in any::<u64>(), k in 0usize..16) {
        let (_, beliefs, ts) = setup(0.5, 20, 3);
        let mut rng = seeded(seed);
        let row: Vec<f64> = (0..16).map(|j| f64::from(u8::from(j == k)) + rng.random_range(-0.05..0.05)).collect();
        let (v, off) = (beliefs.cal.v_phi0[k], beliefs.cal.phi_offset[k]);
        let fd = finite_difference_gradient(|x| row_cost(x, &ts, k, v, off).0, &row, 1e-6);
        prop_assert!(max_abs_difference(&row_cost(&row, &ts, k, v, off).1, &fd) < 1e-9);
    }

    #[test]
    fn scalar_cost_gradient_matches_finite_difference(seed in any::<u64>(), inv_v in 0.02f64..0.05, off in -0.05f64..0.05) {
        let mut rng = seeded(seed);
        let x: Vec<f64> = (0..25).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|x| x / 30.0 + rng.random_range(-0.02..0.02)).collect();
        let fd = finite_difference_gradient(|q| scalar_cost(&x, &y, q[0], q[1]).0, &[inv_v, off], 1e-6);
        prop_assert!(max_abs_difference(&scalar_cost(&x, &y, inv_v, off).1, &fd) < 1e-8);
    }

    #[test]
    fn spectrum_cost_gradient_matches_finite_difference(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let truth = sample_device_params(&mut rng, 1).remove(0);
        let pts = noiseless_points(&truth, &sweep_voltages(12, 0.3, truth.v_phi0));
        let q = sample_device_params(&mut rng, 1).remove(0);
        let a = [q.f_max, q.ec_h, q.d, q.v_phi0, q.phi_offset];
        let fd = finite_difference_gradient(
            |a| {
                let mut p = q;
                (p.f_max, p.ec_h, p.d, p.v_phi0, p.phi_offset) = (a[0], a[1], a[2], a[3], a[4]);
                spectrum_cost(&pts, &p).0
            },
            &a,
            1e-6,
        );
        prop_assert!(max_abs_difference(&spectrum_cost(&pts, &q).1, &fd) < 1e-5);
    }
}

#[test]
fn lbfgs_rows_match_normal_equations_on_random_sets() {
    for seed in 0..8u64 {
        let m = 20 + 10 * seed as usize;
        let (_, beliefs, ts) = setup(0.5, m, seed);
        let init = CrosstalkMatrix::identity(16);
        let r = train_matrix_with(&ts, &beliefs.cal, &init, &OptimizerConfig::lbfgs(), TrainOptions::default()).unwrap();
        for k in 0..16 {
            let exact = closed_form_row(&ts, k, &beliefs.cal).unwrap();
            let diag = beliefs.cal.v_phi0[k] / r.cal.v_phi0[k];
            let learned: Vec<f64> = r.s_learned.row(k).iter().map(|x| x * diag).collect();
            let scale = exact.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(max_abs_difference(&learned, &exact) / scale < 1e-6, "seed {seed} row {k}");
        }
    }
}

#[test]
fn exactly_determined_noiseless_set_gives_true_rows() {
    let (dev, beliefs, ts) = setup(0.0, 16, 11);
    for k in 0..16 {
        let row = closed_form_row(&ts, k, &beliefs.cal).unwrap();
        let err = max_abs_difference(&row, &dev.s_target.row(k));
        assert!(err < 1e-9, "row {k}: {err}");
    }
    let (_, beliefs, ts) = setup(0.0, 15, 11);
    assert!(matches!(closed_form_row(&ts, 0, &beliefs.cal), Err(Error::RankDeficient { .. })));
}

#[test]
fn first_order_methods_run_the_full_budget() {
    let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 4.0 * (x[1] + 0.5).powi(2);
    let g = |x: &[f64]| vec![2.0 * (x[0] - 1.0), 8.0 * (x[1] + 0.5)];
    for cfg in [OptimizerConfig::sgd().with_max_iters(37), OptimizerConfig::adam().with_max_iters(37)] {
        let r = minimize(f, g, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(r.iterations, 37);
        assert_eq!(r.cost_trace.len(), 38);
    }
}

#[test]
fn error_grows_with_measurement_noise() {
    let c = TargetConstraints::default();
    let mut medians = Vec::new();
    for sigma in [0.0, 0.1, 0.5, 1.0] {
        let per_seed: Vec<f64> = (0..20u64)
            .map(|seed| {
                let (dev, beliefs, ts) = setup(sigma, 50, seed);
                let r = train_matrix_with(&ts, &beliefs.cal, &CrosstalkMatrix::identity(16), &OptimizerConfig::lbfgs(), TrainOptions::default())
                    .unwrap();
                validate(&dev, &r, &beliefs.params, 3, &c, &mut seeded(seed + 100)).unwrap().median_abs
            })
            .collect();
        medians.push(median(&per_seed));
    }
    assert!(medians.windows(2).all(|w| w[1] > w[0]), "{medians:?}");
}

#[test]
fn training_sets_are_reproducible() {
    let (_, _, a) = setup(0.5, 30, 4);
    let (_, _, b) = setup(0.5, 30, 4);
    assert_eq!(a, b);
}
