use fluxcal_core::transmon::{
    fit_spectrum, flux_from_freq, freq_from_flux, freq_slope, initial_guess, min_frequency, noiseless_points, sweep_voltages,
    FitMask, TransmonParams,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = TransmonParams> {
    (4.5f64..5.3, 0.18f64..0.21, 0.2f64..0.5, 24.0f64..35.0, -0.04f64..0.04)
        .prop_map(|(f, ec, d, v, o)| TransmonParams::new(f, ec, d, v, o).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn periodic_in_one_flux_quantum(p in params(), phi in -3.0f64..3.0) {
        prop_assert!((freq_from_flux(&p, phi) - freq_from_flux(&p, phi + 1.0)).abs() <= 1e-12);
    }

    #[test]
    fn even_in_flux(p in params(), phi in -3.0f64..3.0) {
        prop_assert!((freq_from_flux(&p, phi) - freq_from_flux(&p, -phi)).abs() <= 1e-12);
    }

    #[test]
    fn decreasing_on_half_period(p in params(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(freq_from_flux(&p, lo) > freq_from_flux(&p, hi));
        prop_assert!(freq_from_flux(&p, hi) >= min_frequency(&p) - 1e-12);
    }

    #[test]
    fn inversion_round_trips(p in params(), phi in 0.01f64..0.49) {
        let back = flux_from_freq(&p, freq_from_flux(&p, phi), phi).unwrap();
        prop_assert!(((back - phi) / phi).abs() <= 1e-12);
    }

    #[test]
    fn inversion_picks_branch_nearest_prediction(p in params(), phi in 0.05f64..0.45, k in -2i32..3, neg in any::<bool>()) {
        let branch = if neg { -phi } else { phi } + k as f64;
        let back = flux_from_freq(&p, freq_from_flux(&p, phi), branch + 0.01).unwrap();
        prop_assert!((back - branch).abs() < 1e-9);
    }

    #[test]
    fn slope_matches_finite_difference(p in params(), phi in -1.0f64..1.0) {
        let h = 1e-6;
        let fd = (freq_from_flux(&p, phi + h) - freq_from_flux(&p, phi - h)) / (2.0 * h);
        prop_assert!((freq_slope(&p, phi) - fd).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_fit_recovers_parameters(p in params(), n in 15usize..30) {
        let pts = noiseless_points(&p, &sweep_voltages(n, 0.3, p.v_phi0));
        let fit = fit_spectrum(&pts, FitMask::all_free(), &initial_guess(&pts)).unwrap();
        let q = fit.params;
        for (a, b) in [(q.f_max, p.f_max), (q.ec_h, p.ec_h), (q.d, p.d), (q.v_phi0, p.v_phi0), (q.phi_offset, p.phi_offset)] {
            prop_assert!(((a - b) / b.abs().max(0.01)).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn symmetric_limit_and_table_means() {
    let p = TransmonParams { d: 1.0, ..TransmonParams::nominal() };
    assert!((min_frequency(&p) - 4.887).abs() < 1e-12);
    // (4.887 + 0.1961) * sqrt(0.35) - 0.1961
    let expected = 5.0831 * 0.591_607_978_309_961_6 - 0.1961;
    assert!((min_frequency(&TransmonParams::nominal()) - expected).abs() < 1e-12);
    assert!((expected - 2.811).abs() < 1e-3);
}
