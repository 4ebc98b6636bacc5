use dielq_core::photon::{
    avg_photon_number, dbm_to_watts, fit_saturation, power_trend, temperature_trend, watts_to_dbm,
    SaturationCurve, DEFAULT_WEAK_FRACTION,
};
use dielq_core::{SweepKind, SweepPoint, SweepSeries, UncertainValue};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn series(kind: SweepKind, xs: &[f64], qs: &[f64], unc: f64) -> SweepSeries {
    let points = xs
        .iter()
        .zip(qs)
        .map(|(x, q)| SweepPoint {
            abscissa: *x,
            q_d: UncertainValue::new(*q, unc * q),
        })
        .collect();
    SweepSeries::new(kind, points).unwrap()
}

#[test]
fn drive_range_converts_monotonically() {
    let dbm: Vec<f64> = (0..=40).map(|i| -92.0 + i as f64).collect();
    let watts: Vec<f64> = dbm.iter().map(|p| dbm_to_watts(*p)).collect();
    assert!(watts.windows(2).all(|w| w[1] > w[0]));
    let n: Vec<f64> = watts.iter().map(|p| avg_photon_number(*p, 1e6, 7.6e9).unwrap()).collect();
    assert!(n.windows(2).all(|w| w[1] > w[0]));
    assert!((n[40] / n[0] - 1e4).abs() < 1e-6);
    for (p, w) in dbm.iter().zip(&watts) {
        assert!((watts_to_dbm(*w).unwrap() - p).abs() < 1e-12);
    }
}

#[test]
fn weak_variation_flagged_with_noise() {
    let temps = [0.05, 0.1, 0.2, 0.3, 0.5, 0.8];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.005).unwrap();
    // 5% linear rise across the range plus 0.5% noise.
    let qs: Vec<f64> = temps
        .iter()
        .map(|t| 6e4 * (1.0 + 0.05 * (t - 0.05) / 0.75) * (1.0 + noise.sample(&mut rng)))
        .collect();
    let trend = temperature_trend(&series(SweepKind::Temperature, &temps, &qs, 0.14), DEFAULT_WEAK_FRACTION).unwrap();
    assert!(trend.weak_dependence, "{trend:?}");
}

#[test]
fn noisy_saturation_fit_stays_close() {
    let truth = SaturationCurve { l_tls: 2e-5, n_c: 3e4, l_0: 4e-6 };
    let n: Vec<f64> = (0..41).map(|i| 10f64.powf(2.0 + 0.125 * i as f64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.002).unwrap();
    let q: Vec<f64> = n.iter().map(|v| truth.q_d(*v) * (1.0 + noise.sample(&mut rng))).collect();
    let fit = fit_saturation(&series(SweepKind::PhotonNumber, &n, &q, 0.0)).unwrap();
    assert!(rel(fit.curve.l_tls, truth.l_tls) < 0.05);
    assert!(rel(fit.curve.l_0, truth.l_0) < 0.05);
    assert!(rel(fit.curve.n_c, truth.n_c) < 0.3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn photon_number_scaling(
        p in 1e-18f64..1e-6,
        q in 1e3f64..1e9,
        f in 1e9f64..2e10,
        k in 0.01f64..100.0,
    ) {
        let n = avg_photon_number(p, q, f).unwrap();
        prop_assert!(rel(avg_photon_number(k * p, q, f).unwrap(), k * n) <= 1e-12);
        prop_assert!(rel(avg_photon_number(p, k * q, f).unwrap(), k * n) <= 1e-12);
        prop_assert!(rel(avg_photon_number(p, q, k * f).unwrap(), n / (k * k)) <= 1e-12);
        prop_assert!(rel(avg_photon_number(p, q, f).unwrap() + avg_photon_number(k * p, q, f).unwrap(),
            avg_photon_number((1.0 + k) * p, q, f).unwrap()) <= 1e-12);
    }

    #[test]
    fn dbm_steps_are_multiplicative(p in -120.0f64..20.0, step in 0.1f64..30.0) {
        let ratio = dbm_to_watts(p + step) / dbm_to_watts(p);
        prop_assert!(rel(ratio, 10f64.powf(step / 10.0)) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn saturation_self_consistency(
        ratio_exp in -1.0f64..2.0,
        l_0_exp in -7.0f64..-4.0,
        n_c_exp in 0.0f64..6.0,
    ) {
        let l_0 = 10f64.powf(l_0_exp);
        let truth = SaturationCurve { l_tls: l_0 * 10f64.powf(ratio_exp), n_c: 10f64.powf(n_c_exp), l_0 };
        let n: Vec<f64> = (0..61).map(|i| 10f64.powf(-2.0 + 0.1667 * i as f64)).collect();
        let q: Vec<f64> = n.iter().map(|v| truth.q_d(*v)).collect();
        let trend = power_trend(&series(SweepKind::PhotonNumber, &n, &q, 0.0), true).unwrap();
        prop_assert!(trend.monotonicity > 0.99);
        let fit = trend.saturation_fit.expect("fit present");
        prop_assert!(rel(fit.curve.l_tls, truth.l_tls) < 0.01, "{:?} vs {:?}", fit.curve, truth);
        prop_assert!(rel(fit.curve.n_c, truth.n_c) < 0.01, "{:?} vs {:?}", fit.curve, truth);
        prop_assert!(rel(fit.curve.l_0, truth.l_0) < 0.01, "{:?} vs {:?}", fit.curve, truth);
    }
}
