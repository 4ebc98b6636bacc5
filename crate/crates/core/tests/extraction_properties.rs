use std::collections::BTreeMap;

use dielq_core::extraction::{
    delta_eps_from_shifts, effective_loss_tangent, eps_at_condition, loss_tangent_te, loss_tangent_tm,
    mixed_mode_q, ExtractionError,
};
use dielq_core::uncertainty::{combine_rel, qd_interval, tan_with_uncertainty};
use dielq_core::{
    CouplingSet, CouplingSource, DeltaEps, ExternalQ, ExtremeCasePair, FillingFactors, LossTangent, ModeKind,
    ModeSpec, PermittivityTensor, Sensitivity, WallModel,
};
use proptest::prelude::*;

fn mode(name: &str, kind: ModeKind, d_perp_hz: f64, d_par_hz: f64) -> ModeSpec {
    ModeSpec {
        name: name.into(),
        kind,
        f_reference_hz: 8e9,
        sensitivity: Sensitivity { d_perp_hz, d_par_hz },
        filling: FillingFactors { p_perp: 0.4, p_par: 0.3 },
    }
}

fn shifts(modes: &[ModeSpec], delta: DeltaEps) -> BTreeMap<String, f64> {
    modes.iter().map(|m| (m.name.clone(), m.shift_for(delta))).collect()
}

#[test]
fn reference_inversion() {
    let modes = [
        mode("TE01", ModeKind::TE, -40.603e6, 0.0),
        mode("TM01", ModeKind::TM, 0.0, -64.637e6),
    ];
    let sol = delta_eps_from_shifts(&shifts(&modes, DeltaEps { perp: 4.5, par: 2.0 }), &modes).unwrap();
    let eps = eps_at_condition(PermittivityTensor::new(42.5, 26.0).unwrap(), sol.delta).unwrap();
    assert!((eps.eps_perp - 47.0).abs() <= 1e-9 * 47.0);
    assert!((eps.eps_par - 28.0).abs() <= 1e-9 * 28.0);
}

#[test]
fn parallel_sensitivities_are_ill_conditioned() {
    let modes = [
        mode("A", ModeKind::HOM, -40e6, -20e6),
        mode("B", ModeKind::HOM, -80e6, -40e6),
    ];
    let err = delta_eps_from_shifts(&shifts(&modes, DeltaEps { perp: 1.0, par: 1.0 }), &modes).unwrap_err();
    assert!(matches!(err, ExtractionError::IllConditioned(_)), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn two_mode_inversion(
        te in -100e6f64..-1e6,
        tm in -100e6f64..-1e6,
        cross in -0.3f64..0.3,
        d_perp in -10.0f64..10.0,
        d_par in -10.0f64..10.0,
    ) {
        let modes = [
            mode("TE", ModeKind::HOM, te, cross * tm),
            mode("TM", ModeKind::HOM, cross * te, tm),
        ];
        let truth = DeltaEps { perp: d_perp, par: d_par };
        let sol = delta_eps_from_shifts(&shifts(&modes, truth), &modes).unwrap();
        prop_assert!((sol.delta.perp - d_perp).abs() <= 1e-9 * (1.0 + d_perp.abs()));
        prop_assert!((sol.delta.par - d_par).abs() <= 1e-9 * (1.0 + d_par.abs()));
        prop_assert!(sol.condition_number >= 1.0);
    }

    #[test]
    fn overdetermined_consistent_shifts(
        d_perp in -10.0f64..10.0,
        d_par in -10.0f64..10.0,
        hom_perp in -50e6f64..-1e6,
        hom_par in -50e6f64..-1e6,
    ) {
        let modes = [
            mode("TE01", ModeKind::TE, -40.603e6, 0.0),
            mode("TM01", ModeKind::TM, 0.0, -64.637e6),
            mode("HOM", ModeKind::HOM, hom_perp, hom_par),
        ];
        let truth = DeltaEps { perp: d_perp, par: d_par };
        let df = shifts(&modes, truth);
        let norm = df.values().map(|v| v * v).sum::<f64>().sqrt();
        let sol = delta_eps_from_shifts(&df, &modes).unwrap();
        prop_assert_eq!(sol.modes_used.len(), 3);
        prop_assert!(sol.residual_norm_hz <= 1e-12 * norm, "{} vs {}", sol.residual_norm_hz, norm);
        prop_assert!((sol.delta.perp - d_perp).abs() <= 1e-9 * (1.0 + d_perp.abs()));
    }

    #[test]
    fn tangent_inverts_q(q_d in 1e2f64..1e9, p in 1e-3f64..1.0) {
        let t = loss_tangent_te(q_d, p).unwrap();
        prop_assert!((t * p * q_d - 1.0).abs() <= 4.0 * f64::EPSILON);
        prop_assert_eq!(loss_tangent_tm(q_d, p).unwrap(), t);
    }

    #[test]
    fn isotropic_mixed_mode(t in 1e-7f64..1e-2, p_perp in 0.01f64..0.5, p_par in 0.01f64..0.5) {
        let q_d = mixed_mode_q(LossTangent { tan_perp: t, tan_par: t }, p_perp, p_par);
        let back = effective_loss_tangent(q_d, p_perp, p_par).unwrap();
        prop_assert!((back / t - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn combine_rel_properties(a in 0.0f64..1.0, b in 0.0f64..1.0, k in 0.1f64..10.0) {
        let c = combine_rel(a, b);
        prop_assert_eq!(c, combine_rel(b, a));
        prop_assert!(c >= a.max(b) && c <= a + b + 1e-15);
        prop_assert!((combine_rel(k * a, k * b) - k * c).abs() <= 1e-14 * (1.0 + k * c));
        prop_assert_eq!(combine_rel(0.0, b), b);
    }

    #[test]
    fn tangent_uncertainty_scales(t in 1e-7f64..1e-2, r in 0.0f64..1.0) {
        let v = tan_with_uncertainty(t, r);
        prop_assert_eq!(v.value, t);
        prop_assert!((v.abs_unc - t * r).abs() <= 1e-15 * t);
    }

    #[test]
    fn interval_brackets_both_cases(q_l in 1e4f64..1e6, ka in 1.5f64..100.0, kb in 1.5f64..100.0) {
        let set = |k: f64| CouplingSet::new(
            vec![ExternalQ::Finite(k * q_l), ExternalQ::Finite(k * q_l)],
            CouplingSource::Measured,
        ).unwrap();
        let (a, b) = (set(ka * 2.0), set(kb * 2.0));
        let v = qd_interval(q_l, &a, &b, WallModel::Lossless).unwrap();
        let w = qd_interval(q_l, &b, &a, WallModel::Lossless).unwrap();
        prop_assert_eq!(v, w);
        let qa = 1.0 / (1.0 / q_l - a.total_loss());
        let qb = 1.0 / (1.0 / q_l - b.total_loss());
        prop_assert!(v.lower() <= qa.min(qb) * (1.0 + 1e-12));
        prop_assert!(v.upper() >= qa.max(qb) * (1.0 - 1e-12));
        let pair = ExtremeCasePair::new(qa, qb).unwrap().interval();
        prop_assert!((pair.value - v.value).abs() <= 1e-9 * v.value);
    }
}
