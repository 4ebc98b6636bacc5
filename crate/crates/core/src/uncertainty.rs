//! Error analysis for the dielectric quality factor, filling factors and
//! loss tangents.
//!
//! External quality factors are bracketed by two extreme cases (simulated and
//! measured couplings); Q_d is computed for both and reported as midpoint ±
//! half-spread. Filling-factor uncertainty is the deviation of a misaligned
//! sample from the nominal placement. The two relative uncertainties add in
//! quadrature to give that of the loss tangent.

use serde::Serialize;
use thiserror::Error;

use crate::q_budget::{self, BudgetError, CouplingSet, WallModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("extreme-case values must be positive, got {0} and {1}")]
    NonPositive(f64, f64),
    #[error("{case}: {source}")]
    Budget {
        case: &'static str,
        #[source]
        source: BudgetError,
    },
}

/// A central value with a non-negative absolute uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertainValue {
    pub value: f64,
    pub abs_unc: f64,
}

impl UncertainValue {
    pub fn new(value: f64, abs_unc: f64) -> Self {
        Self {
            value,
            abs_unc: abs_unc.abs(),
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    /// `abs_unc/|value|`, undefined at zero.
    pub fn rel_unc(&self) -> Option<f64> {
        (self.value != 0.0).then(|| self.abs_unc / self.value.abs())
    }

    pub fn lower(&self) -> f64 {
        self.value - self.abs_unc
    }

    pub fn upper(&self) -> f64 {
        self.value + self.abs_unc
    }

    /// Same quantity in different units, e.g. 100 for a fraction in percent.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.value * factor, self.abs_unc * factor)
    }
}

/// Two bracketing estimates of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremeCasePair {
    pub case_a: f64,
    pub case_b: f64,
}

impl ExtremeCasePair {
    pub fn new(case_a: f64, case_b: f64) -> Result<Self, UncertaintyError> {
        if case_a > 0.0 && case_b > 0.0 {
            Ok(Self { case_a, case_b })
        } else {
            Err(UncertaintyError::NonPositive(case_a, case_b))
        }
    }

    /// Midpoint ± half the spread.
    pub fn interval(&self) -> UncertainValue {
        UncertainValue::new(
            0.5 * (self.case_a + self.case_b),
            0.5 * (self.case_a - self.case_b).abs(),
        )
    }
}

/// Q_d from the same loaded Q under two coupling calibrations.
pub fn qd_extremes(
    q_loaded: f64,
    case_a: &CouplingSet,
    case_b: &CouplingSet,
    walls: WallModel,
) -> Result<ExtremeCasePair, UncertaintyError> {
    let qd = |set: &CouplingSet, case: &'static str| {
        q_budget::unloaded_q(q_loaded, set)
            .and_then(|q_ul| q_budget::dielectric_q(q_ul, walls))
            .map_err(|source| UncertaintyError::Budget { case, source })
    };
    ExtremeCasePair::new(qd(case_a, "case a")?, qd(case_b, "case b")?)
}

/// Interval estimate of Q_d from two coupling calibrations.
pub fn qd_interval(
    q_loaded: f64,
    case_a: &CouplingSet,
    case_b: &CouplingSet,
    walls: WallModel,
) -> Result<UncertainValue, UncertaintyError> {
    Ok(qd_extremes(q_loaded, case_a, case_b, walls)?.interval())
}

/// Filling factor with the deviation of an offset placement as uncertainty.
pub fn filling_uncertainty(p_nominal: f64, p_offset_case: f64) -> UncertainValue {
    UncertainValue::new(p_nominal, (p_nominal - p_offset_case).abs())
}

/// Quadrature sum of the relative uncertainties of p and Q_d.
pub fn combine_rel(rel_p: f64, rel_qd: f64) -> f64 {
    rel_p.hypot(rel_qd)
}

pub fn tan_with_uncertainty(tan_value: f64, rel_tan: f64) -> UncertainValue {
    UncertainValue::new(tan_value, tan_value * rel_tan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::q_budget::{CouplingSource, ExternalQ};

    fn ports(q: f64) -> CouplingSet {
        CouplingSet::new(
            vec![ExternalQ::Finite(q), ExternalQ::Finite(q), ExternalQ::DECOUPLED, ExternalQ::DECOUPLED],
            CouplingSource::Measured,
        )
        .unwrap()
    }

    /// Symmetric two-port Q_ext for which the unloaded Q equals `q_d`.
    fn ports_for(q_loaded: f64, q_d: f64) -> CouplingSet {
        ports(2.0 / (1.0 / q_loaded - 1.0 / q_d))
    }

    #[test]
    fn identical_cases_have_no_spread() {
        let c = ports(1e6);
        let v = qd_interval(1e5, &c, &c, WallModel::Lossless).unwrap();
        assert_eq!(v.abs_unc, 0.0);
        assert!((v.value - 125_000.0).abs() < 1e-9);
    }

    #[test]
    fn midpoint_and_half_spread() {
        let q_loaded = 5e4;
        let a = ports_for(q_loaded, 54_000.0);
        let b = ports_for(q_loaded, 70_000.0);
        let v = qd_interval(q_loaded, &a, &b, WallModel::Lossless).unwrap();
        assert!((v.value - 62_000.0).abs() < 1e-6);
        assert!((v.abs_unc - 8_000.0).abs() < 1e-6);
        assert!((v.rel_unc().unwrap() - 0.129).abs() < 5e-4);

        let v = ExtremeCasePair::new(1.47e5, 1.99e5).unwrap().interval();
        assert!((v.abs_unc - 2.6e4).abs() < 1e-9);
        assert!((v.rel_unc().unwrap() - 0.15).abs() < 0.005);
    }

    #[test]
    fn swap_invariance() {
        let a = ports_for(5e4, 54_000.0);
        let b = ports_for(5e4, 70_000.0);
        assert_eq!(
            qd_interval(5e4, &a, &b, WallModel::Lossless).unwrap(),
            qd_interval(5e4, &b, &a, WallModel::Lossless).unwrap()
        );
    }

    #[test]
    fn overcoupled_case_reported() {
        let err = qd_interval(1e5, &ports(1e6), &ports(1e5), WallModel::Lossless).unwrap_err();
        assert!(matches!(err, UncertaintyError::Budget { case: "case b", .. }));
    }

    #[test]
    fn filling_rows() {
        // Percent-scaled rows of the uncertainty table.
        let perp = filling_uncertainty(0.923, 0.9211).scaled(100.0);
        assert!((perp.abs_unc - 0.19).abs() < 1e-9);
        assert!((perp.rel_unc().unwrap() - 0.002).abs() < 1e-4);
        let par = filling_uncertainty(0.463, 0.4408).scaled(100.0);
        assert!((par.abs_unc - 2.22).abs() < 1e-9);
        assert!((par.rel_unc().unwrap() - 0.048).abs() < 5e-4);
        assert_eq!(filling_uncertainty(0.5, 0.5).abs_unc, 0.0);
    }

    #[test]
    fn quadrature() {
        assert!((combine_rel(0.002, 0.14) - 0.14).abs() < 5e-5);
        assert!((combine_rel(0.049, 0.15) - 0.1578).abs() < 1e-4);
        assert_eq!(combine_rel(0.0, 0.3), 0.3);
    }

    #[test]
    fn tangent_intervals() {
        let perp = tan_with_uncertainty(1.73e-5, 0.14);
        assert!((perp.abs_unc - 0.2422e-5).abs() < 1e-12);
        let par = tan_with_uncertainty(1.28e-5, 0.16);
        assert!((par.abs_unc - 0.2048e-5).abs() < 1e-12);
        assert_eq!(tan_with_uncertainty(1e-5, 0.0).abs_unc, 0.0);
    }

    #[test]
    fn rel_unc_undefined_at_zero() {
        assert_eq!(UncertainValue::new(0.0, 1.0).rel_unc(), None);
        assert_eq!(UncertainValue::new(2.0, -1.0).abs_unc, 1.0);
    }
}
