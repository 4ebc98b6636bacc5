//! Bundled reference sheet for lithium niobate and its consistency checks.
//!
//! The sheet is a versioned TOML file (`reference/lithium_niobate.toml`);
//! every number carries a provenance string. Other materials can ship their
//! own sheet in the same schema and load it with [`ReferenceSheet::from_toml`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{
    self, DeltaEps, FillingFactors, ModeKind, ModeSpec, PermittivityTensor, Sensitivity,
};
use crate::uncertainty::{self, ExtremeCasePair};

pub const FORMAT_VERSION: u32 = 1;

const BUNDLED: &str = include_str!("../reference/lithium_niobate.toml");

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("cannot read reference sheet: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed reference sheet: {0}")]
    Parse(String),
    #[error("unsupported reference sheet version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sourced {
    pub value: f64,
    pub source: String,
}

/// One error-budget row: δV/V and δV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyRow {
    pub rel: f64,
    pub abs: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub value: f64,
    pub abs: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cavity {
    pub diameter_mm: Sourced,
    pub height_mm: Sourced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub edge_mm: Sourced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceMode {
    pub frequency_hz: Sourced,
    pub df_deps_hz: Sourced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomEntry {
    pub frequency_hz: Sourced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modes {
    pub te01: ReferenceMode,
    pub tm01: ReferenceMode,
    pub hom: HomEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisPair {
    pub perp: Sourced,
    pub par: Sourced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagonal {
    pub xx: Sourced,
    pub yy: Sourced,
    pub zz: Sourced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyRows {
    pub q_d_te: UncertaintyRow,
    pub q_d_tm: UncertaintyRow,
    pub p_perp: UncertaintyRow,
    pub tan_perp: UncertaintyRow,
    pub p_par: UncertaintyRow,
    pub tan_par: UncertaintyRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conclusions {
    pub tan_par: Interval,
    pub tan_perp: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSheet {
    pub format_version: u32,
    pub material: String,
    pub cavity: Cavity,
    pub sample: Sample,
    pub modes: Modes,
    pub permittivity_50mk: AxisPair,
    pub permittivity_room: Diagonal,
    pub filling_50mk: AxisPair,
    pub loss_tangent_50mk: AxisPair,
    pub uncertainty: UncertaintyRows,
    pub conclusions: Conclusions,
}

impl ReferenceSheet {
    /// The lithium niobate sheet compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled reference sheet parses")
    }

    pub fn bundled_text() -> &'static str {
        BUNDLED
    }

    pub fn from_toml(text: &str) -> Result<Self, ReferenceError> {
        let sheet: Self = toml::from_str(text).map_err(|e| ReferenceError::Parse(e.to_string()))?;
        if sheet.format_version != FORMAT_VERSION {
            return Err(ReferenceError::Version(sheet.format_version));
        }
        Ok(sheet)
    }

    pub fn load(path: &Path) -> Result<Self, ReferenceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Room-temperature (ε⊥, ε∥) taken from the xx and zz entries.
    pub fn room_permittivity(&self) -> PermittivityTensor {
        PermittivityTensor {
            eps_perp: self.permittivity_room.xx.value,
            eps_par: self.permittivity_room.zz.value,
        }
    }

    pub fn permittivity_cold(&self) -> PermittivityTensor {
        PermittivityTensor {
            eps_perp: self.permittivity_50mk.perp.value,
            eps_par: self.permittivity_50mk.par.value,
        }
    }

    pub fn te_mode(&self) -> ModeSpec {
        ModeSpec {
            name: "TE01".into(),
            kind: ModeKind::TE,
            f_reference_hz: self.modes.te01.frequency_hz.value,
            sensitivity: Sensitivity {
                d_perp_hz: self.modes.te01.df_deps_hz.value,
                d_par_hz: 0.0,
            },
            filling: FillingFactors {
                p_perp: self.filling_50mk.perp.value,
                p_par: 0.0,
            },
        }
    }

    pub fn tm_mode(&self) -> ModeSpec {
        ModeSpec {
            name: "TM01".into(),
            kind: ModeKind::TM,
            f_reference_hz: self.modes.tm01.frequency_hz.value,
            sensitivity: Sensitivity {
                d_perp_hz: 0.0,
                d_par_hz: self.modes.tm01.df_deps_hz.value,
            },
            filling: FillingFactors {
                p_perp: 0.0,
                p_par: self.filling_50mk.par.value,
            },
        }
    }

    /// Q_d implied by 1/(p·tanδ) for the TE and TM modes.
    pub fn implied_q_d(&self) -> (f64, f64) {
        (
            1.0 / (self.filling_50mk.perp.value * self.loss_tangent_50mk.perp.value),
            1.0 / (self.filling_50mk.par.value * self.loss_tangent_50mk.par.value),
        )
    }

    /// Runs every consistency check on the sheet.
    pub fn self_check(&self) -> SelfCheckReport {
        let mut r = SelfCheckReport::default();
        let u = &self.uncertainty;
        let (p_perp, p_par) = (self.filling_50mk.perp.value, self.filling_50mk.par.value);
        let (tan_perp, tan_par) = (self.loss_tangent_50mk.perp.value, self.loss_tangent_50mk.par.value);
        let (qd_te, qd_tm) = self.implied_q_d();

        // Tangent closure through the extraction functions.
        r.push_result("tan_perp closure", tan_perp, extraction::loss_tangent_te(qd_te, p_perp), 1e-9, Tol::Relative);
        r.push_result("tan_par closure", tan_par, extraction::loss_tangent_tm(qd_tm, p_par), 1e-9, Tol::Relative);

        // Permittivity inversion from the forward shifts.
        let modes = [self.te_mode(), self.tm_mode()];
        let room = self.room_permittivity();
        let cold = self.permittivity_cold();
        let delta = DeltaEps {
            perp: cold.eps_perp - room.eps_perp,
            par: cold.eps_par - room.eps_par,
        };
        let shifts: BTreeMap<String, f64> = modes.iter().map(|m| (m.name.clone(), m.shift_for(delta))).collect();
        match extraction::delta_eps_from_shifts(&shifts, &modes) {
            Ok(sol) => {
                r.push("eps_perp inversion", cold.eps_perp, room.eps_perp + sol.delta.perp, 1e-9, Tol::Relative);
                r.push("eps_par inversion", cold.eps_par, room.eps_par + sol.delta.par, 1e-9, Tol::Relative);
            }
            Err(e) => r.push_error("permittivity inversion", e.to_string()),
        }

        // Filling rows: δp/p from the percent-scaled absolute column.
        let rel_p_perp = u.p_perp.abs / (100.0 * p_perp);
        let rel_p_par = u.p_par.abs / (100.0 * p_par);
        r.push("p_perp relative uncertainty", u.p_perp.rel, rel_p_perp, 0.005, Tol::Absolute);
        r.push("p_par relative uncertainty", u.p_par.rel, rel_p_par, 0.005, Tol::Absolute);

        // Quadrature combination reproduces the tangent rows.
        let rel_tan_perp = uncertainty::combine_rel(u.p_perp.rel, u.q_d_te.rel);
        let rel_tan_par = uncertainty::combine_rel(u.p_par.rel, u.q_d_tm.rel);
        r.push("tan_perp relative uncertainty", u.tan_perp.rel, rel_tan_perp, 0.005, Tol::Absolute);
        r.push("tan_par relative uncertainty", u.tan_par.rel, rel_tan_par, 0.005, Tol::Absolute);
        r.push(
            "tan_perp absolute uncertainty",
            u.tan_perp.abs,
            uncertainty::tan_with_uncertainty(tan_perp, rel_tan_perp).abs_unc,
            0.01e-5,
            Tol::Absolute,
        );
        r.push(
            "tan_par absolute uncertainty",
            u.tan_par.abs,
            uncertainty::tan_with_uncertainty(tan_par, rel_tan_par).abs_unc,
            0.01e-5,
            Tol::Absolute,
        );

        // Q_d from 1/(p·tanδ) against δQ_d/(δQ_d/Q_d).
        r.push("Q_d(TE01) consistency", u.q_d_te.abs / u.q_d_te.rel, qd_te, 0.15, Tol::Relative);
        r.push("Q_d(TM01) consistency", u.q_d_tm.abs / u.q_d_tm.rel, qd_tm, 0.15, Tol::Relative);

        // Quoted intervals, end to end: Q_d bracket and filling offset in,
        // tangent interval out.
        let chain = |q_d: f64, rel_q: f64, p: f64, p_abs_pct: f64| {
            let q = ExtremeCasePair::new(q_d * (1.0 - rel_q), q_d * (1.0 + rel_q))
                .map_err(|e| e.to_string())?
                .interval();
            let p = uncertainty::filling_uncertainty(p, p - p_abs_pct / 100.0);
            let rel = uncertainty::combine_rel(
                p.rel_unc().ok_or("zero filling")?,
                q.rel_unc().ok_or("zero Q_d")?,
            );
            let t = extraction::loss_tangent_te(q.value, p.value).map_err(|e| e.to_string())?;
            Ok::<_, String>(uncertainty::tan_with_uncertainty(t, rel))
        };
        for (name, interval, result) in [
            (
                "tan_perp",
                &self.conclusions.tan_perp,
                chain(qd_te, u.q_d_te.rel, p_perp, u.p_perp.abs),
            ),
            (
                "tan_par",
                &self.conclusions.tan_par,
                chain(qd_tm, u.q_d_tm.rel, p_par, u.p_par.abs),
            ),
        ] {
            match result {
                Ok(t) => {
                    r.push(&format!("{name} interval value"), interval.value, t.value, 1e-9, Tol::Relative);
                    r.push(&format!("{name} interval width"), interval.abs, t.abs_unc, 0.01e-5, Tol::Absolute);
                }
                Err(e) => r.push_error(&format!("{name} interval"), e),
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tol {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub tolerance: f64,
    pub tolerance_kind: Tol,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SelfCheckReport {
    pub checks: Vec<Check>,
}

impl SelfCheckReport {
    fn push(&mut self, name: &str, expected: f64, actual: f64, tolerance: f64, kind: Tol) {
        let dev = match kind {
            Tol::Relative => ((actual - expected) / expected).abs(),
            Tol::Absolute => (actual - expected).abs(),
        };
        self.checks.push(Check {
            name: name.to_string(),
            expected,
            actual: Some(actual),
            tolerance,
            tolerance_kind: kind,
            passed: dev <= tolerance,
            error: None,
        });
    }

    fn push_result<E: ToString>(
        &mut self,
        name: &str,
        expected: f64,
        actual: Result<f64, E>,
        tolerance: f64,
        kind: Tol,
    ) {
        match actual {
            Ok(v) => self.push(name, expected, v, tolerance, kind),
            Err(e) => self.push_error(name, e.to_string()),
        }
    }

    fn push_error(&mut self, name: &str, error: String) {
        self.checks.push(Check {
            name: name.to_string(),
            expected: f64::NAN,
            actual: None,
            tolerance: 0.0,
            tolerance_kind: Tol::Absolute,
            passed: false,
            error: Some(error),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_sheet_passes() {
        let report = ReferenceSheet::bundled().self_check();
        assert!(report.all_passed(), "{:?}", report.failures().collect::<Vec<_>>());
        assert!(report.checks.len() >= 14);
    }

    #[test]
    fn bundled_values() {
        let s = ReferenceSheet::bundled();
        assert_eq!(s.modes.hom.frequency_hz.value, 9.5e9);
        assert_eq!(s.permittivity_room.yy.value, 42.5);
        assert_eq!(s.cavity.diameter_mm.value, 11.2);
        assert!(s.loss_tangent_50mk.perp.source.contains("tan_perp"));
    }

    #[test]
    fn perturbed_tangent_fails_consistency() {
        let mut s = ReferenceSheet::bundled();
        s.loss_tangent_50mk.perp.value *= 1.5;
        let report = s.self_check();
        assert!(!report.get("Q_d(TE01) consistency").unwrap().passed);
        assert!(!report.all_passed());
    }

    #[test]
    fn swapped_fillings_fail() {
        let mut s = ReferenceSheet::bundled();
        std::mem::swap(&mut s.filling_50mk.perp, &mut s.filling_50mk.par);
        let report = s.self_check();
        assert!(!report.get("p_par relative uncertainty").unwrap().passed);
        assert!(!report.get("Q_d(TE01) consistency").unwrap().passed);
    }

    #[test]
    fn wrong_version_rejected() {
        let text = ReferenceSheet::bundled_text().replace("format_version = 1", "format_version = 2");
        assert!(matches!(ReferenceSheet::from_toml(&text), Err(ReferenceError::Version(2))));
    }

    #[test]
    fn missing_field_rejected() {
        let text = ReferenceSheet::bundled_text().replace("[sample]", "[sample_dims]");
        assert!(matches!(ReferenceSheet::from_toml(&text), Err(ReferenceError::Parse(_))));
    }
}
