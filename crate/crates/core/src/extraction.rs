//! Permittivity tensor and loss tangents from fitted modes.
//!
//! A uniaxial crystal has the relative permittivity `diag(ε⊥, ε⊥, ε∥)`. Each
//! monitored mode shifts linearly with the two components,
//! `Δf = (df/dε⊥)·Δε⊥ + (df/dε∥)·Δε∥`, with sensitivities supplied by field
//! simulation. Dielectric loss splits the same way over the filling factors:
//! `1/Q_d = p⊥·tanδ⊥ + p∥·tanδ∥`, which for TE modes keeps only the ⊥ term
//! and for TM modes only the ∥ term.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted condition number of the sensitivity matrix.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("permittivity components must exceed 1, got ε⊥ = {eps_perp}, ε∥ = {eps_par}")]
    Nonphysical { eps_perp: f64, eps_par: f64 },
    #[error("need at least two modes with frequency shifts, got {0}")]
    TooFewModes(usize),
    #[error("no mode named `{0}`")]
    UnknownMode(String),
    #[error("sensitivity matrix is singular or ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("filling factor must lie in (0, 1], got {0}")]
    Filling(f64),
    #[error("mode `{name}`: {reason}")]
    InvalidMode { name: String, reason: String },
    #[error("dielectric quality factor must be positive, got {0}")]
    NonPositiveQ(f64),
    #[error("total filling factor is zero")]
    ZeroFilling,
}

/// Diagonal relative permittivity `diag(ε⊥, ε⊥, ε∥)` of a uniaxial crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermittivityTensor {
    pub eps_perp: f64,
    pub eps_par: f64,
}

impl PermittivityTensor {
    pub fn new(eps_perp: f64, eps_par: f64) -> Result<Self, ExtractionError> {
        if eps_perp > 1.0 && eps_par > 1.0 && eps_perp.is_finite() && eps_par.is_finite() {
            Ok(Self { eps_perp, eps_par })
        } else {
            Err(ExtractionError::Nonphysical { eps_perp, eps_par })
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.eps_perp, 0.0, 0.0],
            [0.0, self.eps_perp, 0.0],
            [0.0, 0.0, self.eps_par],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    TE,
    TM,
    /// Higher-order mode with field components along both axes.
    HOM,
}

/// Frequency sensitivities of a mode, Hz per unit relative permittivity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sensitivity {
    pub d_perp_hz: f64,
    pub d_par_hz: f64,
}

/// Fractions of stored electric energy in the sample along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FillingFactors {
    pub p_perp: f64,
    pub p_par: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSpec {
    pub name: String,
    pub kind: ModeKind,
    /// Resonance frequency at the reference permittivity.
    pub f_reference_hz: f64,
    pub sensitivity: Sensitivity,
    pub filling: FillingFactors,
}

impl ModeSpec {
    /// Checks the filling factors against the field alignment of the mode.
    pub fn validate(&self) -> Result<(), ExtractionError> {
        let err = |reason: String| ExtractionError::InvalidMode {
            name: self.name.clone(),
            reason,
        };
        let FillingFactors { p_perp, p_par } = self.filling;
        for p in [p_perp, p_par] {
            if !(0.0..=1.0).contains(&p) {
                return Err(err(format!("filling factor {p} outside [0, 1]")));
            }
        }
        match self.kind {
            ModeKind::TE if p_par != 0.0 => Err(err("TE field lies in the transverse plane; p_par must be 0".into())),
            ModeKind::TE if p_perp == 0.0 => Err(err("TE mode needs p_perp > 0".into())),
            ModeKind::TM if p_perp != 0.0 => Err(err("TM field lies along the axis; p_perp must be 0".into())),
            ModeKind::TM if p_par == 0.0 => Err(err("TM mode needs p_par > 0".into())),
            ModeKind::HOM if p_perp + p_par > 1.0 => Err(err(format!("p_perp + p_par = {} exceeds 1", p_perp + p_par))),
            ModeKind::HOM if p_perp + p_par == 0.0 => Err(err("HOM needs a nonzero filling".into())),
            _ if !(self.f_reference_hz > 0.0) => Err(err("reference frequency must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Frequency shift predicted for a permittivity change.
    pub fn shift_for(&self, delta: DeltaEps) -> f64 {
        self.sensitivity.d_perp_hz * delta.perp + self.sensitivity.d_par_hz * delta.par
    }
}

/// Change of the two permittivity components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DeltaEps {
    pub perp: f64,
    pub par: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEpsSolution {
    pub delta: DeltaEps,
    /// Euclidean norm of the shift residuals, Hz. Zero for an exact solve.
    pub residual_norm_hz: f64,
    pub condition_number: f64,
    pub modes_used: Vec<String>,
}

/// Solves the linear shift equations for (Δε⊥, Δε∥).
///
/// Two modes give an exact solve; more give the least-squares solution.
pub fn delta_eps_from_shifts(
    shifts: &BTreeMap<String, f64>,
    modes: &[ModeSpec],
) -> Result<DeltaEpsSolution, ExtractionError> {
    let mut rows = Vec::new();
    for (name, shift) in shifts {
        let mode = modes
            .iter()
            .find(|m| &m.name == name)
            .ok_or_else(|| ExtractionError::UnknownMode(name.clone()))?;
        rows.push((mode, *shift));
    }
    if rows.len() < 2 {
        return Err(ExtractionError::TooFewModes(rows.len()));
    }

    // Work in MHz to keep the matrix entries O(1..100).
    let scale = 1e-6;
    let a = DMatrix::from_fn(rows.len(), 2, |r, c| {
        let s = rows[r].0.sensitivity;
        scale * if c == 0 { s.d_perp_hz } else { s.d_par_hz }
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|(_, df)| scale * df));

    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(ExtractionError::IllConditioned(condition));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|_| ExtractionError::IllConditioned(condition))?;
    let residual = (&a * &x - &b).norm() / scale;

    Ok(DeltaEpsSolution {
        delta: DeltaEps {
            perp: x[0],
            par: x[1],
        },
        residual_norm_hz: residual,
        condition_number: condition,
        modes_used: rows.iter().map(|(m, _)| m.name.clone()).collect(),
    })
}

/// Reference permittivity plus a change, componentwise.
pub fn eps_at_condition(
    reference: PermittivityTensor,
    delta: DeltaEps,
) -> Result<PermittivityTensor, ExtractionError> {
    PermittivityTensor::new(reference.eps_perp + delta.perp, reference.eps_par + delta.par)
}

/// Permittivity step resolved by a frequency readout of `resolution_hz`.
pub fn permittivity_resolution(resolution_hz: f64, sensitivity_hz: f64) -> f64 {
    (resolution_hz / sensitivity_hz).abs()
}

fn check_inputs(q_d: f64, p: f64) -> Result<(), ExtractionError> {
    if !(q_d > 0.0) {
        return Err(ExtractionError::NonPositiveQ(q_d));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(ExtractionError::Filling(p));
    }
    Ok(())
}

/// tanδ⊥ = 1/(p⊥·Q_d) for a TE mode.
pub fn loss_tangent_te(q_d: f64, p_perp: f64) -> Result<f64, ExtractionError> {
    check_inputs(q_d, p_perp)?;
    Ok(1.0 / (p_perp * q_d))
}

/// tanδ∥ = 1/(p∥·Q_d) for a TM mode.
pub fn loss_tangent_tm(q_d: f64, p_par: f64) -> Result<f64, ExtractionError> {
    check_inputs(q_d, p_par)?;
    Ok(1.0 / (p_par * q_d))
}

/// Loss tangents along the two crystal axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTangent {
    pub tan_perp: f64,
    pub tan_par: f64,
}

/// Dielectric Q of a mode with mixed filling: `1/Q_d = p⊥·tanδ⊥ + p∥·tanδ∥`.
pub fn mixed_mode_q(tan: LossTangent, p_perp: f64, p_par: f64) -> f64 {
    1.0 / (p_perp * tan.tan_perp + p_par * tan.tan_par)
}

/// Single loss tangent attributed to a mixed mode, `1/((p⊥ + p∥)·Q_d)`.
pub fn effective_loss_tangent(q_d: f64, p_perp: f64, p_par: f64) -> Result<f64, ExtractionError> {
    let total = p_perp + p_par;
    if !(total > 0.0) {
        return Err(ExtractionError::ZeroFilling);
    }
    if !(q_d > 0.0) {
        return Err(ExtractionError::NonPositiveQ(q_d));
    }
    Ok(1.0 / (total * q_d))
}

/// Soft plausibility range for loss tangents. Values outside produce a
/// warning, never an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanityBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for SanityBounds {
    fn default() -> Self {
        Self { min: 1e-8, max: 1e-2 }
    }
}

impl SanityBounds {
    pub fn check(&self, what: &str, value: f64) -> Option<String> {
        (!(self.min..=self.max).contains(&value)).then(|| {
            format!(
                "{what} = {value:e} lies outside the plausible range [{:e}, {:e}]",
                self.min, self.max
            )
        })
    }
}
