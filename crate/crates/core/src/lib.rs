//! Resonant-cavity characterization of anisotropic dielectrics.
//!
//! The crate turns transmission traces of a dielectric-loaded superconducting
//! cavity into calibrated material properties:
//!
//! * [`trace_io`]: Touchstone v1 and CSV ingestion into validated [`ComplexTrace`]s.
//! * [`resonance`]: IQ-circle fit, detuning cancellation, half-power points and
//!   a least-squares refinement of the one-pole transmission model.
//! * [`q_budget`]: loaded/unloaded/dielectric quality-factor bookkeeping.
//! * [`extraction`]: permittivity tensor from frequency shifts and loss tangents
//!   from filling factors.
//! * [`uncertainty`]: extreme-case intervals and quadrature combination.
//! * [`photon`]: power bookkeeping, average photon number and loss-trend analysis.
//! * [`reference`]: the bundled reference sheet and its self-check.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod extraction;
pub mod lsq;
pub mod photon;
pub mod q_budget;
pub mod reference;
pub mod resonance;
pub mod trace_io;
pub mod uncertainty;

pub use num_complex::Complex64;

pub use extraction::{
    DeltaEps, FillingFactors, LossTangent, ModeKind, ModeSpec, PermittivityTensor, Sensitivity,
};
pub use photon::{PowerPoint, SweepKind, SweepPoint, SweepSeries};
pub use q_budget::{CouplingSet, CouplingSource, ExternalQ, QBudget, WallModel};
pub use reference::ReferenceSheet;
pub use resonance::{ResonanceFit, ResonatorModel};
pub use trace_io::{ComplexTrace, TouchstoneDocument};
pub use uncertainty::{ExtremeCasePair, UncertainValue};
