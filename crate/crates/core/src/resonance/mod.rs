//! Loaded quality factor of a transmission resonance.
//!
//! The geometric procedure fits a circle to the IQ samples, estimates and
//! cancels the detuning angle δ_L, and takes the half-power points f∓ where
//! |Im S21| peaks (the ±π/4 points of the corrected circle). Q_L = f_res/BW.
//! A least-squares fit of the one-pole model, started from the geometric
//! values, then refines the estimate; the geometric values are kept in the
//! result either way.

mod circle;
mod halfpower;
mod synth;

pub use circle::{estimate_detuning_angle, fit_iq_circle, phase_correct, wrap_angle, IqCircle};
pub use halfpower::{find_half_power_points, HalfPowerPoints};
pub use synth::{bandwidth_grid, linear_grid, synth_s21};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::lsq::{self, LeastSquares, LmOptions, Termination};
use crate::trace_io::{ComplexTrace, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Below,
    Above,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("IQ samples are collinear; no circle can be fitted")]
    DegenerateCircle,
    #[error("trace does not cross the resonance; detuning orientation is ambiguous")]
    AmbiguousOrientation,
    #[error("extremum of Im(S21) {side:?} resonance sits at the trace boundary; sweep too narrow")]
    InsufficientSpan { side: Side },
    #[error("half-power points do not bracket the resonance")]
    Inconsistent,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// One-pole transmission model
/// `S21(f) = A·e^{iδ}/(1 + 2i·Q_L·(f − f_res)/f_res) + B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonatorModel {
    pub f_res: f64,
    pub q_loaded: f64,
    /// |S21 − B| at resonance.
    pub amplitude: f64,
    pub detuning_angle: f64,
    pub background: Complex64,
}

impl ResonatorModel {
    pub fn evaluate(&self, f: f64) -> Complex64 {
        let x = 2.0 * self.q_loaded * (f - self.f_res) / self.f_res;
        Complex64::from_polar(self.amplitude, self.detuning_angle) / Complex64::new(1.0, x)
            + self.background
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_res / self.q_loaded
    }

    fn rms_residual(&self, trace: &ComplexTrace) -> f64 {
        let sum: f64 = trace.iter().map(|(f, z)| (z - self.evaluate(f)).norm_sqr()).sum();
        (sum / trace.len() as f64).sqrt()
    }
}

/// Output of the circle + half-power procedure alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricEstimate {
    pub circle: IqCircle,
    pub detuning_angle: f64,
    pub f_res: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    pub bandwidth: f64,
    pub q_loaded: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementInfo {
    pub iterations: usize,
    pub converged: bool,
    pub termination: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceFit {
    pub f_res: f64,
    pub bandwidth: f64,
    pub q_loaded: f64,
    pub detuning_angle: f64,
    /// Model value at the resonance frequency.
    pub s21_peak: Complex64,
    pub residual_rms: f64,
    pub f_minus: f64,
    pub f_plus: f64,
    pub amplitude: f64,
    pub background: Complex64,
    /// Set when the refinement failed and the geometric values are reported.
    pub degraded: bool,
    pub geometric: GeometricEstimate,
    pub refinement: RefinementInfo,
}

impl ResonanceFit {
    pub fn model(&self) -> ResonatorModel {
        ResonatorModel {
            f_res: self.f_res,
            q_loaded: self.q_loaded,
            amplitude: self.amplitude,
            detuning_angle: self.detuning_angle,
            background: self.background,
        }
    }

    fn from_model(
        model: &ResonatorModel,
        trace: &ComplexTrace,
        geometric: GeometricEstimate,
        refinement: RefinementInfo,
        degraded: bool,
    ) -> Self {
        let half = 0.5 * model.bandwidth();
        let (f_minus, f_plus) = (model.f_res - half, model.f_res + half);
        let bandwidth = f_plus - f_minus;
        Self {
            f_res: model.f_res,
            bandwidth,
            q_loaded: model.f_res / bandwidth,
            detuning_angle: model.detuning_angle,
            s21_peak: model.evaluate(model.f_res),
            residual_rms: model.rms_residual(trace),
            f_minus,
            f_plus,
            amplitude: model.amplitude,
            background: model.background,
            degraded,
            geometric,
            refinement,
        }
    }
}

/// Runs the geometric procedure: circle → detuning → correction → f∓.
pub fn geometric_estimate(trace: &ComplexTrace) -> Result<GeometricEstimate, FitError> {
    let circle = fit_iq_circle(trace)?;
    let phase = circle::fit_phase_response(trace, &circle)?;
    let corrected = phase_correct(trace, phase.detuning_angle);
    let points = find_half_power_points(&corrected)?;
    if !(points.f_minus < phase.f_res && phase.f_res < points.f_plus) {
        return Err(FitError::Inconsistent);
    }
    let bandwidth = points.bandwidth();
    Ok(GeometricEstimate {
        circle,
        detuning_angle: phase.detuning_angle,
        f_res: phase.f_res,
        f_minus: points.f_minus,
        f_plus: points.f_plus,
        bandwidth,
        q_loaded: phase.f_res / bandwidth,
    })
}

impl GeometricEstimate {
    /// Model implied by the geometric values: A = 2r, B = c − r·e^{iδ}.
    pub fn model(&self) -> ResonatorModel {
        let r = self.circle.radius;
        ResonatorModel {
            f_res: self.f_res,
            q_loaded: self.q_loaded,
            amplitude: 2.0 * r,
            detuning_angle: self.detuning_angle,
            background: self.circle.center - Complex64::from_polar(r, self.detuning_angle),
        }
    }
}

/// Parameters `[u, v, A, δ, Re B, Im B]` with `f_res = f0 + u·bw0`, `Q = Q0·v`.
struct ModelProblem<'a> {
    trace: &'a ComplexTrace,
    f0: f64,
    q0: f64,
}

impl ModelProblem<'_> {
    fn unpack(&self, p: &[f64]) -> ResonatorModel {
        ResonatorModel {
            f_res: self.f0 + p[0] * self.f0 / self.q0,
            q_loaded: self.q0 * p[1],
            amplitude: p[2],
            detuning_angle: p[3],
            background: Complex64::new(p[4], p[5]),
        }
    }
}

impl LeastSquares for ModelProblem<'_> {
    fn num_params(&self) -> usize {
        6
    }

    fn num_residuals(&self) -> usize {
        2 * self.trace.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let model = self.unpack(p);
        let n = self.trace.len();
        for (i, (f, z)) in self.trace.iter().enumerate() {
            let d = model.evaluate(f) - z;
            out[i] = d.re;
            out[n + i] = d.im;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let m = self.unpack(p);
        let n = self.trace.len();
        let rotation = Complex64::from_polar(1.0, m.detuning_angle);
        let bw_step = self.f0 / self.q0;
        let i = Complex64::i();
        for (k, f) in self.trace.frequencies().iter().enumerate() {
            let x = 2.0 * m.q_loaded * (f - m.f_res) / m.f_res;
            let lorentz = Complex64::new(1.0, x).inv();
            let ds_dx = -i * m.amplitude * rotation * lorentz * lorentz;
            let dx_df0 = -2.0 * m.q_loaded * f / (m.f_res * m.f_res);
            let dx_dq = 2.0 * (f - m.f_res) / m.f_res;
            let columns = [
                ds_dx * dx_df0 * bw_step,
                ds_dx * dx_dq * self.q0,
                rotation * lorentz,
                i * m.amplitude * rotation * lorentz,
                Complex64::new(1.0, 0.0),
                i,
            ];
            for (c, d) in columns.iter().enumerate() {
                out[(k, c)] = d.re;
                out[(n + k, c)] = d.im;
            }
        }
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::SmallStep => "small_step",
        Termination::SmallCostReduction => "small_cost_reduction",
        Termination::SmallGradient => "small_gradient",
        Termination::ZeroResidual => "zero_residual",
        Termination::MaxIterations => "max_iterations",
        Termination::NumericalFailure => "numerical_failure",
    }
}

/// Refinement stops after 200 damped solves or a relative step below 1e-10.
pub fn refinement_options() -> LmOptions {
    LmOptions {
        max_iterations: 200,
        xtol: 1e-10,
        ..LmOptions::default()
    }
}

/// Full fit: geometric estimate followed by the least-squares refinement.
pub fn fit_resonance(trace: &ComplexTrace) -> Result<ResonanceFit, FitError> {
    let geometric = geometric_estimate(trace)?;
    let start = geometric.model();
    let problem = ModelProblem {
        trace,
        f0: start.f_res,
        q0: start.q_loaded,
    };
    let initial = [
        0.0,
        1.0,
        start.amplitude,
        start.detuning_angle,
        start.background.re,
        start.background.im,
    ];
    let report = lsq::minimize(&problem, &initial, &refinement_options());
    let info = RefinementInfo {
        iterations: report.iterations,
        converged: report.converged(),
        termination: termination_name(report.termination),
    };

    let mut refined = problem.unpack(&report.params);
    if refined.amplitude < 0.0 {
        refined.amplitude = -refined.amplitude;
        refined.detuning_angle += std::f64::consts::PI;
    }
    refined.detuning_angle = wrap_angle(refined.detuning_angle);

    let freqs = trace.frequencies();
    let plausible = refined.q_loaded > 0.0
        && refined.amplitude > 0.0
        && refined.f_res > freqs[0]
        && refined.f_res < freqs[freqs.len() - 1];
    if report.converged() && plausible {
        Ok(ResonanceFit::from_model(&refined, trace, geometric, info, false))
    } else {
        let mut fit = ResonanceFit::from_model(&start, trace, geometric, info, true);
        fit.f_minus = geometric.f_minus;
        fit.f_plus = geometric.f_plus;
        fit.bandwidth = geometric.bandwidth;
        fit.q_loaded = geometric.q_loaded;
        Ok(fit)
    }
}
