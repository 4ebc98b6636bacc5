use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::FitError;
use crate::lsq::{self, LeastSquares, LmOptions};
use crate::trace_io::ComplexTrace;

/// Minimum number of samples for a circle fit.
pub const MIN_CIRCLE_POINTS: usize = 5;

/// Least-squares circle through the IQ samples of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IqCircle {
    pub center: Complex64,
    pub radius: f64,
    /// RMS of the perpendicular (radial) residuals.
    pub rms: f64,
}

/// Algebraic (Kåsa) circle fit in mean-centered coordinates.
pub fn fit_iq_circle(trace: &ComplexTrace) -> Result<IqCircle, FitError> {
    let points = trace.values();
    if points.len() < MIN_CIRCLE_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_CIRCLE_POINTS,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;

    let (mut suu, mut svv, mut suv, mut suw, mut svw, mut sw) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for z in points {
        let d = z - mean;
        let (u, v) = (d.re, d.im);
        let w = u * u + v * v;
        suu += u * u;
        svv += v * v;
        suv += u * v;
        suw += u * w;
        svw += v * w;
        sw += w;
    }
    // w ≈ 2a·u + 2b·v + c, with c = mean(w) because u and v are centered.
    let det = suu * svv - suv * suv;
    if !(det > 1e-12 * suu * svv) || suu == 0.0 || svv == 0.0 {
        return Err(FitError::DegenerateCircle);
    }
    let two_a = (suw * svv - svw * suv) / det;
    let two_b = (svw * suu - suw * suv) / det;
    let (a, b) = (two_a / 2.0, two_b / 2.0);
    let c = sw / n;
    let radius = (c + a * a + b * b).sqrt();
    let center = mean + Complex64::new(a, b);

    let rms = (points
        .iter()
        .map(|z| ((z - center).norm() - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(IqCircle {
        center,
        radius,
        rms,
    })
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Result of fitting the angle of the samples around the circle center with
/// `θ(f) = δ − 2·s·atan(2Q(f − f_res)/f_res)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PhaseFit {
    pub detuning_angle: f64,
    pub f_res: f64,
    pub q_loaded: f64,
    /// +1 when the angle decreases with frequency, −1 otherwise.
    pub orientation: f64,
}

struct PhaseProblem<'a> {
    freqs: &'a [f64],
    angles: &'a [f64],
    f0_guess: f64,
    q_guess: f64,
    orientation: f64,
}

impl PhaseProblem<'_> {
    fn unpack(&self, p: &[f64]) -> (f64, f64, f64) {
        let step = self.f0_guess / self.q_guess;
        (p[0], self.f0_guess + p[1] * step, self.q_guess * p[2])
    }
}

impl LeastSquares for PhaseProblem<'_> {
    fn num_params(&self) -> usize {
        3
    }

    fn num_residuals(&self) -> usize {
        self.freqs.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (theta, f0, q) = self.unpack(p);
        for (i, (f, phi)) in self.freqs.iter().zip(self.angles).enumerate() {
            let x = 2.0 * q * (f - f0) / f0;
            out[i] = theta - 2.0 * self.orientation * x.atan() - phi;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let (_, f0, q) = self.unpack(p);
        let step = self.f0_guess / self.q_guess;
        for (i, f) in self.freqs.iter().enumerate() {
            let x = 2.0 * q * (f - f0) / f0;
            let dphi_dx = -2.0 * self.orientation / (1.0 + x * x);
            out[(i, 0)] = 1.0;
            out[(i, 1)] = dphi_dx * (-2.0 * q * f / (f0 * f0)) * step;
            out[(i, 2)] = dphi_dx * (2.0 * (f - f0) / f0) * self.q_guess;
        }
    }
}

/// Fits the angular position of the samples around the circle center.
///
/// The angle at the resonance equals the detuning angle, because the center
/// lies halfway between the off-resonant point and the resonance point.
pub(crate) fn fit_phase_response(
    trace: &ComplexTrace,
    circle: &IqCircle,
) -> Result<PhaseFit, FitError> {
    let freqs = trace.frequencies();
    let mut angles = Vec::with_capacity(trace.len());
    let mut previous = 0.0;
    for (i, z) in trace.values().iter().enumerate() {
        let raw = (z - circle.center).arg();
        let unwrapped = if i == 0 {
            raw
        } else {
            previous + wrap_angle(raw - previous)
        };
        angles.push(unwrapped);
        previous = unwrapped;
    }

    let first = angles[0];
    let last = *angles.last().unwrap();
    let coverage = (last - first).abs();
    if !(coverage > PI) {
        return Err(FitError::AmbiguousOrientation);
    }
    let orientation = if last < first { 1.0 } else { -1.0 };

    // Initial guesses: resonance where the angle crosses the middle of its
    // range, Q from the covered angle assuming a centered sweep.
    let mid = 0.5 * (first + last);
    let crossing = angles
        .windows(2)
        .position(|w| (w[0] - mid) * (w[1] - mid) <= 0.0)
        .ok_or(FitError::AmbiguousOrientation)?;
    let (a0, a1) = (angles[crossing], angles[crossing + 1]);
    let (f_lo, f_hi) = (freqs[crossing], freqs[crossing + 1]);
    let t = if a1 != a0 { (mid - a0) / (a1 - a0) } else { 0.5 };
    let f0_guess = f_lo + t * (f_hi - f_lo);
    let span = freqs[freqs.len() - 1] - freqs[0];
    let half_coverage_x = (coverage / 4.0).min(1.5).tan();
    let q_guess = half_coverage_x * f0_guess / span;

    let problem = PhaseProblem {
        freqs,
        angles: &angles,
        f0_guess,
        q_guess,
        orientation,
    };
    let report = lsq::minimize(&problem, &[mid, 0.0, 1.0], &LmOptions::default());
    let (theta, f_res, q_loaded) = problem.unpack(&report.params);
    if !(q_loaded > 0.0 && f_res > freqs[0] && f_res < freqs[freqs.len() - 1]) {
        return Err(FitError::AmbiguousOrientation);
    }
    Ok(PhaseFit {
        detuning_angle: wrap_angle(theta),
        f_res,
        q_loaded,
        orientation,
    })
}

/// Estimates the detuning angle δ_L of a transmission trace.
///
/// δ_L is the direction from the off-resonant limit to the resonance point,
/// so that after rotating by −δ_L the resonance sits on the far side of the
/// circle along the positive real direction.
pub fn estimate_detuning_angle(trace: &ComplexTrace, circle: &IqCircle) -> Result<f64, FitError> {
    Ok(fit_phase_response(trace, circle)?.detuning_angle)
}

/// Multiplies every sample by e^{−iδ}.
pub fn phase_correct(trace: &ComplexTrace, detuning_angle: f64) -> ComplexTrace {
    let rotation = Complex64::from_polar(1.0, -detuning_angle);
    trace.map_values(|_, z| z * rotation)
}
