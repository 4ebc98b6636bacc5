use serde::Serialize;

use super::{FitError, Side};
use crate::trace_io::ComplexTrace;

/// Half-width, in natural-log units of |f − f_res|, of the window used to
/// refine each extremum.
const LOG_WINDOW: f64 = 0.25;
const REFINE_PASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfPowerPoints {
    pub f_minus: f64,
    pub f_plus: f64,
}

impl HalfPowerPoints {
    pub fn bandwidth(&self) -> f64 {
        self.f_plus - self.f_minus
    }
}

/// Locates f∓ as the extrema of the imaginary part of a phase-corrected trace.
///
/// The imaginary part is taken relative to the midpoint of its range, which is
/// the imaginary part of the circle center; without a background this is zero.
/// Each discrete extremum is refined with a least-squares parabola in
/// `ln|f − f_res|`, a coordinate in which the one-pole |Im| profile is even
/// about the half-power point. With only the nearest neighbors available this
/// reduces to three-point interpolation.
pub fn find_half_power_points(corrected: &ComplexTrace) -> Result<HalfPowerPoints, FitError> {
    let freqs = corrected.frequencies();
    let n = freqs.len();
    let im: Vec<f64> = corrected.values().iter().map(|z| z.im).collect();

    let (i_max, i_min) = extreme_indices(&im);
    let offset = 0.5 * (im[i_max] + im[i_min]);
    let magnitude: Vec<f64> = im.iter().map(|v| (v - offset).abs()).collect();

    let (lo, hi) = if freqs[i_max] < freqs[i_min] {
        (i_max, i_min)
    } else {
        (i_min, i_max)
    };
    if lo == 0 {
        return Err(FitError::InsufficientSpan { side: Side::Below });
    }
    if hi == n - 1 {
        return Err(FitError::InsufficientSpan { side: Side::Above });
    }

    let mut f_minus = freqs[lo];
    let mut f_plus = freqs[hi];
    for _ in 0..REFINE_PASSES {
        let f_res = 0.5 * (f_minus + f_plus);
        f_minus = refine_extremum(freqs, &magnitude, lo, f_res);
        f_plus = refine_extremum(freqs, &magnitude, hi, f_res);
    }
    if !(f_minus < f_plus) {
        return Err(FitError::InsufficientSpan { side: Side::Below });
    }
    Ok(HalfPowerPoints { f_minus, f_plus })
}

fn extreme_indices(values: &[f64]) -> (usize, usize) {
    let mut i_max = 0;
    let mut i_min = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[i_max] {
            i_max = i;
        }
        if *v < values[i_min] {
            i_min = i;
        }
    }
    (i_max, i_min)
}

/// Vertex of the least-squares parabola through `(t, y)`, with `t` relative
/// to `t_ref`. Returns `None` when the parabola is not concave.
fn parabola_vertex(points: &[(f64, f64)], t_ref: f64) -> Option<f64> {
    // Normal equations for y = a + b·s + c·s², s = t − t_ref.
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(t, y) in points {
        let s = t - t_ref;
        let basis = [1.0, s, s * s];
        for r in 0..3 {
            rhs[r] += basis[r] * y;
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
        }
    }
    let m = nalgebra::Matrix3::from_fn(|r, c| m[r][c]);
    let coeffs = m.lu().solve(&nalgebra::Vector3::from(rhs))?;
    let (b, c) = (coeffs[1], coeffs[2]);
    (c < 0.0).then(|| t_ref - b / (2.0 * c))
}

fn refine_extremum(freqs: &[f64], magnitude: &[f64], k: usize, f_res: f64) -> f64 {
    let side = (freqs[k] - f_res).signum();
    let log_offset = |f: f64| (side * (f - f_res)).ln();
    let neighbors = [k - 1, k, k + 1];

    if side != 0.0 && neighbors.iter().all(|&j| side * (freqs[j] - f_res) > 0.0) {
        let t_k = log_offset(freqs[k]);
        let mut window: Vec<(f64, f64)> = freqs
            .iter()
            .zip(magnitude)
            .filter(|(f, _)| side * (**f - f_res) > 0.0)
            .map(|(f, y)| (log_offset(*f), *y))
            .filter(|(t, _)| (t - t_k).abs() <= LOG_WINDOW)
            .collect();
        if window.len() < 3 {
            window = neighbors
                .iter()
                .map(|&j| (log_offset(freqs[j]), magnitude[j]))
                .collect();
        }
        let t_lo = window.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let t_hi = window.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        return match parabola_vertex(&window, t_k) {
            Some(t) => f_res + side * t.clamp(t_lo, t_hi).exp(),
            None => freqs[k],
        };
    }

    // Too coarse for the log coordinate: plain three-point interpolation.
    let window: Vec<(f64, f64)> = neighbors.iter().map(|&j| (freqs[j], magnitude[j])).collect();
    match parabola_vertex(&window, freqs[k]) {
        Some(f) => f.clamp(freqs[k - 1], freqs[k + 1]),
        None => freqs[k],
    }
}
