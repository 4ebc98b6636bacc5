//! Power bookkeeping, average photon number and loss-trend analysis.
//!
//! The transmitted power is what remains of the input after reflection and
//! dissipation, `P_t = P_in − P_r − P_loss`, and the stored photon number
//! follows from `P_t·Q_ext2 = ħω²⟨n⟩`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::lsq::{self, LeastSquares, LmOptions};
use crate::uncertainty::UncertainValue;

/// Reduced Planck constant, J·s (CODATA 2018).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Default fraction of the mean Q_d below which the fitted temperature
/// variation counts as weak.
pub const DEFAULT_WEAK_FRACTION: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonError {
    #[error("power must be positive to convert to dBm, got {0} W")]
    NonPositivePower(f64),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("inconsistent power accounting: P_in {p_in:e} W < P_r + P_loss {spent:e} W")]
    NegativeTransmitted { p_in: f64, spent: f64 },
    #[error("sweep abscissa must be strictly increasing (index {0})")]
    Unordered(usize),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("abscissa has no spread")]
    DegenerateAbscissa,
    #[error("sweep CSV: {0}")]
    Csv(String),
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

pub fn watts_to_dbm(p_watts: f64) -> Result<f64, PhotonError> {
    if !(p_watts > 0.0) {
        return Err(PhotonError::NonPositivePower(p_watts));
    }
    Ok(10.0 * (p_watts / 1e-3).log10())
}

/// `P_in − P_r − P_loss`, all in watts.
pub fn transmitted_power(p_in: f64, p_reflected: f64, p_loss: f64) -> Result<f64, PhotonError> {
    for (what, value) in [("P_in", p_in), ("P_r", p_reflected), ("P_loss", p_loss)] {
        if !(value >= 0.0) {
            return Err(PhotonError::NonPositive { what, value });
        }
    }
    let spent = p_reflected + p_loss;
    if spent > p_in {
        return Err(PhotonError::NegativeTransmitted { p_in, spent });
    }
    Ok(p_in - spent)
}

/// ⟨n⟩ = P_t·Q_ext2/(ħω²) with ω = 2π·f_res.
pub fn avg_photon_number(p_t: f64, q_ext2: f64, f_res: f64) -> Result<f64, PhotonError> {
    for (what, value) in [("P_t", p_t), ("Q_ext2", q_ext2), ("f_res", f_res)] {
        if !(value > 0.0) {
            return Err(PhotonError::NonPositive { what, value });
        }
    }
    let omega = 2.0 * PI * f_res;
    Ok(p_t * q_ext2 / (HBAR * omega * omega))
}

/// Power dissipated inside the cavity implied by the Q budget:
/// the stored energy rate ωW = P_t·Q_ext2 divided by Q_UL.
pub fn loss_power_from_budget(p_t: f64, q_ext2: f64, q_unloaded: f64) -> f64 {
    p_t * q_ext2 / q_unloaded
}

/// Power levels of one measurement. Linear powers are in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerPoint {
    pub p_in_dbm: f64,
    pub p_reflected_w: f64,
    pub p_loss_w: f64,
    pub temperature_k: f64,
}

impl PowerPoint {
    pub fn p_in_w(&self) -> f64 {
        dbm_to_watts(self.p_in_dbm)
    }

    pub fn p_transmitted_w(&self) -> Result<f64, PhotonError> {
        transmitted_power(self.p_in_w(), self.p_reflected_w, self.p_loss_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepKind {
    /// Abscissa in kelvin.
    Temperature,
    /// Abscissa is the average photon number.
    PhotonNumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub abscissa: f64,
    pub q_d: UncertainValue,
}

/// Q_d against temperature or photon number, abscissa strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSeries {
    kind: SweepKind,
    points: Vec<SweepPoint>,
}

impl SweepSeries {
    pub fn new(kind: SweepKind, points: Vec<SweepPoint>) -> Result<Self, PhotonError> {
        if let Some(i) = points.windows(2).position(|w| !(w[1].abscissa > w[0].abscissa)) {
            return Err(PhotonError::Unordered(i + 1));
        }
        Ok(Self { kind, points })
    }

    /// Sorts the points by abscissa first; duplicate abscissae are still rejected.
    pub fn from_unsorted(kind: SweepKind, mut points: Vec<SweepPoint>) -> Result<Self, PhotonError> {
        points.sort_by(|a, b| a.abscissa.total_cmp(&b.abscissa));
        Self::new(kind, points)
    }

    pub fn kind(&self) -> SweepKind {
        self.kind
    }

    pub fn points(&self) -> &[SweepPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Reads a sweep from CSV with columns `abscissa,q_d,q_d_unc`.
pub fn parse_sweep_csv(text: &str, kind: SweepKind) -> Result<SweepSeries, PhotonError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| PhotonError::Csv(e.to_string()))?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PhotonError::Csv(format!("missing column `{name}`")))
    };
    let (ia, iq, iu) = (column("abscissa")?, column("q_d")?, column("q_d_unc")?);
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| PhotonError::Csv(e.to_string()))?;
        let cell = |i: usize, name: &str| -> Result<f64, PhotonError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                PhotonError::Csv(format!("row {}, column `{name}`: cannot parse `{raw}`", row + 1))
            })
        };
        points.push(SweepPoint {
            abscissa: cell(ia, "abscissa")?,
            q_d: UncertainValue::new(cell(iq, "q_d")?, cell(iu, "q_d_unc")?),
        });
    }
    SweepSeries::new(kind, points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemperatureTrend {
    /// dQ_d/dT, per kelvin.
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope when the points carry uncertainties.
    pub slope_unc: Option<f64>,
    pub mean_q_d: f64,
    /// |slope|·(T_max − T_min).
    pub total_variation: f64,
    pub relative_variation: f64,
    pub threshold: f64,
    pub weak_dependence: bool,
}

/// Weighted straight-line fit of Q_d against temperature.
///
/// Points are weighted by 1/σ² when every point has a positive uncertainty,
/// otherwise uniformly.
pub fn temperature_trend(series: &SweepSeries, weak_fraction: f64) -> Result<TemperatureTrend, PhotonError> {
    let pts = series.points();
    if pts.len() < 3 {
        return Err(PhotonError::TooFewPoints {
            needed: 3,
            got: pts.len(),
        });
    }
    let weighted = pts.iter().all(|p| p.q_d.abs_unc > 0.0);
    let weight = |p: &SweepPoint| if weighted { p.q_d.abs_unc.powi(-2) } else { 1.0 };

    let sw: f64 = pts.iter().map(weight).sum();
    let mx = pts.iter().map(|p| weight(p) * p.abscissa).sum::<f64>() / sw;
    let my = pts.iter().map(|p| weight(p) * p.q_d.value).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| weight(p) * (p.abscissa - mx).powi(2)).sum();
    let sxy: f64 = pts
        .iter()
        .map(|p| weight(p) * (p.abscissa - mx) * (p.q_d.value - my))
        .sum();
    if !(sxx > 0.0) {
        return Err(PhotonError::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let span = pts[pts.len() - 1].abscissa - pts[0].abscissa;
    let mean_q_d = pts.iter().map(|p| p.q_d.value).sum::<f64>() / pts.len() as f64;
    let total_variation = slope.abs() * span;
    let relative_variation = total_variation / mean_q_d.abs();
    Ok(TemperatureTrend {
        slope,
        intercept,
        slope_unc: weighted.then(|| sxx.recip().sqrt()),
        mean_q_d,
        total_variation,
        relative_variation,
        threshold: weak_fraction,
        weak_dependence: relative_variation < weak_fraction,
    })
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            out[order[k]] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; zero when either variable is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Phenomenological saturation curve
/// `1/Q_d(n) = L_tls/√(1 + n/n_c) + L_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationCurve {
    pub l_tls: f64,
    /// Meaningless when `l_tls` is zero.
    pub n_c: f64,
    pub l_0: f64,
}

impl SaturationCurve {
    pub fn loss(&self, n: f64) -> f64 {
        self.l_tls / (1.0 + n / self.n_c).sqrt() + self.l_0
    }

    pub fn q_d(&self, n: f64) -> f64 {
        1.0 / self.loss(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationFit {
    pub curve: SaturationCurve,
    /// RMS of (model − data)/data over 1/Q_d.
    pub rms_relative_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerTrend {
    /// Spearman correlation of Q_d with ⟨n⟩, in [−1, 1].
    pub monotonicity: f64,
    pub saturation_fit: Option<SaturationFit>,
    /// Why the saturation fit is absent, if it is.
    pub fit_failure: Option<String>,
}

struct SaturationProblem<'a> {
    n: &'a [f64],
    loss: &'a [f64],
    scale: f64,
}

impl SaturationProblem<'_> {
    /// Parameters `[L_tls/s, ln n_c, L_0/s]`.
    fn unpack(&self, p: &[f64]) -> SaturationCurve {
        SaturationCurve {
            l_tls: self.scale * p[0],
            n_c: p[1].exp(),
            l_0: self.scale * p[2],
        }
    }
}

impl LeastSquares for SaturationProblem<'_> {
    fn num_params(&self) -> usize {
        3
    }

    fn num_residuals(&self) -> usize {
        self.n.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let curve = self.unpack(p);
        for (i, (n, y)) in self.n.iter().zip(self.loss).enumerate() {
            out[i] = (curve.loss(*n) - y) / y;
        }
    }

    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let curve = self.unpack(p);
        for (i, (n, y)) in self.n.iter().zip(self.loss).enumerate() {
            let ratio = n / curve.n_c;
            let g = (1.0 + ratio).sqrt().recip();
            out[(i, 0)] = self.scale * g / y;
            out[(i, 1)] = curve.l_tls * 0.5 * ratio * g * g * g / y;
            out[(i, 2)] = self.scale / y;
        }
    }
}

/// Fits the saturation curve to Q_d(⟨n⟩).
pub fn fit_saturation(series: &SweepSeries) -> Result<SaturationFit, String> {
    let n: Vec<f64> = series.points().iter().map(|p| p.abscissa).collect();
    let loss: Vec<f64> = series.points().iter().map(|p| 1.0 / p.q_d.value).collect();
    if n.iter().any(|v| !(*v > 0.0)) || loss.iter().any(|v| !(*v > 0.0)) {
        return Err("photon numbers and Q_d must be positive".into());
    }
    let hi = loss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let log_mean_n = n.iter().map(|v| v.ln()).sum::<f64>() / n.len() as f64;

    if hi - lo <= 1e-12 * hi {
        return Ok(SaturationFit {
            curve: SaturationCurve {
                l_tls: 0.0,
                n_c: log_mean_n.exp(),
                l_0: loss.iter().sum::<f64>() / loss.len() as f64,
            },
            rms_relative_residual: 0.0,
            iterations: 0,
        });
    }

    // Start: L_0 at the high-power floor, L_tls from the span, n_c where the
    // excess loss has dropped by 1/√2.
    let target = lo + (hi - lo) / 2f64.sqrt();
    let n_c_guess = n
        .iter()
        .zip(&loss)
        .find(|(_, y)| **y <= target)
        .map(|(v, _)| *v)
        .unwrap_or_else(|| log_mean_n.exp());
    let problem = SaturationProblem {
        n: &n,
        loss: &loss,
        scale: hi,
    };
    let initial = [(hi - lo) / hi, n_c_guess.ln(), lo / hi];
    let options = LmOptions {
        max_iterations: 500,
        xtol: 1e-12,
        ..LmOptions::default()
    };
    let report = lsq::minimize(&problem, &initial, &options);
    if !report.converged() {
        return Err(format!("saturation fit did not converge ({:?})", report.termination));
    }
    let curve = problem.unpack(&report.params);
    Ok(SaturationFit {
        curve,
        rms_relative_residual: (2.0 * report.cost / n.len() as f64).sqrt(),
        iterations: report.iterations,
    })
}

/// Monotonicity of Q_d with ⟨n⟩ and an optional saturation fit.
pub fn power_trend(series: &SweepSeries, with_fit: bool) -> Result<PowerTrend, PhotonError> {
    if series.len() < 4 {
        return Err(PhotonError::TooFewPoints {
            needed: 4,
            got: series.len(),
        });
    }
    let n: Vec<f64> = series.points().iter().map(|p| p.abscissa).collect();
    let q: Vec<f64> = series.points().iter().map(|p| p.q_d.value).collect();
    let monotonicity = spearman(&n, &q);
    let (saturation_fit, fit_failure) = if with_fit {
        match fit_saturation(series) {
            Ok(fit) => (Some(fit), None),
            Err(reason) => (None, Some(reason)),
        }
    } else {
        (None, None)
    };
    Ok(PowerTrend {
        monotonicity,
        saturation_fit,
        fit_failure,
    })
}
