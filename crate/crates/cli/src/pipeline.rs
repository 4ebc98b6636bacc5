//! Fit → budget → extraction → uncertainty → photon stages over a run config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dielq_core::extraction::{self, DeltaEps, SanityBounds};
use dielq_core::photon::{self, PhotonError, PowerTrend, TemperatureTrend, DEFAULT_WEAK_FRACTION};
use dielq_core::resonance::{fit_resonance, FitError};
use dielq_core::trace_io::{self, CsvColumns, TraceError};
use dielq_core::uncertainty::{self, UncertaintyError};
use dielq_core::{
    ComplexTrace, CouplingSource, ExternalQ, ModeKind, QBudget, ResonanceFit, SweepKind, SweepPoint,
    SweepSeries, UncertainValue, WallModel,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{FileEntry, Fillings, ModeConfig, RunConfig};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Reads a trace from a Touchstone (`.s2p`, `.ts`) or CSV file.
///
/// CSV files need `frequency_hz,re,im` columns.
pub fn load_trace(path: &Path, parameter: &str) -> Result<ComplexTrace, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let trace = if is_csv {
        trace_io::parse_csv_trace(&text, &CsvColumns::rectangular("frequency_hz", "re", "im"), parameter)?
    } else {
        trace_io::extract_trace(&trace_io::parse_touchstone(&text)?, parameter)?
    };
    Ok(trace)
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("fit failed: {0}")]
    Fit(#[from] FitError),
}

pub fn fit_file(path: &Path, parameter: &str) -> Result<ResonanceFit, FileError> {
    Ok(fit_resonance(&load_trace(path, parameter)?)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub file: String,
    pub mode: Option<String>,
    pub temperature_mk: Option<f64>,
    pub p_in_dbm: Option<f64>,
    pub fit: ResonanceFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileFailure {
    pub file: String,
    pub mode: Option<String>,
    pub error: String,
}

/// Q budgets of one fitted resonance under both coupling calibrations.
#[derive(Debug, Clone, Serialize)]
pub struct ModeResult {
    pub mode: String,
    pub kind: ModeKind,
    pub file: String,
    pub f_res_hz: f64,
    pub shift_hz: f64,
    pub q_loaded: f64,
    pub budget_measured: QBudget,
    pub budget_simulated: QBudget,
    pub q_d: UncertainValue,
    pub fillings: Fillings,
}

#[derive(Debug, Clone, Serialize)]
pub struct PermittivityResult {
    pub eps_perp: f64,
    pub eps_par: f64,
    pub delta: DeltaEps,
    pub condition_number: f64,
    pub residual_norm_hz: f64,
    pub modes_used: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentResult {
    pub mode: String,
    pub value: f64,
    pub abs_unc: f64,
    pub rel_unc: f64,
    pub rel_unc_q_d: f64,
    pub rel_unc_filling: f64,
}

/// Measured Q_d of a higher-order mode against the value predicted from the
/// axis tangents.
#[derive(Debug, Clone, Serialize)]
pub struct HomCheck {
    pub mode: String,
    pub q_d_measured: f64,
    pub q_d_predicted: f64,
    pub relative_difference: f64,
    pub effective_loss_tangent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TemperatureRow {
    pub temperature_mk: f64,
    pub temperature_k: f64,
    pub modes: Vec<ModeResult>,
    pub permittivity: Option<PermittivityResult>,
    pub tan_perp: Option<TangentResult>,
    pub tan_par: Option<TangentResult>,
    pub hom_checks: Vec<HomCheck>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerPointResult {
    pub file: String,
    pub p_in_dbm: f64,
    pub p_transmitted_w: f64,
    pub p_loss_w: f64,
    /// P_loss implied by the measured-coupling budget, for comparison.
    pub p_loss_budget_w: f64,
    pub avg_photon_number: f64,
    pub q_d: UncertainValue,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerSeriesResult {
    pub mode: String,
    pub temperature_mk: f64,
    pub points: Vec<PowerPointResult>,
    /// Spearman monotonicity and the phenomenological saturation fit.
    pub trend: Option<PowerTrend>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TemperatureTrendResult {
    pub mode: String,
    pub trend: Option<TemperatureTrend>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub walls: WallModel,
    pub fits: Vec<FitRecord>,
    pub failures: Vec<FileFailure>,
    pub temperatures: Vec<TemperatureRow>,
    pub power_series: Vec<PowerSeriesResult>,
    pub temperature_trends: Vec<TemperatureTrendResult>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{0}")]
    Budget(String),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
}

/// Q budgets and the Q_d interval for one loaded Q.
pub fn budget_stage(
    mode: &ModeConfig,
    q_loaded: f64,
    walls: WallModel,
) -> Result<(QBudget, QBudget, UncertainValue), StageError> {
    let budget_err = |e: dielq_core::q_budget::BudgetError| StageError::Budget(e.to_string());
    let measured = mode.couplings(CouplingSource::Measured).map_err(budget_err)?;
    let simulated = mode.couplings(CouplingSource::Simulated).map_err(budget_err)?;
    let bm = QBudget::compute(q_loaded, &measured, walls).map_err(|e| StageError::Budget(format!("measured couplings: {e}")))?;
    let bs = QBudget::compute(q_loaded, &simulated, walls).map_err(|e| StageError::Budget(format!("simulated couplings: {e}")))?;
    let q_d = uncertainty::qd_interval(q_loaded, &measured, &simulated, walls)?;
    Ok((bm, bs, q_d))
}

/// Loss tangent with its combined uncertainty from Q_d and filling intervals.
pub fn tangent_stage(mode: &str, q_d: UncertainValue, p: f64, p_offset: f64) -> Option<TangentResult> {
    let tan = extraction::loss_tangent_te(q_d.value, p).ok()?;
    let rel_q = q_d.rel_unc()?;
    let rel_p = uncertainty::filling_uncertainty(p, p_offset).rel_unc()?;
    let rel = uncertainty::combine_rel(rel_p, rel_q);
    let t = uncertainty::tan_with_uncertainty(tan, rel);
    Some(TangentResult {
        mode: mode.to_string(),
        value: t.value,
        abs_unc: t.abs_unc,
        rel_unc: rel,
        rel_unc_q_d: rel_q,
        rel_unc_filling: rel_p,
    })
}

/// Permittivity from the frequency shifts of every fitted mode.
pub fn extraction_stage(
    config: &RunConfig,
    shifts: &BTreeMap<String, f64>,
) -> Result<PermittivityResult, String> {
    let specs: Vec<_> = config.modes.iter().map(|m| m.spec()).collect();
    let sol = extraction::delta_eps_from_shifts(shifts, &specs).map_err(|e| e.to_string())?;
    let eps = extraction::eps_at_condition(config.reference_tensor(), sol.delta).map_err(|e| e.to_string())?;
    Ok(PermittivityResult {
        eps_perp: eps.eps_perp,
        eps_par: eps.eps_par,
        delta: sol.delta,
        condition_number: sol.condition_number,
        residual_norm_hz: sol.residual_norm_hz,
        modes_used: sol.modes_used,
    })
}

fn file_label(entry: &FileEntry) -> String {
    entry.path.display().to_string()
}

/// Absolute location of a file entry; relative paths are taken from `base`.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_relative() {
        base.join(path)
    } else {
        path.to_path_buf()
    }
}

struct Fitted<'a> {
    entry: &'a FileEntry,
    mode: &'a ModeConfig,
    fit: ResonanceFit,
}

/// Ordering key for picking the file that represents a (temperature, mode)
/// pair: unannotated files first, then the highest input power.
fn preference(entry: &FileEntry) -> (bool, f64) {
    match entry.p_in_dbm {
        None => (true, 0.0),
        Some(p) => (false, p),
    }
}

fn power_point(
    f: &Fitted<'_>,
    mode_result: &ModeResult,
) -> Result<PowerPointResult, PhotonError> {
    let e = f.entry;
    let p_in_dbm = e.p_in_dbm.expect("annotated file");
    let p_in = photon::dbm_to_watts(p_in_dbm);
    let p_r = e
        .p_reflected_w
        .or(e.p_reflected_dbm.map(photon::dbm_to_watts))
        .unwrap_or(0.0);
    let p_loss = e.p_loss_w.unwrap_or(0.0);
    let p_t = photon::transmitted_power(p_in, p_r, p_loss)?;
    let q_ext2 = match f.mode.q_ext_measured[f.mode.output_port - 1] {
        ExternalQ::Finite(q) => q,
        ExternalQ::Decoupled(_) => unreachable!("validated output port"),
    };
    Ok(PowerPointResult {
        file: file_label(e),
        p_in_dbm,
        p_transmitted_w: p_t,
        p_loss_w: p_loss,
        p_loss_budget_w: photon::loss_power_from_budget(p_t, q_ext2, mode_result.budget_measured.q_unloaded),
        avg_photon_number: photon::avg_photon_number(p_t, q_ext2, f.fit.f_res)?,
        q_d: mode_result.q_d,
    })
}

fn mode_result(f: &Fitted<'_>, walls: WallModel) -> Result<ModeResult, StageError> {
    let (bm, bs, q_d) = budget_stage(f.mode, f.fit.q_loaded, walls)?;
    Ok(ModeResult {
        mode: f.mode.name.clone(),
        kind: f.mode.kind,
        file: file_label(f.entry),
        f_res_hz: f.fit.f_res,
        shift_hz: f.fit.f_res - f.mode.f_reference_hz,
        q_loaded: f.fit.q_loaded,
        budget_measured: bm,
        budget_simulated: bs,
        q_d,
        fillings: f.mode.fillings_at(f.entry.temperature_mk),
    })
}

fn temperature_row(
    config: &RunConfig,
    temperature_mk: f64,
    chosen: &[&Fitted<'_>],
    walls: WallModel,
    warnings: &mut Vec<String>,
) -> TemperatureRow {
    let mut row = TemperatureRow {
        temperature_mk,
        temperature_k: temperature_mk / 1000.0,
        modes: Vec::new(),
        permittivity: None,
        tan_perp: None,
        tan_par: None,
        hom_checks: Vec::new(),
        notes: Vec::new(),
    };
    for f in chosen {
        match mode_result(f, walls) {
            Ok(m) => row.modes.push(m),
            Err(e) => row.notes.push(format!("{} ({}): {e}", f.mode.name, file_label(f.entry))),
        }
    }

    let shifts: BTreeMap<String, f64> = row.modes.iter().map(|m| (m.mode.clone(), m.shift_hz)).collect();
    if shifts.len() >= 2 {
        match extraction_stage(config, &shifts) {
            Ok(p) => row.permittivity = Some(p),
            Err(e) => row.notes.push(format!("permittivity: {e}")),
        }
    } else {
        row.notes.push("permittivity needs at least two modes".into());
    }

    for m in &row.modes {
        let (nominal, offset) = (m.fillings.nominal, m.fillings.offset);
        match m.kind {
            ModeKind::TE if row.tan_perp.is_none() => {
                row.tan_perp = tangent_stage(&m.mode, m.q_d, nominal.p_perp, offset.p_perp);
            }
            ModeKind::TM if row.tan_par.is_none() => {
                row.tan_par = tangent_stage(&m.mode, m.q_d, nominal.p_par, offset.p_par);
            }
            _ => {}
        }
    }

    if let (Some(tp), Some(tl)) = (&row.tan_perp, &row.tan_par) {
        let tan = extraction::LossTangent {
            tan_perp: tp.value,
            tan_par: tl.value,
        };
        for m in row.modes.iter().filter(|m| m.kind == ModeKind::HOM) {
            let f = m.fillings.nominal;
            let predicted = extraction::mixed_mode_q(tan, f.p_perp, f.p_par);
            row.hom_checks.push(HomCheck {
                mode: m.mode.clone(),
                q_d_measured: m.q_d.value,
                q_d_predicted: predicted,
                relative_difference: (m.q_d.value - predicted) / predicted,
                effective_loss_tangent: extraction::effective_loss_tangent(m.q_d.value, f.p_perp, f.p_par)
                    .unwrap_or(f64::NAN),
            });
        }
    }

    let bounds = SanityBounds::default();
    for (label, t) in [("tan_perp", &row.tan_perp), ("tan_par", &row.tan_par)] {
        if let Some(msg) = t.as_ref().and_then(|t| bounds.check(label, t.value)) {
            warnings.push(format!("{temperature_mk} mK: {msg}"));
        }
    }
    row
}

/// Runs every stage over a validated config. `base` resolves relative paths.
pub fn run(config: &RunConfig, base: &Path) -> Report {
    let walls = config.walls().expect("validated walls");
    let mut entries: Vec<&FileEntry> = config.files.iter().collect();
    entries.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.mode.cmp(&b.mode)));

    let mut fitted = Vec::new();
    let mut failures = Vec::new();
    for entry in entries {
        let mode = config.mode(&entry.mode).expect("validated mode");
        match fit_file(&resolve(base, &entry.path), &entry.parameter) {
            Ok(fit) => fitted.push(Fitted { entry, mode, fit }),
            Err(e) => failures.push(FileFailure {
                file: file_label(entry),
                mode: Some(entry.mode.clone()),
                error: e.to_string(),
            }),
        }
    }

    let mut warnings = Vec::new();
    for f in &fitted {
        if f.fit.degraded {
            warnings.push(format!(
                "{}: refinement did not converge, geometric estimate reported",
                file_label(f.entry)
            ));
        }
    }

    // Temperature table: one file per (temperature, mode).
    let mut by_temp: BTreeMap<u64, Vec<&Fitted<'_>>> = BTreeMap::new();
    for f in &fitted {
        by_temp.entry(f.entry.temperature_mk.to_bits()).or_default().push(f);
    }
    let mut temperatures = Vec::new();
    let mut temp_keys: Vec<f64> = by_temp.keys().map(|k| f64::from_bits(*k)).collect();
    temp_keys.sort_by(f64::total_cmp);
    for t in temp_keys {
        let group = &by_temp[&t.to_bits()];
        let mut chosen = Vec::new();
        for mode in &config.modes {
            let best = group
                .iter()
                .filter(|f| f.mode.name == mode.name)
                .max_by(|a, b| {
                    let (pa, pb) = (preference(a.entry), preference(b.entry));
                    pa.0.cmp(&pb.0)
                        .then(pa.1.total_cmp(&pb.1))
                        .then_with(|| b.entry.path.cmp(&a.entry.path))
                });
            if let Some(f) = best {
                chosen.push(*f);
            }
        }
        temperatures.push(temperature_row(config, t, &chosen, walls, &mut warnings));
    }

    // Power series: annotated files grouped by (mode, temperature).
    let mut power_series = Vec::new();
    for mode in &config.modes {
        let mut temps: Vec<f64> = fitted
            .iter()
            .filter(|f| f.mode.name == mode.name && f.entry.p_in_dbm.is_some())
            .map(|f| f.entry.temperature_mk)
            .collect();
        temps.sort_by(f64::total_cmp);
        temps.dedup();
        for t in temps {
            let mut series = PowerSeriesResult {
                mode: mode.name.clone(),
                temperature_mk: t,
                points: Vec::new(),
                trend: None,
                notes: Vec::new(),
            };
            for f in fitted
                .iter()
                .filter(|f| f.mode.name == mode.name && f.entry.temperature_mk == t && f.entry.p_in_dbm.is_some())
            {
                let point = mode_result(f, walls)
                    .map_err(|e| e.to_string())
                    .and_then(|m| power_point(f, &m).map_err(|e| e.to_string()));
                match point {
                    Ok(p) => series.points.push(p),
                    Err(e) => series.notes.push(format!("{}: {e}", file_label(f.entry))),
                }
            }
            series
                .points
                .sort_by(|a, b| a.avg_photon_number.total_cmp(&b.avg_photon_number));
            let sweep: Vec<SweepPoint> = series
                .points
                .iter()
                .map(|p| SweepPoint {
                    abscissa: p.avg_photon_number,
                    q_d: p.q_d,
                })
                .collect();
            match SweepSeries::new(SweepKind::PhotonNumber, sweep)
                .and_then(|s| photon::power_trend(&s, true))
            {
                Ok(trend) => {
                    if let Some(reason) = &trend.fit_failure {
                        series.notes.push(format!("saturation fit: {reason}"));
                    }
                    series.trend = Some(trend);
                }
                Err(e) => series.notes.push(format!("trend: {e}")),
            }
            power_series.push(series);
        }
    }

    // Q_d against temperature, per mode.
    let mut temperature_trends = Vec::new();
    for mode in &config.modes {
        let points: Vec<SweepPoint> = temperatures
            .iter()
            .filter_map(|row| {
                row.modes.iter().find(|m| m.mode == mode.name).map(|m| SweepPoint {
                    abscissa: row.temperature_k,
                    q_d: m.q_d,
                })
            })
            .collect();
        if points.is_empty() {
            continue;
        }
        let result = SweepSeries::new(SweepKind::Temperature, points)
            .and_then(|s| photon::temperature_trend(&s, DEFAULT_WEAK_FRACTION));
        temperature_trends.push(match result {
            Ok(trend) => TemperatureTrendResult {
                mode: mode.name.clone(),
                trend: Some(trend),
                note: None,
            },
            Err(e) => TemperatureTrendResult {
                mode: mode.name.clone(),
                trend: None,
                note: Some(e.to_string()),
            },
        });
    }

    Report {
        tool: "dielq",
        version: env!("CARGO_PKG_VERSION"),
        walls,
        fits: fitted
            .iter()
            .map(|f| FitRecord {
                file: file_label(f.entry),
                mode: Some(f.mode.name.clone()),
                temperature_mk: Some(f.entry.temperature_mk),
                p_in_dbm: f.entry.p_in_dbm,
                fit: f.fit.clone(),
            })
            .collect(),
        failures,
        temperatures,
        power_series,
        temperature_trends,
        warnings,
    }
}
