//! Report files: `report.json`, `report.txt` and three CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;
use crate::numfmt::{fmt, fmt_opt, to_json};
use crate::pipeline::Report;

pub const JSON_FILE: &str = "report.json";
pub const TEXT_FILE: &str = "report.txt";
pub const TEMPERATURE_CSV: &str = "temperature.csv";
pub const Q_FACTORS_CSV: &str = "q_factors.csv";
pub const PHOTONS_CSV: &str = "photons.csv";

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn temperature_csv(report: &Report) -> String {
    let rows = report
        .temperatures
        .iter()
        .map(|r| {
            let eps = r.permittivity.as_ref();
            vec![
                fmt(r.temperature_k),
                fmt_opt(eps.map(|e| e.eps_perp)),
                fmt_opt(eps.map(|e| e.eps_par)),
                fmt_opt(r.tan_perp.as_ref().map(|t| t.value)),
                fmt_opt(r.tan_perp.as_ref().map(|t| t.abs_unc)),
                fmt_opt(r.tan_par.as_ref().map(|t| t.value)),
                fmt_opt(r.tan_par.as_ref().map(|t| t.abs_unc)),
            ]
        })
        .collect();
    csv_text(
        &["temperature_K", "eps_perp", "eps_par", "tan_perp", "tan_perp_unc", "tan_par", "tan_par_unc"],
        rows,
    )
}

pub fn q_factors_csv(report: &Report) -> String {
    let mut rows = Vec::new();
    for r in &report.temperatures {
        for m in &r.modes {
            rows.push(vec![
                fmt(r.temperature_k),
                m.mode.clone(),
                fmt(m.f_res_hz),
                fmt(m.q_loaded),
                fmt(m.budget_measured.q_unloaded),
                fmt(m.budget_simulated.q_unloaded),
                fmt(m.q_d.value),
                fmt(m.q_d.abs_unc),
            ]);
        }
    }
    csv_text(
        &[
            "temperature_K",
            "mode",
            "f_res_hz",
            "q_loaded",
            "q_unloaded_measured",
            "q_unloaded_simulated",
            "q_d",
            "q_d_unc",
        ],
        rows,
    )
}

pub fn photons_csv(report: &Report) -> String {
    let mut rows = Vec::new();
    for s in &report.power_series {
        for p in &s.points {
            rows.push(vec![
                s.mode.clone(),
                fmt(s.temperature_mk / 1000.0),
                fmt(p.p_in_dbm),
                fmt(p.avg_photon_number),
                fmt(p.q_d.value),
                fmt(p.q_d.abs_unc),
            ]);
        }
    }
    csv_text(
        &["mode", "temperature_K", "p_in_dbm", "avg_photon_number", "q_d", "q_d_unc"],
        rows,
    )
}

/// Human-readable summary.
pub fn text_report(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", report.tool, report.version);
    let _ = writeln!(s, "walls: {:?}", report.walls);
    let _ = writeln!(s, "\nfitted files: {}, failed: {}", report.fits.len(), report.failures.len());
    for f in &report.failures {
        let _ = writeln!(s, "  FAILED {}: {}", f.file, f.error);
    }

    for row in &report.temperatures {
        let _ = writeln!(s, "\n== {} mK ==", fmt(row.temperature_mk));
        let _ = writeln!(
            s,
            "  {:<8} {:>16} {:>14} {:>14} {:>14} {:>14} {:>12}",
            "mode", "f_res [Hz]", "Q_L", "Q_UL meas", "Q_UL sim", "Q_d", "±"
        );
        for m in &row.modes {
            let _ = writeln!(
                s,
                "  {:<8} {:>16} {:>14} {:>14} {:>14} {:>14} {:>12}",
                m.mode,
                fmt(m.f_res_hz),
                fmt(m.q_loaded),
                fmt(m.budget_measured.q_unloaded),
                fmt(m.budget_simulated.q_unloaded),
                fmt(m.q_d.value),
                fmt(m.q_d.abs_unc)
            );
        }
        if let Some(p) = &row.permittivity {
            let _ = writeln!(
                s,
                "  eps_perp = {}  eps_par = {}  (modes {}, cond {}, residual {} Hz)",
                fmt(p.eps_perp),
                fmt(p.eps_par),
                p.modes_used.join(", "),
                fmt(p.condition_number),
                fmt(p.residual_norm_hz)
            );
        }
        for (label, t) in [("tan_perp", &row.tan_perp), ("tan_par", &row.tan_par)] {
            if let Some(t) = t {
                let _ = writeln!(
                    s,
                    "  {label} = {} ± {}  (from {}, rel: Q_d {}, filling {})",
                    fmt(t.value),
                    fmt(t.abs_unc),
                    t.mode,
                    fmt(t.rel_unc_q_d),
                    fmt(t.rel_unc_filling)
                );
            }
        }
        for h in &row.hom_checks {
            let _ = writeln!(
                s,
                "  {}: Q_d measured {} vs predicted {} ({:+.2}%)",
                h.mode,
                fmt(h.q_d_measured),
                fmt(h.q_d_predicted),
                100.0 * h.relative_difference
            );
        }
        for n in &row.notes {
            let _ = writeln!(s, "  note: {n}");
        }
    }

    for series in &report.power_series {
        let _ = writeln!(s, "\n== power sweep {} at {} mK ==", series.mode, fmt(series.temperature_mk));
        let _ = writeln!(s, "  {:>10} {:>14} {:>14} {:>12}", "P_in[dBm]", "<n>", "Q_d", "±");
        for p in &series.points {
            let _ = writeln!(
                s,
                "  {:>10} {:>14} {:>14} {:>12}",
                fmt(p.p_in_dbm),
                fmt(p.avg_photon_number),
                fmt(p.q_d.value),
                fmt(p.q_d.abs_unc)
            );
        }
        if let Some(t) = &series.trend {
            let _ = writeln!(s, "  monotonicity (Spearman) = {}", fmt(t.monotonicity));
            if let Some(fit) = &t.saturation_fit {
                let _ = writeln!(
                    s,
                    "  saturation fit (phenomenological): L_tls = {}, n_c = {}, L_0 = {}, rms rel. residual {}",
                    fmt(fit.curve.l_tls),
                    fmt(fit.curve.n_c),
                    fmt(fit.curve.l_0),
                    fmt(fit.rms_relative_residual)
                );
            }
        }
        for n in &series.notes {
            let _ = writeln!(s, "  note: {n}");
        }
    }

    if !report.temperature_trends.is_empty() {
        let _ = writeln!(s, "\n== Q_d against temperature ==");
        for t in &report.temperature_trends {
            match (&t.trend, &t.note) {
                (Some(tr), _) => {
                    let _ = writeln!(
                        s,
                        "  {}: slope {} ± {} per K, relative variation {}, weak dependence: {}",
                        t.mode,
                        fmt(tr.slope),
                        fmt_opt(tr.slope_unc),
                        fmt(tr.relative_variation),
                        if tr.weak_dependence { "yes" } else { "no" }
                    );
                }
                (None, Some(note)) => {
                    let _ = writeln!(s, "  {}: {note}", t.mode);
                }
                (None, None) => {}
            }
        }
    }

    if !report.warnings.is_empty() {
        let _ = writeln!(s, "\nwarnings:");
        for w in &report.warnings {
            let _ = writeln!(s, "  {w}");
        }
    }
    s
}

/// Writes every report file into `dir`, creating it if needed.
pub fn write_all(report: &Report, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
    let json = to_json(report).map_err(|e| CliError::Data(format!("cannot serialize report: {e}")))?;
    let files = [
        (JSON_FILE, json),
        (TEXT_FILE, text_report(report)),
        (TEMPERATURE_CSV, temperature_csv(report)),
        (Q_FACTORS_CSV, q_factors_csv(report)),
        (PHOTONS_CSV, photons_csv(report)),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(CliError::io(format!("cannot write {}", path.display())))?;
    }
    Ok(())
}
