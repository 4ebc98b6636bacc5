//! Noiseless synthetic measurement campaign with known material values.
//!
//! The generated directory holds Touchstone traces and a `config.toml` whose
//! pipeline run reproduces the lithium-niobate reference values at 50 mK.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dielq_core::extraction::mixed_mode_q;
use dielq_core::photon::{self, SaturationCurve};
use dielq_core::resonance::{bandwidth_grid, synth_s21};
use dielq_core::trace_io::{write_touchstone, FrequencyUnit, NetworkPoint, OptionLine, TouchstoneDocument};
use dielq_core::{Complex64, ComplexTrace, LossTangent, ReferenceSheet, ResonatorModel};

use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.toml";
pub const TRACE_DIR: &str = "traces";

/// Two-port document carrying `trace` as S21 and S12, with zero reflection.
pub fn transmission_document(trace: &ComplexTrace, comments: Vec<String>) -> TouchstoneDocument {
    let zero = Complex64::new(0.0, 0.0);
    TouchstoneDocument {
        option_line: OptionLine {
            unit: FrequencyUnit::GHz,
            ..OptionLine::default()
        },
        points: trace
            .iter()
            .map(|(f, z)| NetworkPoint {
                frequency_hz: f,
                s: [[zero, z], [z, zero]],
            })
            .collect(),
        comments,
    }
}

const POINTS: usize = 401;
const SPAN_BANDWIDTHS: f64 = 5.0;
const TEMPERATURES_MK: [f64; 3] = [50.0, 200.0, 400.0];
const SWEEP_DBM: [f64; 9] = [-92.0, -87.0, -82.0, -77.0, -72.0, -67.0, -62.0, -57.0, -52.0];
const REFLECTED_FRACTION: f64 = 0.3;

/// Coupling calibrations chosen so that the Q_d interval of the nominal loaded
/// Q is `q_d·(1 ∓ rel)`.
#[derive(Debug, Clone, Copy)]
struct Couplings {
    q_ext_measured: f64,
    q_ext_simulated: f64,
    q_loaded_nominal: f64,
}

impl Couplings {
    fn design(q_d: f64, rel: f64) -> Self {
        let q_ext_measured = 10.0 * q_d;
        let inv_q_l = 1.0 / (q_d * (1.0 - rel)) + 2.0 / q_ext_measured;
        let loss_sim = inv_q_l - 1.0 / (q_d * (1.0 + rel));
        Self {
            q_ext_measured,
            q_ext_simulated: 2.0 / loss_sim,
            q_loaded_nominal: 1.0 / inv_q_l,
        }
    }

    fn losses(&self) -> (f64, f64) {
        (2.0 / self.q_ext_measured, 2.0 / self.q_ext_simulated)
    }

    /// Loaded Q whose interval midpoint equals `q_d`.
    fn q_loaded_for(&self, q_d: f64) -> f64 {
        let (lm, ls) = self.losses();
        let mid = |x: f64| 0.5 * (1.0 / (x - lm) + 1.0 / (x - ls));
        let mut lo = lm.max(ls);
        let mut hi = lo + 2.0 / q_d;
        for _ in 0..200 {
            let x = 0.5 * (lo + hi);
            if x <= lo || x >= hi {
                break;
            }
            if mid(x) > q_d {
                lo = x;
            } else {
                hi = x;
            }
        }
        1.0 / (0.5 * (lo + hi))
    }

    /// Q_UL under the measured calibration.
    fn q_unloaded_measured(&self, q_loaded: f64) -> f64 {
        1.0 / (1.0 / q_loaded - self.losses().0)
    }
}

struct ModeDesign {
    name: &'static str,
    kind: &'static str,
    f_reference_hz: f64,
    d_perp: f64,
    d_par: f64,
    p_perp: f64,
    p_par: f64,
    p_perp_offset: Option<f64>,
    p_par_offset: Option<f64>,
    couplings: Couplings,
}

impl ModeDesign {
    fn f_res(&self, d_eps_perp: f64, d_eps_par: f64) -> f64 {
        self.f_reference_hz + self.d_perp * d_eps_perp + self.d_par * d_eps_par
    }

    fn q_d(&self, tan: LossTangent) -> f64 {
        mixed_mode_q(tan, self.p_perp, self.p_par)
    }

    fn toml(&self, out: &mut String) {
        let _ = writeln!(out, "[[modes]]");
        let _ = writeln!(out, "name = \"{}\"", self.name);
        let _ = writeln!(out, "kind = \"{}\"", self.kind);
        let _ = writeln!(out, "f_reference_hz = {:?}", self.f_reference_hz);
        let _ = writeln!(out, "df_deps_perp_hz = {:?}", self.d_perp);
        let _ = writeln!(out, "df_deps_par_hz = {:?}", self.d_par);
        let _ = writeln!(out, "p_perp = {:?}", self.p_perp);
        let _ = writeln!(out, "p_par = {:?}", self.p_par);
        if let Some(p) = self.p_perp_offset {
            let _ = writeln!(out, "p_perp_offset = {p:?}");
        }
        if let Some(p) = self.p_par_offset {
            let _ = writeln!(out, "p_par_offset = {p:?}");
        }
        let (m, s) = (self.couplings.q_ext_measured, self.couplings.q_ext_simulated);
        let _ = writeln!(out, "q_ext_measured = [{m:?}, {m:?}, \"decoupled\", \"decoupled\"]");
        let _ = writeln!(out, "q_ext_simulated = [{s:?}, {s:?}, \"decoupled\", \"decoupled\"]");
        let _ = writeln!(out, "output_port = 2\n");
    }
}

struct TraceSpec {
    file: String,
    mode: &'static str,
    temperature_mk: f64,
    f_res: f64,
    q_loaded: f64,
    q_ext: f64,
    power: Option<(f64, f64, f64)>,
}

fn write_trace(dir: &Path, spec: &TraceSpec, seed: u64) -> Result<(), CliError> {
    let model = ResonatorModel {
        f_res: spec.f_res,
        q_loaded: spec.q_loaded,
        amplitude: 2.0 * spec.q_loaded / spec.q_ext,
        detuning_angle: 0.3,
        background: Complex64::new(0.002, -0.001),
    };
    let grid = bandwidth_grid(&model, SPAN_BANDWIDTHS, POINTS);
    let trace = synth_s21(&model, &grid, 0.0, seed).map_err(|e| CliError::Data(e.to_string()))?;
    let comments = vec![format!(
        " synthetic {} at {} mK: f_res = {:?} Hz, Q_L = {:?}",
        spec.mode, spec.temperature_mk, spec.f_res, spec.q_loaded
    )];
    let path = dir.join(&spec.file);
    std::fs::write(&path, write_touchstone(&transmission_document(&trace, comments)))
        .map_err(CliError::io(format!("cannot write {}", path.display())))
}

/// Writes the dataset into `dir` and returns the config path.
pub fn generate(dir: &Path) -> Result<PathBuf, CliError> {
    let sheet = ReferenceSheet::bundled();
    let room = sheet.room_permittivity();
    let cold = sheet.permittivity_cold();
    let te = sheet.te_mode();
    let tm = sheet.tm_mode();
    let tan0 = LossTangent {
        tan_perp: sheet.loss_tangent_50mk.perp.value,
        tan_par: sheet.loss_tangent_50mk.par.value,
    };
    let (d_perp0, d_par0) = (cold.eps_perp - room.eps_perp, cold.eps_par - room.eps_par);

    let f_te = sheet.modes.te01.frequency_hz.value;
    let f_tm = sheet.modes.tm01.frequency_hz.value;
    let f_hom = sheet.modes.hom.frequency_hz.value;
    let (hom_d_perp, hom_d_par, hom_p_perp, hom_p_par) = (-20e6, -30e6, 0.35, 0.25);

    let te_q = 1.0 / (te.filling.p_perp * tan0.tan_perp);
    let tm_q = 1.0 / (tm.filling.p_par * tan0.tan_par);
    let modes = [
        ModeDesign {
            name: "TE01",
            kind: "TE",
            f_reference_hz: f_te - te.sensitivity.d_perp_hz * d_perp0,
            d_perp: te.sensitivity.d_perp_hz,
            d_par: 0.0,
            p_perp: te.filling.p_perp,
            p_par: 0.0,
            p_perp_offset: Some(0.9211),
            p_par_offset: None,
            couplings: Couplings::design(te_q, 0.14),
        },
        ModeDesign {
            name: "TM01",
            kind: "TM",
            f_reference_hz: f_tm - tm.sensitivity.d_par_hz * d_par0,
            d_perp: 0.0,
            d_par: tm.sensitivity.d_par_hz,
            p_perp: 0.0,
            p_par: tm.filling.p_par,
            p_perp_offset: None,
            p_par_offset: Some(0.4408),
            couplings: Couplings::design(tm_q, 0.15),
        },
        ModeDesign {
            name: "HOM1",
            kind: "HOM",
            f_reference_hz: f_hom - hom_d_perp * d_perp0 - hom_d_par * d_par0,
            d_perp: hom_d_perp,
            d_par: hom_d_par,
            p_perp: hom_p_perp,
            p_par: hom_p_par,
            p_perp_offset: None,
            p_par_offset: None,
            couplings: Couplings::design(mixed_mode_q(tan0, hom_p_perp, hom_p_par), 0.10),
        },
    ];

    let mut traces = Vec::new();
    for (i, &t_mk) in TEMPERATURES_MK.iter().enumerate() {
        let k = i as f64;
        let d_perp = d_perp0 - 0.002 * k;
        let d_par = d_par0 - 0.001 * k;
        let tan = LossTangent {
            tan_perp: tan0.tan_perp * (1.0 + 0.015 * k),
            tan_par: tan0.tan_par * (1.0 + 0.012 * k),
        };
        for m in &modes {
            if m.kind == "HOM" && i > 0 {
                continue;
            }
            let q_loaded = if i == 0 {
                m.couplings.q_loaded_nominal
            } else {
                m.couplings.q_loaded_for(m.q_d(tan))
            };
            traces.push(TraceSpec {
                file: format!("{TRACE_DIR}/{}_{:03}mK.s2p", m.name.to_lowercase(), t_mk as u32),
                mode: m.name,
                temperature_mk: t_mk,
                f_res: m.f_res(d_perp, d_par),
                q_loaded,
                q_ext: m.couplings.q_ext_measured,
                power: None,
            });
        }
    }

    // TM power sweep at 50 mK with a saturable loss.
    let tm_mode = &modes[1];
    let curve = SaturationCurve {
        l_tls: 0.6 / tm_q,
        n_c: 3e8,
        l_0: 0.7 / tm_q,
    };
    let f_sweep = tm_mode.f_res(d_perp0, d_par0);
    let q_ext2 = tm_mode.couplings.q_ext_measured;
    for p_dbm in SWEEP_DBM {
        let p_in = photon::dbm_to_watts(p_dbm);
        let p_r = REFLECTED_FRACTION * p_in;
        let mut q_d = 1.0 / curve.l_0;
        let (mut q_loaded, mut p_loss) = (0.0, 0.0);
        for _ in 0..200 {
            q_loaded = tm_mode.couplings.q_loaded_for(q_d);
            let q_ul = tm_mode.couplings.q_unloaded_measured(q_loaded);
            let p_t = (p_in - p_r) / (1.0 + q_ext2 / q_ul);
            p_loss = photon::loss_power_from_budget(p_t, q_ext2, q_ul);
            let n = photon::avg_photon_number(p_t, q_ext2, f_sweep).map_err(|e| CliError::Data(e.to_string()))?;
            q_d = curve.q_d(n);
        }
        traces.push(TraceSpec {
            file: format!("{TRACE_DIR}/tm01_050mK_m{:03}dBm.s2p", -p_dbm as i32),
            mode: "TM01",
            temperature_mk: 50.0,
            f_res: f_sweep,
            q_loaded,
            q_ext: q_ext2,
            power: Some((p_dbm, p_r, p_loss)),
        });
    }

    std::fs::create_dir_all(dir.join(TRACE_DIR))
        .map_err(CliError::io(format!("cannot create {}", dir.display())))?;
    let mut config = String::new();
    let _ = writeln!(config, "# Synthetic campaign generated by `dielq synth --dataset`.\n");
    let _ = writeln!(config, "[reference]\neps_perp = {:?}\neps_par = {:?}\n", room.eps_perp, room.eps_par);
    let _ = writeln!(config, "[walls]\nlossless = true\n");
    let _ = writeln!(config, "[output]\ndir = \"results\"\n");
    for m in &modes {
        m.toml(&mut config);
    }
    for (seed, spec) in traces.iter().enumerate() {
        write_trace(dir, spec, seed as u64)?;
        let _ = writeln!(config, "[[files]]");
        let _ = writeln!(config, "path = \"{}\"", spec.file);
        let _ = writeln!(config, "mode = \"{}\"", spec.mode);
        let _ = writeln!(config, "temperature_mk = {:?}", spec.temperature_mk);
        if let Some((p_dbm, p_r, p_loss)) = spec.power {
            let _ = writeln!(config, "p_in_dbm = {p_dbm:?}");
            let _ = writeln!(config, "p_reflected_w = {p_r:?}");
            let _ = writeln!(config, "p_loss_w = {p_loss:?}");
        }
        config.push('\n');
    }
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, config).map_err(CliError::io(format!("cannot write {}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_design_hits_interval() {
        let c = Couplings::design(62_627.0, 0.14);
        let (lm, ls) = c.losses();
        let x = 1.0 / c.q_loaded_nominal;
        let (qa, qb) = (1.0 / (x - lm), 1.0 / (x - ls));
        assert!((0.5 * (qa + qb) / 62_627.0 - 1.0).abs() < 1e-12);
        assert!((0.5 * (qb - qa).abs() / 62_627.0 - 0.14).abs() < 1e-12);
    }

    #[test]
    fn loaded_q_solver_inverts_midpoint() {
        let c = Couplings::design(1.7e5, 0.15);
        for target in [1.2e5, 1.7e5, 2.5e5] {
            let x = 1.0 / c.q_loaded_for(target);
            let (lm, ls) = c.losses();
            let mid = 0.5 * (1.0 / (x - lm) + 1.0 / (x - ls));
            assert!((mid / target - 1.0).abs() < 1e-10, "{mid} vs {target}");
        }
    }
}
