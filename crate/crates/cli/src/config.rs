//! Run configuration (TOML). Every physical quantity carries its unit in the
//! key name. See `docs/config.md` for the full schema.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dielq_core::q_budget::BudgetError;
use dielq_core::{
    CouplingSet, CouplingSource, ExternalQ, FillingFactors, ModeKind, ModeSpec, PermittivityTensor,
    Sensitivity, WallModel,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub reference: ReferencePermittivity,
    #[serde(default)]
    pub walls: Walls,
    #[serde(default)]
    pub output: Output,
    pub modes: Vec<ModeConfig>,
    #[serde(default)]
    pub files: Vec<FileEntry>,
}

/// Room-temperature permittivity the frequency shifts are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePermittivity {
    pub eps_perp: f64,
    pub eps_par: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Walls {
    #[serde(default = "default_true")]
    pub lossless: bool,
    pub q_intrinsic: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for Walls {
    fn default() -> Self {
        Self {
            lossless: true,
            q_intrinsic: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub name: String,
    pub kind: ModeKind,
    pub f_reference_hz: f64,
    #[serde(default)]
    pub df_deps_perp_hz: f64,
    #[serde(default)]
    pub df_deps_par_hz: f64,
    #[serde(default)]
    pub p_perp: f64,
    #[serde(default)]
    pub p_par: f64,
    /// Filling factors for the misaligned-sample case.
    pub p_perp_offset: Option<f64>,
    pub p_par_offset: Option<f64>,
    pub q_ext_measured: Vec<ExternalQ>,
    pub q_ext_simulated: Vec<ExternalQ>,
    /// 1-based index of the output port used for the photon number.
    #[serde(default = "default_output_port")]
    pub output_port: usize,
    #[serde(default)]
    pub filling_overrides: Vec<FillingOverride>,
}

fn default_output_port() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FillingOverride {
    pub temperature_mk: f64,
    pub p_perp: Option<f64>,
    pub p_par: Option<f64>,
    pub p_perp_offset: Option<f64>,
    pub p_par_offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: PathBuf,
    pub mode: String,
    pub temperature_mk: f64,
    #[serde(default = "default_parameter")]
    pub parameter: String,
    pub p_in_dbm: Option<f64>,
    pub p_reflected_dbm: Option<f64>,
    pub p_reflected_w: Option<f64>,
    pub p_loss_w: Option<f64>,
}

fn default_parameter() -> String {
    "S21".into()
}

/// Filling factors and their offset-case counterparts at one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fillings {
    pub nominal: FillingFactors,
    pub offset: FillingFactors,
}

impl ModeConfig {
    pub fn spec(&self) -> ModeSpec {
        ModeSpec {
            name: self.name.clone(),
            kind: self.kind,
            f_reference_hz: self.f_reference_hz,
            sensitivity: Sensitivity {
                d_perp_hz: self.df_deps_perp_hz,
                d_par_hz: self.df_deps_par_hz,
            },
            filling: FillingFactors {
                p_perp: self.p_perp,
                p_par: self.p_par,
            },
        }
    }

    pub fn couplings(&self, source: CouplingSource) -> Result<CouplingSet, BudgetError> {
        let ports = match source {
            CouplingSource::Measured => &self.q_ext_measured,
            CouplingSource::Simulated => &self.q_ext_simulated,
        };
        CouplingSet::new(ports.clone(), source)
    }

    /// Fillings at `temperature_mk`, falling back to the mode defaults. A
    /// missing offset case means no filling uncertainty.
    pub fn fillings_at(&self, temperature_mk: f64) -> Fillings {
        let o = self
            .filling_overrides
            .iter()
            .find(|o| o.temperature_mk == temperature_mk);
        let p_perp = o.and_then(|o| o.p_perp).unwrap_or(self.p_perp);
        let p_par = o.and_then(|o| o.p_par).unwrap_or(self.p_par);
        let off_perp = o
            .and_then(|o| o.p_perp_offset)
            .or(self.p_perp_offset)
            .unwrap_or(p_perp);
        let off_par = o.and_then(|o| o.p_par_offset).or(self.p_par_offset).unwrap_or(p_par);
        Fillings {
            nominal: FillingFactors { p_perp, p_par },
            offset: FillingFactors {
                p_perp: off_perp,
                p_par: off_par,
            },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Vec<String>> {
        toml::from_str(text).map_err(|e| vec![e.to_string()])
    }

    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
        Self::from_toml(&text)
    }

    pub fn walls(&self) -> Result<WallModel, BudgetError> {
        WallModel::from_flag(self.walls.lossless, self.walls.q_intrinsic)
    }

    pub fn reference_tensor(&self) -> PermittivityTensor {
        PermittivityTensor {
            eps_perp: self.reference.eps_perp,
            eps_par: self.reference.eps_par,
        }
    }

    pub fn mode(&self, name: &str) -> Option<&ModeConfig> {
        self.modes.iter().find(|m| m.name == name)
    }

    /// Checks the whole configuration and returns every problem found.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if let Err(e) = PermittivityTensor::new(self.reference.eps_perp, self.reference.eps_par) {
            errors.push(format!("reference: {e}"));
        }
        if let Err(e) = self.walls() {
            errors.push(format!("walls: {e}"));
        }
        if self.modes.is_empty() {
            errors.push("no modes defined".into());
        }

        let mut seen = BTreeSet::new();
        for mode in &self.modes {
            if !seen.insert(mode.name.as_str()) {
                errors.push(format!("mode `{}` defined more than once", mode.name));
            }
            if let Err(e) = mode.spec().validate() {
                errors.push(e.to_string());
            }
            for (key, source) in [
                ("q_ext_measured", CouplingSource::Measured),
                ("q_ext_simulated", CouplingSource::Simulated),
            ] {
                if let Err(e) = mode.couplings(source) {
                    errors.push(format!("mode `{}`: {key}: {e}", mode.name));
                }
            }
            match mode.q_ext_measured.get(mode.output_port.wrapping_sub(1)) {
                None => errors.push(format!(
                    "mode `{}`: output_port {} has no entry in q_ext_measured",
                    mode.name, mode.output_port
                )),
                Some(p) if p.is_decoupled() => errors.push(format!(
                    "mode `{}`: output_port {} is decoupled",
                    mode.name, mode.output_port
                )),
                _ => {}
            }
            for (what, value) in [
                ("p_perp_offset", mode.p_perp_offset),
                ("p_par_offset", mode.p_par_offset),
            ] {
                if let Some(v) = value {
                    if !(0.0..=1.0).contains(&v) {
                        errors.push(format!("mode `{}`: {what} = {v} outside [0, 1]", mode.name));
                    }
                }
            }
            let mut temps = BTreeSet::new();
            for o in &mode.filling_overrides {
                if !temps.insert(o.temperature_mk.to_bits()) {
                    errors.push(format!(
                        "mode `{}`: duplicate filling override at {} mK",
                        mode.name, o.temperature_mk
                    ));
                }
                let f = mode.fillings_at(o.temperature_mk);
                let spec = ModeSpec {
                    filling: f.nominal,
                    ..mode.spec()
                };
                if let Err(e) = spec.validate() {
                    errors.push(format!("filling override at {} mK: {e}", o.temperature_mk));
                }
            }
        }

        let mut paths = BTreeSet::new();
        for file in &self.files {
            let shown = file.path.display();
            if self.mode(&file.mode).is_none() {
                errors.push(format!("file `{shown}` references undefined mode `{}`", file.mode));
            }
            if !paths.insert(&file.path) {
                errors.push(format!("file `{shown}` listed more than once"));
            }
            if !(file.temperature_mk >= 0.0 && file.temperature_mk.is_finite()) {
                errors.push(format!("file `{shown}`: temperature_mk must be ≥ 0"));
            }
            if file.p_reflected_dbm.is_some() && file.p_reflected_w.is_some() {
                errors.push(format!(
                    "file `{shown}`: give p_reflected_dbm or p_reflected_w, not both"
                ));
            }
            let has_power_detail =
                file.p_reflected_dbm.is_some() || file.p_reflected_w.is_some() || file.p_loss_w.is_some();
            if has_power_detail && file.p_in_dbm.is_none() {
                errors.push(format!("file `{shown}`: power details given without p_in_dbm"));
            }
            if file.parameter.parse::<dielq_core::trace_io::SParameter>().is_err() {
                errors.push(format!("file `{shown}`: unknown parameter `{}`", file.parameter));
            }
        }
        errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[reference]
eps_perp = 42.5
eps_par = 26.0

[[modes]]
name = "TE01"
kind = "TE"
f_reference_hz = 7.38e9
df_deps_perp_hz = -40.603e6
p_perp = 0.923
p_perp_offset = 0.9211
q_ext_measured = [6e5, 6e5, "decoupled", "decoupled"]
q_ext_simulated = [7e5, 7e5, "decoupled", "decoupled"]

[[modes.filling_overrides]]
temperature_mk = 400
p_perp = 0.92

[[modes]]
name = "TM01"
kind = "TM"
f_reference_hz = 7.73e9
df_deps_par_hz = -64.637e6
p_par = 0.463
q_ext_measured = [2e6, 2e6]
q_ext_simulated = [2.2e6, 2.2e6]

[[files]]
path = "te.s2p"
mode = "TE01"
temperature_mk = 50
"#;

    #[test]
    fn minimal_config_is_valid() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
        assert!(cfg.walls.lossless);
        assert_eq!(cfg.files[0].parameter, "S21");
        let te = cfg.mode("TE01").unwrap();
        assert_eq!(te.q_ext_measured[2], ExternalQ::DECOUPLED);
        assert_eq!(te.fillings_at(400.0).nominal.p_perp, 0.92);
        assert_eq!(te.fillings_at(400.0).offset.p_perp, 0.9211);
        assert_eq!(te.fillings_at(50.0).nominal.p_perp, 0.923);
        let tm = cfg.mode("TM01").unwrap();
        assert_eq!(tm.fillings_at(50.0).offset.p_par, 0.463);
    }

    #[test]
    fn all_errors_collected() {
        let text = MINIMAL
            .replace("mode = \"TE01\"\ntemperature_mk", "mode = \"TE02\"\ntemperature_mk")
            .replace("p_par = 0.463", "p_par = 0.463\np_perp = 0.1");
        let cfg = RunConfig::from_toml(&text).unwrap();
        let errors = cfg.validate();
        assert_eq!(errors.len(), 2, "{errors:?}");
        assert!(errors.iter().any(|e| e.contains("te.s2p") && e.contains("TE02")));
        assert!(errors.iter().any(|e| e.contains("TM01")));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("eps_par = 26.0", "eps_par = 26.0\neps_zz = 1.0");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn decoupled_output_port_rejected() {
        let text = MINIMAL.replace("q_ext_measured = [2e6, 2e6]", "q_ext_measured = [2e6, \"decoupled\"]");
        let errors = RunConfig::from_toml(&text).unwrap().validate();
        assert!(errors.iter().any(|e| e.contains("output_port 2 is decoupled")), "{errors:?}");
    }

    #[test]
    fn documented_example_is_valid() {
        let doc = include_str!("../../../docs/config.md");
        let start = doc.find("```toml\n").expect("example block") + 8;
        let end = start + doc[start..].find("```").expect("block end");
        let config = RunConfig::from_toml(&doc[start..end]).unwrap();
        assert_eq!(config.validate(), Vec::<String>::new());
        assert_eq!(config.files.len(), 2);
    }
}
