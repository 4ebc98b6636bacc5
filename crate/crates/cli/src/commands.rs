//! Command-line verbs. Each handler writes to the given streams and returns
//! the process exit code.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dielq_core::photon::{self, DEFAULT_WEAK_FRACTION};
use dielq_core::resonance::{bandwidth_grid, synth_s21};
use dielq_core::trace_io::write_touchstone;
use dielq_core::uncertainty::{self, ExtremeCasePair};
use dielq_core::{
    Complex64, CouplingSet, CouplingSource, ExternalQ, QBudget, ReferenceSheet, ResonatorModel, SweepKind,
    WallModel,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::numfmt::{fmt, to_json};
use crate::pipeline::{self, FileFailure, FitRecord};
use crate::{dataset, report};

#[derive(Debug, Parser)]
#[command(name = "dielq", version, about = "Resonant-cavity characterization of anisotropic dielectrics")]
pub struct Cli {
    /// Print progress and per-check details to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the one-pole model to transmission traces and print JSON.
    Fit(FitArgs),
    /// Q budget for one loaded Q.
    Budget(BudgetArgs),
    /// Permittivity and loss tangents from resonance frequencies.
    Extract(ExtractArgs),
    /// Interval Q_d and the loss-tangent uncertainty.
    Uncertainty(UncertaintyArgs),
    /// Photon number of one drive level, or the trend of a sweep table.
    Photons(PhotonsArgs),
    /// Run every stage over a config file and write the report files.
    Pipeline(PipelineArgs),
    /// Write a synthetic trace, or a complete synthetic campaign.
    Synth(SynthArgs),
    /// Check the internal consistency of the reference sheet.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, default_value = "S21")]
    pub parameter: String,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub q_loaded: f64,
    /// External Q per port; `decoupled` for a port without coupling.
    #[arg(long = "q-ext", required = true, num_args = 1.., value_parser = parse_external_q)]
    pub q_ext: Vec<ExternalQ>,
    /// Intrinsic wall Q; without it the walls count as lossless.
    #[arg(long)]
    pub q_intrinsic: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Fitted resonance, `MODE=HZ`. Repeat for each mode.
    #[arg(long = "f-res", required = true, value_parser = parse_assignment)]
    pub f_res: Vec<(String, f64)>,
    /// Dielectric Q, `MODE=Q`, for loss tangents.
    #[arg(long = "q-d", value_parser = parse_assignment)]
    pub q_d: Vec<(String, f64)>,
    /// Temperature for filling-factor overrides.
    #[arg(long)]
    pub temperature_mk: Option<f64>,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    /// Q_d under the first coupling calibration.
    #[arg(long, allow_hyphen_values = true)]
    pub q_d_a: f64,
    /// Q_d under the second coupling calibration.
    #[arg(long, allow_hyphen_values = true)]
    pub q_d_b: f64,
    #[arg(long, requires = "p_offset")]
    pub p: Option<f64>,
    /// Filling factor of the offset sample placement.
    #[arg(long, requires = "p")]
    pub p_offset: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SeriesKind {
    Temperature,
    PhotonNumber,
}

#[derive(Debug, Args)]
pub struct PhotonsArgs {
    #[arg(long, conflicts_with = "series", required_unless_present = "series", allow_hyphen_values = true)]
    pub p_in_dbm: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub p_reflected_w: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_loss_w: f64,
    /// External Q of the output port.
    #[arg(long, required_unless_present = "series")]
    pub q_ext2: Option<f64>,
    #[arg(long, required_unless_present = "series")]
    pub f_res: Option<f64>,
    /// CSV with columns abscissa, q_d, q_d_unc.
    #[arg(long, requires = "kind")]
    pub series: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<SeriesKind>,
    /// Skip the saturation fit of a photon-number series.
    #[arg(long)]
    pub no_fit: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `[output] dir` of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Write a full campaign (traces and config.toml) into this directory.
    #[arg(long, conflicts_with_all = ["out", "f_res", "q_loaded"])]
    pub dataset: Option<PathBuf>,
    /// Touchstone file to write.
    #[arg(long, required_unless_present = "dataset")]
    pub out: Option<PathBuf>,
    #[arg(long, required_unless_present = "dataset")]
    pub f_res: Option<f64>,
    #[arg(long, required_unless_present = "dataset")]
    pub q_loaded: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub amplitude: f64,
    /// Detuning angle, radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub detuning: f64,
    #[arg(long, default_value_t = 801)]
    pub points: usize,
    /// Sweep span in bandwidths.
    #[arg(long, default_value_t = 10.0)]
    pub bandwidths: f64,
    /// Standard deviation of the real and imaginary noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Reference sheet to check instead of the bundled one.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

fn parse_external_q(s: &str) -> Result<ExternalQ, String> {
    if s.eq_ignore_ascii_case("decoupled") {
        return Ok(ExternalQ::DECOUPLED);
    }
    let q: f64 = s.parse().map_err(|_| format!("expected a number or `decoupled`, got `{s}`"))?;
    Ok(ExternalQ::Finite(q))
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected MODE=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("bad number in `{s}`"))?;
    Ok((name.trim().to_string(), value))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(CliError::io("cannot write output"))
}

fn json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = to_json(value).map_err(|e| CliError::Data(e.to_string()))?;
    emit(out, &text)
}

/// Runs a parsed command line; errors are reported on `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Fit(a) => fit(a, out, err),
        Command::Budget(a) => budget(a, out),
        Command::Extract(a) => extract(a, out),
        Command::Uncertainty(a) => uncertainty_cmd(a, out),
        Command::Photons(a) => photons(a, out),
        Command::Pipeline(a) => pipeline_cmd(a, verbose, out, err),
        Command::Synth(a) => synth(a, out),
        Command::Selfcheck(a) => selfcheck(a, verbose, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct FitOutput {
    fits: Vec<FitRecord>,
    failures: Vec<FileFailure>,
}

fn fit(a: FitArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    if a.parameter.parse::<dielq_core::trace_io::SParameter>().is_err() {
        return Err(CliError::Usage(format!("unknown parameter `{}`", a.parameter)));
    }
    let mut output = FitOutput {
        fits: Vec::new(),
        failures: Vec::new(),
    };
    for path in &a.files {
        let file = path.display().to_string();
        match pipeline::fit_file(path, &a.parameter) {
            Ok(fit) => output.fits.push(FitRecord {
                file,
                mode: None,
                temperature_mk: None,
                p_in_dbm: None,
                fit,
            }),
            Err(e) => {
                let _ = writeln!(err, "{file}: {e}");
                output.failures.push(FileFailure {
                    file,
                    mode: None,
                    error: e.to_string(),
                });
            }
        }
    }
    json(out, &output)?;
    Ok(if output.failures.is_empty() { 0 } else { 1 })
}

fn budget(a: BudgetArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let usage = |e: dielq_core::q_budget::BudgetError| CliError::Usage(e.to_string());
    let walls = WallModel::from_flag(a.q_intrinsic.is_none(), a.q_intrinsic).map_err(usage)?;
    let set = CouplingSet::new(a.q_ext, CouplingSource::Measured).map_err(usage)?;
    let b = QBudget::compute(a.q_loaded, &set, walls).map_err(|e| CliError::Data(e.to_string()))?;
    json(out, &b)?;
    Ok(0)
}

#[derive(Serialize)]
struct ExtractOutput {
    permittivity: Option<pipeline::PermittivityResult>,
    tangents: Vec<pipeline::TangentResult>,
    notes: Vec<String>,
}

fn extract(a: ExtractArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let config = RunConfig::load(&a.config).map_err(CliError::Config)?;
    let errors = config.validate();
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let mut shifts = BTreeMap::new();
    for (name, f) in &a.f_res {
        let mode = config
            .mode(name)
            .ok_or_else(|| CliError::Usage(format!("mode `{name}` is not defined in the config")))?;
        shifts.insert(name.clone(), f - mode.f_reference_hz);
    }
    let mut output = ExtractOutput {
        permittivity: None,
        tangents: Vec::new(),
        notes: Vec::new(),
    };
    match pipeline::extraction_stage(&config, &shifts) {
        Ok(p) => output.permittivity = Some(p),
        Err(e) => output.notes.push(format!("permittivity: {e}")),
    }
    for (name, q_d) in &a.q_d {
        let mode = config
            .mode(name)
            .ok_or_else(|| CliError::Usage(format!("mode `{name}` is not defined in the config")))?;
        let fill = mode.fillings_at(a.temperature_mk.unwrap_or(f64::NAN));
        let (p, off) = match mode.kind {
            dielq_core::ModeKind::TE => (fill.nominal.p_perp, fill.offset.p_perp),
            dielq_core::ModeKind::TM => (fill.nominal.p_par, fill.offset.p_par),
            dielq_core::ModeKind::HOM => {
                output.notes.push(format!("{name}: loss tangents come from TE or TM modes"));
                continue;
            }
        };
        match pipeline::tangent_stage(name, dielq_core::UncertainValue::exact(*q_d), p, off) {
            Some(t) => output.tangents.push(t),
            None => output.notes.push(format!("{name}: Q_d must be positive")),
        }
    }
    json(out, &output)?;
    Ok(if output.permittivity.is_some() { 0 } else { 1 })
}

#[derive(Serialize)]
struct UncertaintyOutput {
    q_d: dielq_core::UncertainValue,
    q_d_rel: f64,
    filling_rel: Option<f64>,
    tan_rel: Option<f64>,
}

fn uncertainty_cmd(a: UncertaintyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let q_d = ExtremeCasePair::new(a.q_d_a, a.q_d_b)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .interval();
    let q_d_rel = q_d.rel_unc().unwrap_or(f64::NAN);
    let filling_rel = match (a.p, a.p_offset) {
        (Some(p), Some(off)) if p > 0.0 => uncertainty::filling_uncertainty(p, off).rel_unc(),
        (Some(p), _) => return Err(CliError::Usage(format!("filling factor must be positive, got {p}"))),
        _ => None,
    };
    json(
        out,
        &UncertaintyOutput {
            q_d,
            q_d_rel,
            filling_rel,
            tan_rel: filling_rel.map(|r| uncertainty::combine_rel(r, q_d_rel)),
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct PhotonPointOutput {
    p_in_w: f64,
    p_transmitted_w: f64,
    avg_photon_number: f64,
}

fn photons(a: PhotonsArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let data = |e: photon::PhotonError| CliError::Data(e.to_string());
    if let Some(path) = &a.series {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("cannot read {}", path.display())))?;
        let kind = match a.kind.expect("clap enforces --kind") {
            SeriesKind::Temperature => SweepKind::Temperature,
            SeriesKind::PhotonNumber => SweepKind::PhotonNumber,
        };
        let series = photon::parse_sweep_csv(&text, kind).map_err(data)?;
        match kind {
            SweepKind::Temperature => json(
                out,
                &photon::temperature_trend(&series, DEFAULT_WEAK_FRACTION).map_err(data)?,
            )?,
            SweepKind::PhotonNumber => json(out, &photon::power_trend(&series, !a.no_fit).map_err(data)?)?,
        }
        return Ok(0);
    }
    let p_in = photon::dbm_to_watts(a.p_in_dbm.expect("clap enforces --p-in-dbm"));
    let p_t = photon::transmitted_power(p_in, a.p_reflected_w, a.p_loss_w).map_err(data)?;
    let n = photon::avg_photon_number(
        p_t,
        a.q_ext2.expect("clap enforces --q-ext2"),
        a.f_res.expect("clap enforces --f-res"),
    )
    .map_err(data)?;
    json(
        out,
        &PhotonPointOutput {
            p_in_w: p_in,
            p_transmitted_w: p_t,
            avg_photon_number: n,
        },
    )?;
    Ok(0)
}

/// Loads and validates a run config; the second value is its directory.
pub fn load_config(path: &Path) -> Result<(RunConfig, PathBuf), CliError> {
    let config = RunConfig::load(path).map_err(CliError::Config)?;
    let errors = config.validate();
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

fn pipeline_cmd(a: PipelineArgs, verbose: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let (config, base) = load_config(&a.config)?;
    let dir = match (&a.out, &config.output.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => pipeline::resolve(&base, d),
        (None, None) => base.join("results"),
    };
    if verbose {
        let _ = writeln!(err, "fitting {} files from {}", config.files.len(), a.config.display());
    }
    let result = pipeline::run(&config, &base);
    report::write_all(&result, &dir)?;
    for f in &result.failures {
        let _ = writeln!(err, "{}: {}", f.file, f.error);
    }
    for w in &result.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    emit(out, &report::text_report(&result))?;
    emit(out, &format!("\nreport written to {}\n", dir.display()))?;
    Ok(if result.partial() { 1 } else { 0 })
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if let Some(dir) = &a.dataset {
        let config = dataset::generate(dir)?;
        emit(out, &format!("{}\n", config.display()))?;
        return Ok(0);
    }
    let model = ResonatorModel {
        f_res: a.f_res.expect("clap enforces --f-res"),
        q_loaded: a.q_loaded.expect("clap enforces --q-loaded"),
        amplitude: a.amplitude,
        detuning_angle: a.detuning,
        background: Complex64::new(0.0, 0.0),
    };
    if !(model.f_res > 0.0 && model.q_loaded > 0.0 && a.bandwidths > 0.0) {
        return Err(CliError::Usage("f-res, q-loaded and bandwidths must be positive".into()));
    }
    let grid = bandwidth_grid(&model, a.bandwidths, a.points);
    let trace = synth_s21(&model, &grid, a.noise, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let comment = format!(
        " synthetic: f_res = {} Hz, Q_L = {}, noise = {}, seed = {}",
        model.f_res, model.q_loaded, a.noise, a.seed
    );
    let path = a.out.expect("clap enforces --out");
    std::fs::write(&path, write_touchstone(&dataset::transmission_document(&trace, vec![comment])))
        .map_err(CliError::io(format!("cannot write {}", path.display())))?;
    Ok(0)
}

fn selfcheck(a: SelfcheckArgs, verbose: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let sheet = match &a.reference {
        Some(path) => ReferenceSheet::load(path).map_err(|e| CliError::Config(vec![e.to_string()]))?,
        None => ReferenceSheet::bundled(),
    };
    let check = sheet.self_check();
    for c in &check.checks {
        if verbose || !c.passed {
            let detail = match (&c.actual, &c.error) {
                (_, Some(e)) => e.clone(),
                (Some(v), None) => format!(
                    "expected {} got {} (tolerance {} {:?})",
                    fmt(c.expected),
                    fmt(*v),
                    fmt(c.tolerance),
                    c.tolerance_kind
                ),
                (None, None) => String::new(),
            };
            let status = if c.passed { "PASS" } else { "FAIL" };
            emit(out, &format!("{status} {}: {detail}\n", c.name))?;
        }
    }
    let failed = check.failures().count();
    emit(
        out,
        &format!("{} of {} checks passed\n", check.checks.len() - failed, check.checks.len()),
    )?;
    Ok(if failed == 0 { 0 } else { 1 })
}
