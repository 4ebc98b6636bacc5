use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dielq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dielq")).args(args).output().expect("run dielq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_file(path: &Path, q: &str) {
    let o = dielq(&["synth", "--out", p(path), "--f-res", "7.2e9", "--q-loaded", q, "--detuning", "-0.4"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn fit_recovers_synthetic_q() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("a.s2p");
    synth_file(&file, "123456");
    let o = dielq(&["fit", p(&file)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let fit = &v["fits"][0]["fit"];
    assert!((fit["q_loaded"].as_f64().unwrap() / 123456.0 - 1.0).abs() < 1e-6);
    assert!((fit["f_res"].as_f64().unwrap() / 7.2e9 - 1.0).abs() < 1e-9);
    assert!((fit["detuning_angle"].as_f64().unwrap() + 0.4).abs() < 1e-6);
}

#[test]
fn fit_without_files_is_usage_error() {
    assert_eq!(dielq(&["fit"]).status.code(), Some(2));
}

#[test]
fn fit_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.s2p");
    let bad = tmp.path().join("bad.s2p");
    synth_file(&good, "50000");
    std::fs::write(&bad, "# GHz S RI R 50\n7.2 0 0 oops\n").unwrap();
    let o = dielq(&["fit", p(&good), p(&bad), p(&tmp.path().join("missing.s2p"))]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["fits"].as_array().unwrap().len(), 1);
    assert_eq!(v["failures"].as_array().unwrap().len(), 2);
    assert!(stderr(&o).contains("bad.s2p"));
}

#[test]
fn fit_reads_csv_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let s2p = tmp.path().join("a.s2p");
    synth_file(&s2p, "80000");
    let doc = dielq_core::trace_io::parse_touchstone(&std::fs::read_to_string(&s2p).unwrap()).unwrap();
    let mut csv = String::from("frequency_hz,re,im\n");
    for pt in &doc.points {
        let z = pt.get(dielq_core::trace_io::SParameter::S21);
        csv.push_str(&format!("{:e},{:e},{:e}\n", pt.frequency_hz, z.re, z.im));
    }
    let file = tmp.path().join("a.csv");
    std::fs::write(&file, csv).unwrap();
    let o = dielq(&["fit", p(&file)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["fits"][0]["fit"]["q_loaded"].as_f64().unwrap() / 80000.0 - 1.0).abs() < 1e-6);
}

fn dataset(dir: &Path) -> std::path::PathBuf {
    let o = dielq(&["synth", "--dataset", p(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("config.toml")
}

#[test]
fn undefined_mode_names_file_and_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(&tmp.path().join("ds"));
    let text = std::fs::read_to_string(&config).unwrap();
    let broken = text.replacen("mode = \"TE01\"", "mode = \"TE02\"", 1);
    std::fs::write(&config, broken).unwrap();
    let out = tmp.path().join("out");
    let o = dielq(&["pipeline", "--config", p(&config), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("traces/te01_050mK.s2p") && err.contains("TE02"), "{err}");
    assert!(!out.exists(), "nothing is processed after a validation failure");
}

#[test]
fn pipeline_reports_missing_trace_as_partial() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(&tmp.path().join("ds"));
    std::fs::remove_file(tmp.path().join("ds/traces/hom1_050mK.s2p")).unwrap();
    let out = tmp.path().join("out");
    let o = dielq(&["pipeline", "--config", p(&config), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failures"][0]["file"], "traces/hom1_050mK.s2p");
    assert!(report["temperatures"][0]["permittivity"]["eps_perp"].is_number());
}

#[test]
fn pipeline_default_output_dir_and_csv_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(&tmp.path().join("ds"));
    let o = dielq(&["pipeline", "--config", p(&config)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let results = tmp.path().join("ds/results");
    let first_line = |name: &str| {
        std::fs::read_to_string(results.join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(
        first_line("temperature.csv"),
        "temperature_K,eps_perp,eps_par,tan_perp,tan_perp_unc,tan_par,tan_par_unc"
    );
    assert!(first_line("q_factors.csv").starts_with("temperature_K,mode,f_res_hz"));
    assert!(first_line("photons.csv").starts_with("mode,temperature_K,p_in_dbm,avg_photon_number"));
    assert_eq!(
        std::fs::read_to_string(results.join("photons.csv")).unwrap().lines().count(),
        10
    );
}

/// Pipeline numbers equal the individual verbs applied to the same inputs.
#[test]
fn pipeline_equals_stage_composition() {
    let tmp = tempfile::tempdir().unwrap();
    let config = dataset(&tmp.path().join("ds"));
    let out = tmp.path().join("out");
    assert!(dielq(&["pipeline", "--config", p(&config), "--out", p(&out)]).status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let row = &report["temperatures"][0];
    let te = row["modes"].as_array().unwrap().iter().find(|m| m["mode"] == "TE01").unwrap();
    let tm = row["modes"].as_array().unwrap().iter().find(|m| m["mode"] == "TM01").unwrap();

    let fit = dielq(&["fit", p(&tmp.path().join("ds/traces/te01_050mK.s2p"))]);
    let fit: Value = serde_json::from_str(&stdout(&fit)).unwrap();
    assert_eq!(fit["fits"][0]["fit"]["q_loaded"], te["q_loaded"]);

    let cfg = dielq_cli::RunConfig::load(&config).unwrap();
    let mode = cfg.mode("TE01").unwrap();
    let q_ext: Vec<String> = mode.q_ext_measured.iter().map(|q| q.to_string()).collect();
    let q_l = fit["fits"][0]["fit"]["q_loaded"].as_f64().unwrap().to_string();
    let mut args = vec!["budget", "--q-loaded", q_l.as_str(), "--q-ext"];
    args.extend(q_ext.iter().map(String::as_str));
    let b: Value = serde_json::from_str(&stdout(&dielq(&args))).unwrap();
    let rel = |a: &Value, b: &Value| (a.as_f64().unwrap() / b.as_f64().unwrap() - 1.0).abs();
    assert!(rel(&b["q_unloaded"], &te["budget_measured"]["q_unloaded"]) < 1e-8);

    let f_te = format!("TE01={}", te["f_res_hz"]);
    let f_tm = format!("TM01={}", tm["f_res_hz"]);
    let q_te = format!("TE01={}", te["q_d"]["value"]);
    let o = dielq(&["extract", "--config", p(&config), "--f-res", &f_te, "--f-res", &f_tm, "--q-d", &q_te]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((e["permittivity"]["eps_perp"].as_f64().unwrap() - 47.0).abs() < 1e-6);
    assert!((e["permittivity"]["eps_par"].as_f64().unwrap() - 28.0).abs() < 1e-6);
    assert!(rel(&e["tangents"][0]["value"], &row["tan_perp"]["value"]) < 1e-8);
}

#[test]
fn uncertainty_verb() {
    let o = dielq(&["uncertainty", "--q-d-a", "86", "--q-d-b", "114", "--p", "0.923", "--p-offset", "0.9211"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["q_d"]["value"], 100.0);
    assert_eq!(v["q_d_rel"], 0.14);
    assert!((v["tan_rel"].as_f64().unwrap() - 0.14).abs() < 0.005);
    assert_eq!(dielq(&["uncertainty", "--q-d-a", "-1", "--q-d-b", "2"]).status.code(), Some(2));
}

#[test]
fn photons_verb() {
    let o = dielq(&["photons", "--p-in-dbm", "-72", "--q-ext2", "1e6", "--f-res", "7.6e9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let n = v["avg_photon_number"].as_f64().unwrap();
    let expected = dielq_core::photon::avg_photon_number(10f64.powf(-10.2), 1e6, 7.6e9).unwrap();
    assert!((n / expected - 1.0).abs() < 1e-8);

    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("t.csv");
    std::fs::write(&table, "abscissa,q_d,q_d_unc\n0.05,6e4,8e3\n0.2,6.1e4,8e3\n0.4,6.2e4,8e3\n").unwrap();
    let o = dielq(&["photons", "--series", p(&table), "--kind", "temperature"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["weak_dependence"], true);
    assert_eq!(dielq(&["photons", "--q-ext2", "1e6"]).status.code(), Some(2));
}

#[test]
fn selfcheck_pristine() {
    let o = dielq(&["selfcheck"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn selfcheck_verbose_lists_every_check() {
    let o = dielq(&["selfcheck", "--verbose"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let sheet = dielq_core::ReferenceSheet::bundled().self_check();
    assert_eq!(text.matches("PASS ").count(), sheet.checks.len());
    assert!(text.contains("expected") && text.contains("got"));
}

#[test]
fn selfcheck_corrupted_sheet() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("sheet.toml");
    let text = dielq_core::ReferenceSheet::bundled_text().replace("1.73e-5", "2.6e-5");
    assert_ne!(text, dielq_core::ReferenceSheet::bundled_text());
    std::fs::write(&bad, text).unwrap();
    let o = dielq(&["selfcheck", "--reference", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"), "{}", stdout(&o));

    std::fs::write(&bad, "format_version = 1\n").unwrap();
    assert_eq!(dielq(&["selfcheck", "--reference", p(&bad)]).status.code(), Some(2));
}
