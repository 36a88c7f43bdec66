use std::path::Path;
use std::process::{Command, Output};

use detlab::cli::{config_from_report, execute, parse_eps_list, CommandName, RunArgs, EXIT_CONTRACT, EXIT_OK, EXIT_USAGE};

fn detlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detlab")).args(args).env_remove("DETLAB_DEFAULT_DEPTH").output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn passing_run_exits_zero_with_json_report() {
    let out = detlab(&["exponents", "--p", "2", "--n", "3"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["command"], "exponents");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    let results = v["results"].as_array().unwrap();
    assert!(!results.is_empty());
    for r in results {
        for key in ["check", "value", "target", "tolerance", "pass"] {
            assert!(r.get(key).is_some(), "missing {key} in {r}");
        }
    }
}

#[test]
fn failed_contract_exits_one() {
    // At ε = 1/4 the smoothed cone carries only 80% of the atom.
    let out = detlab(&["hardy-scan", "--n", "2", "--eps-list", "0.25,0.2"]);
    assert_eq!(out.status.code(), Some(EXIT_CONTRACT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mass_relative_error"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(detlab(&["counterexample", "--bogus"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(detlab(&["counterexample", "--n", "3", "--x0", "0,0"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(detlab(&["exponents", "--format", "csv"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(detlab(&["fields-check", "--alpha=-0.5"]).status.code(), Some(EXIT_USAGE));
    let bad_field = r#"{"family":"f_alpha","n":2,"alpha":0.5,"extra":1}"#;
    assert_eq!(detlab(&["fields-check", "--field", bad_field]).status.code(), Some(EXIT_USAGE));
    assert_eq!(detlab(&["hardy-scan", "--eps-list", "0.01,0.02"]).status.code(), Some(EXIT_USAGE));
}

#[test]
fn replay_reproduces_json_and_csv_reports() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("c.json", vec!["counterexample", "--p", "1", "--n", "2", "--eps", "0.5", "--seed", "9"]),
        ("h.csv", vec!["hardy-scan", "--n", "2", "--format", "csv"]),
    ] {
        let path = dir.path().join(name);
        let mut full = args.clone();
        full.extend(["--out", path_str(&path)]);
        assert_eq!(detlab(&full).status.code(), Some(EXIT_OK));
        let again = dir.path().join(format!("again-{name}"));
        let replay = detlab(&["replay", path_str(&path), "--out", path_str(&again)]);
        assert_eq!(replay.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&replay.stderr));
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn replay_detects_edited_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.json");
    assert_eq!(detlab(&["exponents", "--out", path_str(&path)]).status.code(), Some(EXIT_OK));
    let text = std::fs::read_to_string(&path).unwrap().replacen("\"pass\": true", "\"pass\": false", 1);
    std::fs::write(&path, text).unwrap();
    assert_eq!(detlab(&["replay", path_str(&path)]).status.code(), Some(EXIT_CONTRACT));
}

#[test]
fn replay_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.json");
    assert_eq!(detlab(&["exponents", "--out", path_str(&path)]).status.code(), Some(EXIT_OK));
    let text = std::fs::read_to_string(&path).unwrap().replacen("\"seed\":", "\"sede\": 1, \"seed\":", 1);
    std::fs::write(&path, text).unwrap();
    let out = detlab(&["replay", path_str(&path)]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn csv_report_starts_with_embedded_config() {
    let out = detlab(&["hardy-scan", "--n", "2", "--eps-list", "2^-4..2^-6", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), "epsilon,mass,hardy");
    assert_eq!(lines.count(), 3);
    let cfg = config_from_report(&text).unwrap();
    assert_eq!(cfg.eps_list, parse_eps_list("2^-4..2^-6").unwrap());
}

#[test]
fn depth_comes_from_environment_unless_given() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_detlab"));
        cmd.args(["exponents"]).args(extra);
        match env {
            Some(v) => cmd.env("DETLAB_DEFAULT_DEPTH", v),
            None => cmd.env_remove("DETLAB_DEFAULT_DEPTH"),
        };
        let out = cmd.output().unwrap();
        (out.status.code(), serde_json::from_slice::<serde_json::Value>(&out.stdout).ok())
    };
    let (_, v) = run(None, &[]);
    assert_eq!(v.unwrap()["config"]["scheme"]["dyadic_depth"], 20);
    let (_, v) = run(Some("12"), &[]);
    assert_eq!(v.unwrap()["config"]["scheme"]["dyadic_depth"], 12);
    let (_, v) = run(Some("12"), &["--depth", "14"]);
    assert_eq!(v.unwrap()["config"]["scheme"]["dyadic_depth"], 14);
    assert_eq!(run(Some("deep"), &[]).0, Some(EXIT_USAGE));
}

#[test]
fn field_description_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.json");
    std::fs::write(
        &path,
        r#"{"family":"periodic","s_base":[[2.0,0.3],[0.3,1.0]],"terms":[{"freq":[1,-1],"amplitude":0.02,"phase":0.4}]}"#,
    )
    .unwrap();
    let arg = format!("@{}", path.display());
    let out = detlab(&["fields-check", "--field", &arg]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["n"], 2);
    assert_eq!(v["config"]["field"]["family"], "periodic");
}

#[test]
fn in_process_execution_is_repeatable() {
    let args = RunArgs { seed: 4, ..RunArgs::default() };
    let cfg = args.resolve(CommandName::VerifyMatkit).unwrap();
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    assert_eq!(a.rendered, b.rendered);
    assert_eq!(a.exit_code(), EXIT_OK);
    assert_eq!(config_from_report(&a.rendered).unwrap(), cfg);
}
