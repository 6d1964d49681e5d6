use std::path::Path;
use std::process::Command;

fn miis(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_miis"))
        .args(args)
        .env_remove("MIIS_THREADS")
        .output()
        .expect("spawn miis");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn small_oracle(out: &Path) -> String {
    format!(
        r#"{{
  "experiment": "oracle",
  "M": 200, "burn_in": 20, "replications": 2, "base_seed": 3,
  "methods": [
    {{"label": "mwg", "sampler": {{"kind": "mwg", "inner_repeats": 1}}, "reference": true}},
    {{"label": "miis", "sampler": {{"kind": "miis-gibbs", "n": 3}}}}
  ],
  "output_dir": {:?}
}}"#,
        out.to_string_lossy()
    )
}

#[test]
fn oracle_check_passes() {
    let (code, out, _) = miis(&["oracle-check"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 4, "{out}");
    assert!(!out.contains("FAIL"));
}

#[test]
fn missing_required_field_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"experiment": "bvn", "model": {}, "M": 10, "burn_in": 0, "replications": 1, "base_seed": 1,
            "methods": [{"label": "g", "sampler": {"kind": "gibbs-exact"}, "reference": true}],
            "output_dir": "x"}"#,
    );
    let (code, _, err) = miis(&["run", &cfg]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("model.rho"), "{err}");
}

#[test]
fn unknown_key_exits_2_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"experiment": "bvn", "model": {"rho": 0.5}, "M": 10, "burn_in": 0, "replications": 1, "base_seed": 1,
            "methods": [{"label": "g", "sampler": {"kind": "gibbs-exact", "nn": 3}, "reference": true}],
            "output_dir": "x"}"#,
    );
    let (code, _, err) = miis(&["run", &cfg]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("methods[0].sampler"), "{err}");
    assert!(err.contains("nn"), "{err}");
}

#[test]
fn malformed_json_and_missing_file_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", "{ not json");
    assert_eq!(miis(&["run", &cfg]).0, 2);
    let (code, _, err) = miis(&["run", dir.path().join("absent.json").to_str().unwrap()]);
    assert_ne!(code, 0);
    assert!(err.contains("absent.json"), "{err}");
}

#[test]
fn bad_thread_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &small_oracle(&dir.path().join("out")));
    let out = Command::new(env!("CARGO_BIN_EXE_miis"))
        .args(["run", &cfg])
        .env("MIIS_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MIIS_THREADS"));
}

#[test]
fn runtime_failure_exits_1() {
    // a readable config whose event file does not exist fails at run time
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"experiment": "mmpp-data", "model": {{"events_file": {:?}, "prior_means": [1, 1, 1, 1]}},
                "M": 10, "burn_in": 0, "replications": 1, "base_seed": 1,
                "methods": [{{"label": "rwm", "sampler": {{"kind": "rwm"}}, "reference": true}}],
                "output_dir": {:?}}}"#,
            dir.path().join("missing.txt").to_string_lossy(),
            dir.path().join("out").to_string_lossy()
        ),
    );
    let (code, _, err) = miis(&["run", &cfg]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("missing.txt"), "{err}");
}

#[test]
fn run_then_summarize_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write(dir.path(), "c.json", &small_oracle(&out));
    let (code, stdout, err) = miis(&["run", &cfg, "--threads", "2"]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("miis-cv"));
    assert!(out.join("bundle.json").exists() && out.join("mse_table.csv").exists());
    let (code, summary, err) = miis(&["summarize", out.join("bundle.json").to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(summary.contains("evals/chain"));

    // a tampered table is detected
    let csv = out.join("mse_table.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.truncate(lines.len() - 1);
    std::fs::write(&csv, lines.join("\n") + "\n").unwrap();
    assert_eq!(miis(&["summarize", out.join("bundle.json").to_str().unwrap()]).0, 1);
}

#[test]
fn simulate_mmpp_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let (code, out, err) = miis(&[
            "simulate-mmpp",
            "--psi",
            "10,17",
            "--q",
            "1,1",
            "--window",
            "20",
            "--seed",
            "5",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("events"));
    }
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    assert!(ta.lines().count() > 100);

    let (code, _, err) = miis(&[
        "simulate-mmpp",
        "--psi",
        "10,-1",
        "--q",
        "1,1",
        "--window",
        "20",
        "--seed",
        "5",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn help_and_usage_errors() {
    let (code, out, _) = miis(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("oracle-check"));
    assert_eq!(miis(&["frobnicate"]).0, 2);
}
