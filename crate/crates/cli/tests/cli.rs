use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hyperstab::extremal::GroundState;
use hyperstab::io::{summary_lines, Manifest, Table};
use hyperstab::ModelParams;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hyperstab"));
    c.env_remove("HYPERSTAB_THREADS");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn manifest(out: &Path) -> Manifest {
    Manifest::read(&out.join("manifest.json")).unwrap()
}

#[test]
fn extremal_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["extremal", "--n", "3", "--p", "2", "--lambda", "0.5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path());
    let gs = GroundState::solve(&ModelParams::new(3, 2.0, 0.5).unwrap()).unwrap();
    assert_eq!(m.results["s"].as_f64().unwrap(), gs.best.s);
    assert_eq!(m.command, "extremal");
    assert_eq!(m.config["lambda"], 0.5);
    assert!(m.error.is_none());
    let text = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let rec = hyperstab::io::parse_profile_csv(&text).unwrap();
    assert_eq!(rec.values, gs.profile.values);
}

#[test]
fn spectrum_slots() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "spectrum",
            "--n",
            "4",
            "--p",
            "3",
            "--lambda",
            "2.2",
            "--sectors",
            "0,1,2",
            "--count",
            "3",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&dir.path().join("eigenvalues.csv")).unwrap();
    let sector = t.column("sector").unwrap();
    let index = t.column("index").unwrap();
    let mu = t.column("eigenvalue").unwrap();
    assert_eq!(mu.len(), 9);
    let at = |l: f64, i: f64| {
        (0..mu.len())
            .find(|&j| sector[j] == l && index[j] == i)
            .map(|j| mu[j])
            .unwrap()
    };
    assert!((at(0.0, 0.0) - 1.0).abs() < 1e-3);
    assert!((at(1.0, 0.0) - 3.0).abs() < 3e-3);
    assert!(at(0.0, 1.0) > 3.0);
    for l in 0..3 {
        assert!(dir.path().join(format!("eigenfunctions_l{l}.csv")).exists());
    }
}

#[test]
fn empty_invocation_is_usage_error() {
    let o = bin().output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_and_invalid_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["extremal", "--n", "3", "--p", "2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--lambda"));
    // supercritical exponent
    let o = run(&["extremal", "--n", "5", "--p", "2.5", "--lambda", "3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn config_file_rules() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out = dir.path().join("out");

    fs::write(
        &cfg,
        r#"{"command": "extremal", "n": 3, "p": 2.0, "lambda": 0.5, "tolerance": 1}"#,
    )
    .unwrap();
    let o = bin()
        .args(["extremal", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tolerance"));

    fs::write(&cfg, r#"{"command": "flow", "n": 3}"#).unwrap();
    let o = bin().args(["extremal", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // flags win over the file
    fs::write(
        &cfg,
        format!(
            r#"{{"n": 4, "p": 2.0, "lambda": 0.5, "out": {:?}}}"#,
            out.display().to_string()
        ),
    )
    .unwrap();
    let o = bin()
        .args(["extremal", "--n", "3", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m.config["n"], 3);
    assert_eq!(m.config["p"], 2.0);
}

#[test]
fn numerical_failure_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["flow-original", "--n", "4", "--m", "0.4", "--max-steps", "5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    let m = manifest(dir.path());
    assert_eq!(m.error.unwrap().code, "step_budget");
    assert!(m.outputs.is_empty());
}

#[test]
fn bad_thread_count() {
    let o = bin()
        .env("HYPERSTAB_THREADS", "zero")
        .args(["peucs", "--n", "5", "--lambda", "4"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map_or(false, |x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn identical_configs_give_identical_csvs() {
    let args = [
        "hsm-check",
        "--N",
        "6",
        "--k",
        "3",
        "--mu",
        "0.2",
        "--p",
        "1.5",
        "--pairs",
        "3",
        "--seed",
        "5",
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run(&args, a.path()).status.success());
    let o = bin()
        .env("HYPERSTAB_THREADS", "3")
        .args(args)
        .arg("--out")
        .arg(b.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 1);
    assert_eq!(fa, fb);
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_eq!(ma.seed, Some(5));
    assert_eq!(ma.results, mb.results);
    assert_eq!(mb.threads, 3);
}

#[test]
fn summary_traceable_to_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(
        &["peucs", "--n", "5", "--lambda", "4", "--eps", "0.04,0.02"],
        dir.path()
    )
    .status
    .success());
    let m = manifest(dir.path());
    let text = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(lines, summary_lines(&m.results));
    for l in lines {
        let key = l.split(" = ").next().unwrap();
        let mut v = &m.results;
        for part in key.split('.') {
            v = &v[part];
        }
        assert!(!matches!(v, Value::Null), "{key}");
    }
    assert_eq!(m.outputs, ["peucs.csv", "summary.txt"]);
}
