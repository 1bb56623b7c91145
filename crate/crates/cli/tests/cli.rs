use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tnlab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tnlab")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

fn run_config(cfg: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    tnlab(&args)
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn wiener_with_seed_42_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, log) = run_config(&configs().join("wiener.json"), tmp.path(), &["--seed", "42"]);
    assert_eq!(code, 0, "{log}");
    let s = summary(tmp.path());
    assert_eq!(s["experiment"], "wiener");
    assert!(s["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert!(tmp.path().join("wiener.csv").exists());
}

#[test]
fn singular_toy_exits_two_and_reports_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, log) = run_config(&configs().join("dress-toy-singular.json"), tmp.path(), &[]);
    assert_eq!(code, 2, "{log}");
    let s = summary(tmp.path());
    let flag = s["checks"].as_array().unwrap().iter().find(|c| c["name"].as_str().unwrap().starts_with("singular")).unwrap();
    assert_eq!(flag["pass"], false);
    assert_eq!(flag["value"], 1.0);
}

#[test]
fn malformed_configs_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, body) in [
        "{ not json",
        r#"{"experiment": "no-such-thing"}"#,
        r#"{"experiment": "wiener", "params": {"dt": 0.01, "samlpes": 10}}"#,
        r#"{"experiment": "wiener", "params": {"dt": -1.0}}"#,
        r#"{"experiment": "split", "params": {"n": 8, "band": 6}}"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = tmp.path().join(format!("bad{i}.json"));
        std::fs::write(&cfg, body).unwrap();
        let (code, log) = run_config(&cfg, &tmp.path().join(format!("out{i}")), &[]);
        assert_eq!(code, 1, "{body}: {log}");
    }
    let (code, _) = run_config(&tmp.path().join("missing.json"), tmp.path(), &[]);
    assert_eq!(code, 1);
}

#[test]
fn bad_refinement_and_unwritable_output_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run_config(&configs().join("wiener.json"), tmp.path(), &["--dt-refine", "1"]);
    assert_eq!(code, 1);
    let file = tmp.path().join("a_file");
    std::fs::write(&file, "x").unwrap();
    let (code, log) = run_config(&configs().join("wiener.json"), &file.join("sub"), &[]);
    assert_eq!(code, 1, "{log}");
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["split.json", "wiener.json", "pfunctional.json"] {
        let (a, b) = (tmp.path().join(format!("{name}-a")), tmp.path().join(format!("{name}-b")));
        assert_eq!(run_config(&configs().join(name), &a, &[]).0, 0);
        assert_eq!(run_config(&configs().join(name), &b, &[]).0, 0);
        let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        assert!(files.len() >= 2);
        for f in files {
            assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{name}: {f:?}");
        }
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_config(&configs().join("wiener.json"), &a, &["--seed", "1"]);
    run_config(&configs().join("wiener.json"), &b, &["--seed", "2"]);
    assert_eq!(summary(&a)["seed"], 1);
    assert_ne!(std::fs::read(a.join("wiener.csv")).unwrap(), std::fs::read(b.join("wiener.csv")).unwrap());
}

#[test]
fn every_shipped_config_parses() {
    for e in std::fs::read_dir(configs()).unwrap() {
        let path = e.unwrap().path();
        let cfg = tnlab_cli::Config::load(&path).unwrap_or_else(|err| panic!("{}: {err}", path.display()));
        tnlab_cli::experiments::check_params(&cfg).unwrap_or_else(|err| panic!("{}: {err}", path.display()));
        if matches!(cfg.experiment, tnlab_cli::Kind::Split | tnlab_cli::Kind::DressToy | tnlab_cli::Kind::Wiener) {
            tnlab_cli::experiments::run(&cfg).unwrap();
        }
    }
}
