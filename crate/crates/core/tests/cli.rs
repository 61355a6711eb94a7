//! The command-line runner: exit codes, manifests and determinism.

use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spatial-spectra"));
    cmd.arg("--out").arg(out).args(args).env_remove("SPATIAL_SPECTRA_WORKERS");
    if let Some(w) = workers {
        cmd.env("SPATIAL_SPECTRA_WORKERS", w);
    }
    cmd.output().unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "dimension = 1\nradius = 0.5\nf = x^2\nn_grid = 256, 1024\nreplicates = 1000\nseed = 4\n";

#[test]
fn verify_passes_with_a_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "--model", "rgg", "--r", "1", "--d", "2", "--seed", "7"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["subcommand"], "verify");
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["seed"], 7);
    assert!(summary["checks"].as_array().unwrap().len() >= 4);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["clt"], None);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--config"));
    assert_eq!(run(dir.path(), &["verify", "--frobnicate"], None).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["nonsense"], None).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["simulate", "--n", "50", "--model", "delaunay"], None).status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("dup.cfg", "seed = 1\n# comment\nseed = 2\n", "line 3"),
        ("unknown.cfg", "colour = red\n", "line 1"),
        ("value.cfg", "\nreplicates = lots\n", "line 2"),
        ("weight.cfg", "f = xgauss\nc = 0\n", "c != 0"),
        ("small.cfg", "replicates = 10\n", "replicates"),
    ];
    for (name, text, needle) in cases {
        let path = write(dir.path(), name, text);
        let o = run(&dir.path().join("out"), &["clt", "--config", &path], None);
        assert_eq!(o.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{name}: {err}");
    }
    let o = run(dir.path(), &["clt", "--config", "/definitely/not/here.cfg"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn clt_outputs_are_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = run(&a, &["clt", "--config", &cfg], Some("1"));
    let ob = run(&b, &["--workers", "3", "clt", "--config", &cfg], None);
    assert_eq!(oa.status.code(), Some(0), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(ob.status.code(), Some(0));
    for file in ["report.json", "samples.csv", "histogram.svg", "qq.svg"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert!(x == y, "{file} differs");
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["checks"], mb["checks"]);
    assert!(std::fs::read_to_string(a.join("samples.csv")).unwrap().starts_with("# spatial-spectra samples v1\n"));
}

#[test]
fn manifest_lists_every_artifact_and_matches_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.cfg", SMALL);
    let bad = write(dir.path(), "bad.cfg", "dimension = 1\nradius = 0.5\nn_grid = 2, 4\nreplicates = 100\nseed = 1\n");
    for (cfg, code) in [(good, 0), (bad, 1)] {
        let out = dir.path().join(format!("out{code}"));
        let o = run(&out, &["clt", "--config", &cfg], None);
        assert_eq!(o.status.code(), Some(code));
        let m = manifest(&out);
        assert_eq!(m["passed"], code == 0);
        assert_eq!(m["passed"], m["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
        let listed: Vec<String> = m["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap().to_string()).collect();
        for entry in std::fs::read_dir(&out).unwrap() {
            let path = entry.unwrap().path().display().to_string();
            assert!(listed.contains(&path), "{path} missing from {listed:?}");
        }
        for path in &listed {
            assert!(Path::new(path).exists(), "{path}");
        }
        assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
        assert_eq!(m["config"]["dim"], 1);
    }
}

#[test]
fn defaults_are_echoed_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "min.cfg", "dimension = 1\nradius = 0.5\nreplicates = 100\n");
    let out = dir.path().join("o");
    run(&out, &["clt", "--config", &cfg], None);
    let m = manifest(&out);
    assert_eq!(m["seed"], 1);
    assert_eq!(m["config"]["replicates"], 100);
    assert_eq!(m["config"]["n_grid"], serde_json::json!([64.0, 256.0, 1024.0]));
}

#[test]
fn simulate_writes_versioned_tables() {
    let dir = tempfile::tempdir().unwrap();
    for model in ["rgg", "knn", "rng"] {
        let out = dir.path().join(model);
        let o = run(&out, &["simulate", "--model", model, "--n", "150", "--seed", "3"], None);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        for file in ["points.csv", "edges.csv", "spectrum.csv"] {
            let text = std::fs::read_to_string(out.join(file)).unwrap();
            assert!(text.starts_with("# spatial-spectra "), "{file}: {}", &text[..40.min(text.len())]);
        }
    }
}

#[test]
fn selftest_and_small_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["selftest"],
        vec!["geometry", "--samples", "2000", "--trials", "40"],
        vec!["paths", "--replicates", "200", "--m-max", "4"],
        vec!["stabilize", "--model", "rgg", "--m", "3", "--trials", "50"],
        vec!["stabilize", "--model", "knn", "--m", "1", "--trials", "5", "--floor", "beta=10"],
    ] {
        let o = run(&dir.path().join(args[0]), &args, None);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(dir.path(), &["stabilize", "--model", "rng", "--floor", "beta=-1"], None);
    assert_eq!(o.status.code(), Some(2));
}
