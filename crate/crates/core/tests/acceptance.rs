//! Acceptance run: each criterion is one command-line invocation, timed
//! against its budget, with one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde_json::Value;

struct Run {
    code: Option<i32>,
    seconds: f64,
    manifest: Value,
    out: PathBuf,
}

impl Run {
    fn checks(&self) -> Vec<(String, bool, String)> {
        self.manifest["checks"]
            .as_array()
            .map(|a| {
                a.iter()
                    .map(|c| (c["name"].as_str().unwrap_or("").to_string(), c["passed"] == true, c["detail"].as_str().unwrap_or("").to_string()))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Checks whose name contains `pattern`: (all passed, how many, joined details).
    fn matching(&self, pattern: &str) -> (bool, usize, String) {
        let hits: Vec<_> = self.checks().into_iter().filter(|c| c.0.contains(pattern)).collect();
        let detail = hits.iter().map(|c| format!("{}: {}", c.0, c.2)).collect::<Vec<_>>().join("; ");
        (hits.iter().all(|c| c.1), hits.len(), detail)
    }
}

fn invoke(root: &Path, tag: &str, args: &[&str]) -> Run {
    let out = root.join(tag);
    let started = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_spatial-spectra")).arg("--out").arg(&out).args(args).output().expect("binary runs");
    let seconds = started.elapsed().as_secs_f64();
    let manifest = std::fs::read_to_string(out.join("manifest.json")).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or(Value::Null);
    if o.status.code() != Some(0) {
        eprintln!("{tag}: exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    }
    Run { code: o.status.code(), seconds, manifest, out }
}

struct Tally {
    failed: usize,
}

impl Tally {
    fn line(&mut self, id: u32, what: &str, ok: bool, seconds: f64, budget: f64, detail: &str) {
        let ok = ok && seconds <= budget;
        self.failed += usize::from(!ok);
        println!("{} C{id:<2} {what} [{seconds:.1} s of {budget:.0} s] {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn main() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cfg = |name: &str| configs.join(name).to_str().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut t = Tally { failed: 0 };

    let identities = invoke(root, "c1", &["verify", "--model", "all", "--d", "2", "--configs", "200", "--support-trials", "0", "--seed", "1"]);
    let (ok_scores, n_scores, d_scores) = identities.matching("sum of scores = trace");
    let (ok_routes, n_routes, d_routes) = identities.matching("walk route = spectral route");
    t.line(
        1,
        "sum of scores = trace and walk/spectral agreement, 200 configs x 3 models, degree <= 5",
        identities.code == Some(0) && ok_scores && ok_routes && n_scores == 3 && n_routes == 3,
        identities.seconds,
        60.0,
        &format!("{d_scores}; {d_routes}"),
    );

    let support = invoke(root, "c2", &["verify", "--model", "rgg", "--r", "1", "--d", "2", "--configs", "0", "--support-trials", "10000", "--seed", "2"]);
    let (ok, n, detail) = support.matching("difference supports");
    let report: Value = std::fs::read_to_string(support.out.join("verify.json")).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or(Value::Null);
    let trials: u64 = ["x^2", "x^3"].iter().filter_map(|q| report[format!("rgg(r=1) support {q}")]["trials"].as_u64()).sum();
    t.line(2, "difference supports, 10^4 randomized trials", support.code == Some(0) && ok && n == 1 && trials >= 10_000, support.seconds, 120.0, &format!("{detail} ({trials} trials)"));

    let stab = invoke(root, "c3", &["stabilize", "--model", "all", "--seed", "3"]);
    let (ok, n, detail) = stab.matching("stable at R=");
    t.line(3, "stabilization: rgg m <= 4 x 500, kNN(1) and RNG m <= 2 x 200", stab.code == Some(0) && ok && n == 8, stab.seconds, 300.0, &detail);

    let paths = invoke(root, "c4", &["paths", "--d", "1,2", "--m-max", "6", "--replicates", "2000", "--seed", "4"]);
    let (ok_box, n_box, d_box) = paths.matching("box bound");
    let (ok_exp, n_exp, d_exp) = paths.matching("expectation bound");
    t.line(4, "walk counts: box bound always, expectation bound with 3 se slack", paths.code == Some(0) && ok_box && ok_exp && n_box == 2 && n_exp == 2, paths.seconds, 120.0, &format!("{d_box}; {d_exp}"));

    let variance = invoke(root, "c5", &["clt", "--config", &cfg("variance_1d.cfg")]);
    let (ok, n, detail) = variance.matching("within 10% of the exact value");
    t.line(5, "variance oracle d=1, r=1/2, f=x^2, n=1024, M=2000", ok && n == 1, variance.seconds, 120.0, &detail);

    let clt = invoke(root, "c6", &["clt", "--config", &cfg("clt_2d.cfg")]);
    let (ok_ks, n_ks, d_ks) = clt.matching("KS p-value > 0.01 at n=1024");
    let (ok_drift, n_drift, d_drift) = clt.matching("drift below 10%");
    t.line(6, "CLT d=2, r=1, f=x^2, M=1000", ok_ks && ok_drift && n_ks == 1 && n_drift == 1, clt.seconds, 600.0, &format!("{d_ks}; {d_drift}"));
    let (ok, n, detail) = clt.matching("rate slope in [-0.8, -0.2]");
    t.line(7, "rate slope of the Wasserstein estimate", ok && n == 1, clt.seconds, 600.0, &detail);

    let poincare = invoke(root, "c8", &["poincare", "--config", &cfg("poincare_1d.cfg"), "--functions", "x^2;x^3"]);
    let (ok, n, detail) = poincare.matching("poincare");
    t.line(8, "Poincare margin >= -3 sigma for x^2, x^3 at n = 64, 256", poincare.code == Some(0) && ok && n >= 3, poincare.seconds, 300.0, &detail);

    let stein = invoke(root, "c9", &["stein", "--config", &cfg("stein_1d.cfg")]);
    let (ok_lin, n_lin, d_lin) = stein.matching("linear in n");
    let (ok_far, n_far, d_far) = stein.matching("vanish beyond 4mr");
    t.line(9, "Stein terms linear in n, zero beyond the support", ok_lin && ok_far && n_lin == 3 && n_far == 1, stein.seconds, 600.0, &format!("{d_far}; {d_lin}"));

    let weighted = invoke(root, "c10", &["weighted", "--config", &cfg("weighted_1d.cfg"), "--functions", "bump;xgauss;sin_gauss"]);
    let (ok, n, detail) = weighted.matching("no growth");
    t.line(10, "weighted variance ratio without growth, c=1, 3 functions", weighted.code == Some(0) && ok && n == 3, weighted.seconds, 600.0, &detail);

    let geometry = invoke(root, "c11", &["geometry", "--samples", "10000", "--trials", "200", "--seed", "11"]);
    let (ok, n, detail) = geometry.matching("");
    t.line(11, "sector-in-lens, lens angles, positivity events", geometry.code == Some(0) && ok && n == 5, geometry.seconds, 180.0, &detail);

    let (ok_inv, n_inv, d_inv) = identities.matching("graph invariants");
    t.line(12, "trace invariants and spectral bound on every constructed graph", ok_inv && n_inv == 6, identities.seconds, 60.0, &d_inv);

    println!("{} of 12 criteria failed", t.failed);
    if t.failed > 0 {
        std::process::exit(1);
    }
}
