//! Command-line runner: config files, suites, manifests and exit codes.
//!
//! Exit code 0 means every check of the run passed, 1 means some check
//! failed or a computation could not finish, 2 means a usage or
//! configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::{build_graph, check_neighborhood_axioms, lists_symmetric, max_degree, Adjacency, GraphModel};
use crate::mcclt::{self, ExperimentConfig};
use crate::paths::{bounds_table, write_bounds_csv};
use crate::pointproc::{sample_poisson, stream, Window};
use crate::scores::{support_check_score_diffs, sum_scores, SupportCheck};
use crate::spectral::{closed_walk_traces, eigenvalues, lc_norm, trace_poly_walks, SmoothKind, TestFunction};
use crate::stabilization::{
    lens_angle_check, positivity_event_check, rgg_chain_witness, rng_lens_sector_check, stabilization_suite, verify_stabilization, PositivityModel,
    RadiusFloor, ResampleOptions,
};

pub const WORKERS_ENV: &str = "SPATIAL_SPECTRA_WORKERS";

const CONFIG_KEYS: [&str; 14] =
    ["dimension", "model", "radius", "k", "f", "c", "n_grid", "replicates", "seed", "bootstrap", "inner", "probes", "cost_limit", "anderson_darling"];

/// Parses the plain-text `key = value` experiment format. Blank lines and
/// lines starting with `#` are ignored; unset keys take their defaults.
///
/// ```text
/// dimension = 2
/// model = rgg          # rgg, knn or rng
/// radius = 1
/// f = x^2
/// n_grid = 64, 256, 1024
/// replicates = 1000
/// seed = 6
/// ```
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut seen: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split_once('#').map_or(raw, |(b, _)| b).trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::ConfigParse { line, message: format!("expected `key = value`, got `{body}`") })?;
        let key = key.trim();
        let canonical = CONFIG_KEYS.iter().find(|k| **k == key).ok_or_else(|| Error::ConfigParse { line, message: format!("unknown key `{key}`") })?;
        if let Some((first, _)) = seen.insert(canonical, (line, value.trim())) {
            return Err(Error::ConfigParse { line, message: format!("duplicate key `{key}` (first set on line {first})") });
        }
    }
    fn num<T: std::str::FromStr>(seen: &BTreeMap<&str, (usize, &str)>, key: &str, default: T) -> Result<T> {
        match seen.get(key) {
            None => Ok(default),
            Some(&(line, v)) => v.parse().map_err(|_| Error::ConfigParse { line, message: format!("cannot parse `{v}` for `{key}`") }),
        }
    }
    let dim: usize = num(&seen, "dimension", 2)?;
    let radius: f64 = num(&seen, "radius", 1.0)?;
    let k: usize = num(&seen, "k", 1)?;
    let model = match seen.get("model") {
        None => GraphModel::rgg(radius)?,
        Some(&(line, name)) => parse_model(name, radius, k).map_err(|e| Error::ConfigParse { line, message: e.to_string() })?,
    };
    let f = match seen.get("f") {
        None => TestFunction::monomial(2),
        Some(&(line, spec)) => TestFunction::parse(spec).map_err(|e| Error::ConfigParse { line, message: e.to_string() })?,
    };
    let c = match seen.get("c") {
        None => None,
        Some(_) => Some(num(&seen, "c", 0.0)?),
    };
    let n_grid = match seen.get("n_grid") {
        None => vec![64.0, 256.0, 1024.0],
        Some(&(line, v)) => v
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::ConfigParse { line, message: format!("cannot parse n_grid `{v}`") })?,
    };
    let defaults = mcclt::EstimatorOptions::default();
    let options = mcclt::EstimatorOptions {
        bootstrap: num(&seen, "bootstrap", defaults.bootstrap)?,
        inner: num(&seen, "inner", defaults.inner)?,
        probes: num(&seen, "probes", defaults.probes)?,
        cost_limit: num(&seen, "cost_limit", defaults.cost_limit)?,
        anderson_darling: num(&seen, "anderson_darling", defaults.anderson_darling)?,
    };
    let cfg = ExperimentConfig { dim, model, f, c, n_grid, replicates: num(&seen, "replicates", 1000)?, seed: num(&seen, "seed", 1)?, options };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn parse_model(name: &str, radius: f64, k: usize) -> Result<GraphModel> {
    match name.trim() {
        "rgg" => GraphModel::rgg(radius),
        "knn" => GraphModel::knn(k),
        "rng" => Ok(GraphModel::Rng),
        other => Err(Error::InvalidArgument(format!("unknown model `{other}` (expected rgg, knn or rng)"))),
    }
}

/// One named pass/fail line of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Record of one invocation, written as `manifest.json` in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
    pub checks: Vec<CheckLine>,
    pub passed: bool,
}

#[derive(Parser, Debug)]
#[command(name = "spatial-spectra", version, about = "Spectra of random spatial networks: simulation and verification suites")]
struct Cli {
    /// Worker threads; defaults to $SPATIAL_SPECTRA_WORKERS or all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory receiving the artifacts and manifest.json.
    #[arg(long, global = true, default_value = "spatial-spectra-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ModelArgs {
    /// rgg, knn or rng (some subcommands also accept `all`).
    #[arg(long, default_value = "rgg")]
    model: String,
    #[arg(long = "r", default_value_t = 1.0)]
    r: f64,
    #[arg(long = "k", default_value_t = 1)]
    k: usize,
    #[arg(long = "d", default_value_t = 2)]
    d: usize,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Sample one configuration and dump points, edges and spectrum.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Window volume.
        #[arg(long)]
        n: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "x^2")]
        f: String,
    },
    /// Variance, Gaussianity and rate report for a config file.
    Clt {
        #[arg(long)]
        config: PathBuf,
    },
    /// Malliavin–Stein error terms for a config file.
    Stein {
        #[arg(long)]
        config: PathBuf,
    },
    /// Poincaré inequality check for a config file.
    Poincare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        probes: Option<usize>,
        /// Functions separated by `;`, each run over the whole grid; defaults to `f` from the config.
        #[arg(long)]
        functions: Option<String>,
    },
    /// Weighted variance ratio `Var(Tr f(A)e^{cA})/n ÷ (‖f‖² + ‖f''‖²)`.
    Weighted {
        #[arg(long)]
        config: PathBuf,
        /// Functions separated by `;`.
        #[arg(long, default_value = "bump;xgauss;sin_gauss")]
        functions: String,
    },
    /// Stabilization radius and exterior resampling.
    Stabilize {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Defaults to 500 for rgg and 200 otherwise.
        #[arg(long)]
        trials: Option<usize>,
        /// `standard` or `beta=<value>`.
        #[arg(long, default_value = "standard")]
        floor: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Sector, lens and positivity-event geometry.
    Geometry {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Path-count bounds tables.
    Paths {
        /// Dimensions separated by commas.
        #[arg(long = "d", default_value = "1,2")]
        d: String,
        #[arg(long = "r", default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 256.0)]
        n: f64,
        #[arg(long = "m-max", default_value_t = 6)]
        m_max: usize,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Exact identities, graph invariants, neighborhood axioms and difference supports.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// Random configurations for the identity suite; 0 skips it.
        #[arg(long, default_value_t = 200)]
        configs: usize,
        /// Randomized difference-support trials (geometric graph only).
        #[arg(long = "support-trials", default_value_t = 10_000)]
        support_trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Negative controls: every check here must detect a planted failure.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate { .. } => "simulate",
            Self::Clt { .. } => "clt",
            Self::Stein { .. } => "stein",
            Self::Poincare { .. } => "poincare",
            Self::Weighted { .. } => "weighted",
            Self::Stabilize { .. } => "stabilize",
            Self::Geometry { .. } => "geometry",
            Self::Paths { .. } => "paths",
            Self::Verify { .. } => "verify",
            Self::Selftest { .. } => "selftest",
        }
    }
}

/// Output of one subcommand before it is wrapped in a manifest.
struct Outcome {
    config: serde_json::Value,
    seed: u64,
    artifacts: Vec<String>,
    checks: Vec<CheckLine>,
}

struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.dir)?;
        self.written.push(self.dir.join(name).display().to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        use std::io::Write;
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let workers = cli.workers.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    let started = Instant::now();
    let mut out = Out { dir: cli.out.clone(), written: Vec::new() };
    let result = pool.install(|| dispatch(&cli.command, &mut out));
    match result {
        Ok(outcome) => {
            let passed = outcome.checks.iter().all(|c| c.passed);
            let mut artifacts = outcome.artifacts;
            artifacts.extend(out.written.iter().cloned());
            artifacts.push(cli.out.join("manifest.json").display().to_string());
            let manifest = RunManifest {
                subcommand: cli.command.name().into(),
                config: outcome.config,
                seed: outcome.seed,
                artifacts,
                wall_clock_seconds: started.elapsed().as_secs_f64(),
                checks: outcome.checks,
                passed,
            };
            if let Err(e) = out.json("manifest.json", &manifest) {
                eprintln!("error: {e}");
                return 2;
            }
            println!("{}", serde_json::to_string_pretty(&manifest).unwrap_or_default());
            for c in &manifest.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            i32::from(!passed)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigParse { .. } | Error::ConfigInvalid(_) | Error::InvalidArgument(_) | Error::UnknownFunction(_) | Error::Io(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cmd: &Command, out: &mut Out) -> Result<Outcome> {
    let echo = serde_json::to_value(cmd)?;
    match cmd {
        Command::Simulate { model, n, seed, f } => simulate(model, *n, *seed, f, out).map(|checks| Outcome { config: echo, seed: *seed, artifacts: vec![], checks }),
        Command::Clt { config } => {
            let cfg = load_config(config)?;
            Ok(Outcome { config: serde_json::to_value(&cfg)?, seed: cfg.seed, artifacts: vec![], checks: clt(&cfg, out)? })
        }
        Command::Stein { config } => {
            let cfg = load_config(config)?;
            Ok(Outcome { config: serde_json::to_value(&cfg)?, seed: cfg.seed, artifacts: vec![], checks: stein(&cfg, out)? })
        }
        Command::Poincare { config, probes, functions } => {
            let cfg = load_config(config)?;
            let fs = match functions {
                Some(list) => list.split(';').map(TestFunction::parse).collect::<Result<Vec<_>>>()?,
                None => vec![cfg.f.clone()],
            };
            let mut checks = Vec::new();
            let mut all = Vec::new();
            for f in fs {
                let run = ExperimentConfig { f: f.clone(), ..cfg.clone() };
                let rows = mcclt::poincare_check(&run, probes.unwrap_or(cfg.options.probes))?;
                for r in &rows {
                    checks.push(CheckLine::new(
                        format!("poincare {f} n={}", r.n),
                        r.holds(),
                        format!("lhs {:.4} ± {:.4}, rhs {:.4} ± {:.4}, margin {:.2} sigma", r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.margin_sigma),
                    ));
                }
                all.push(serde_json::json!({ "function": f.to_string(), "rows": rows }));
            }
            out.json("poincare.json", &all)?;
            Ok(Outcome { config: serde_json::to_value(&cfg)?, seed: cfg.seed, artifacts: vec![], checks })
        }
        Command::Weighted { config, functions } => {
            let cfg = load_config(config)?;
            let fs = functions.split(';').map(TestFunction::parse).collect::<Result<Vec<_>>>()?;
            let report = mcclt::weighted_variance_check(&cfg, &fs, cfg.c.unwrap_or(1.0))?;
            out.json("weighted.json", &report)?;
            let checks = report
                .summaries
                .iter()
                .map(|s| CheckLine::new(format!("no growth {}", s.function), !s.growth, format!("max ratio {:.4e}", s.max_ratio)))
                .collect();
            Ok(Outcome { config: serde_json::to_value(&cfg)?, seed: cfg.seed, artifacts: vec![], checks })
        }
        Command::Stabilize { model, m, trials, floor, seed } => stabilize(model, *m, *trials, floor, *seed, out).map(|checks| Outcome { config: echo, seed: *seed, artifacts: vec![], checks }),
        Command::Geometry { samples, trials, seed } => geometry(*samples, *trials, *seed, out).map(|checks| Outcome { config: echo, seed: *seed, artifacts: vec![], checks }),
        Command::Paths { d, r, n, m_max, replicates, seed } => {
            let dims = d.split(',').map(|s| s.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad dimension list `{d}`")))).collect::<Result<Vec<_>>>()?;
            let mut checks = Vec::new();
            for dim in dims {
                let rows = bounds_table(dim, *r, *n, *m_max, *replicates, *seed)?;
                write_bounds_csv(&rows, out.create(&format!("bounds_d{dim}.csv"))?)?;
                let box_ok = rows.iter().all(|row| row.box_violations == 0);
                checks.push(CheckLine::new(format!("box bound d={dim}"), box_ok, format!("{} violations", rows.iter().map(|r| r.box_violations).sum::<usize>())));
                let worst = rows.iter().map(|row| (row.empirical_mean - 3.0 * row.std_error) / row.bound).fold(0.0, f64::max);
                checks.push(CheckLine::new(format!("expectation bound d={dim}"), worst <= 1.0, format!("max (mean - 3 se)/bound = {worst:.3e}")));
            }
            Ok(Outcome { config: echo, seed: *seed, artifacts: vec![], checks })
        }
        Command::Verify { model, configs, support_trials, seed } => verify(model, *configs, *support_trials, *seed, out).map(|checks| Outcome { config: echo, seed: *seed, artifacts: vec![], checks }),
        Command::Selftest { seed } => Ok(Outcome { config: echo, seed: *seed, artifacts: vec![], checks: selftest(*seed)? }),
    }
}

fn models_of(args: &ModelArgs) -> Result<Vec<GraphModel>> {
    if args.model == "all" {
        return Ok(vec![GraphModel::rgg(args.r)?, GraphModel::knn(args.k)?, GraphModel::Rng]);
    }
    Ok(vec![parse_model(&args.model, args.r, args.k)?])
}

fn simulate(args: &ModelArgs, n: f64, seed: u64, f: &str, out: &mut Out) -> Result<Vec<CheckLine>> {
    let model = parse_model(&args.model, args.r, args.k)?;
    let f = TestFunction::parse(f)?;
    let config = sample_poisson(&Window::new(args.d, n)?, seed, 0);
    let adj = build_graph(&config, model);
    config.write_csv(out.create("points.csv")?)?;
    adj.write_csv(out.create("edges.csv")?)?;
    let mut checks = invariant_checks(&adj)?;
    match eigenvalues(&adj) {
        Ok(spec) => {
            spec.write_csv(out.create("spectrum.csv")?)?;
            checks.push(CheckLine::new("trace", true, format!("Tr f(A) = {:.10e} over {} points, {} edges", spec.trace_of(&f), config.len(), adj.edge_count())));
        }
        Err(Error::DenseCapExceeded { size, cap }) => {
            log::warn!("spectrum skipped: component of {size} vertices exceeds the dense cap {cap}");
        }
        Err(e) => return Err(e),
    }
    Ok(checks)
}

/// `Tr A = 0`, `Tr A² = 2|E|`, `Tr A³ = 6·triangles` and `max|λ| ≤ max degree`.
pub fn invariant_checks(adj: &Adjacency) -> Result<Vec<CheckLine>> {
    let t = closed_walk_traces(adj, 3)?;
    let (edges, tri) = (adj.edge_count() as f64, adj.triangle_count() as f64);
    let mut checks = vec![
        CheckLine::new("Tr A = 0", t[1] == 0.0, format!("{}", t[1])),
        CheckLine::new("Tr A^2 = 2|E|", t[2] == 2.0 * edges, format!("{} vs {}", t[2], 2.0 * edges)),
        CheckLine::new("Tr A^3 = 6 triangles", t[3] == 6.0 * tri, format!("{} vs {}", t[3], 6.0 * tri)),
    ];
    match eigenvalues(adj) {
        Ok(spec) => {
            let (rho, deg) = (spec.spectral_radius(), max_degree(adj) as f64);
            checks.push(CheckLine::new("max|lambda| <= max degree", rho <= deg + 1e-9, format!("{rho:.6} vs {deg}")));
        }
        Err(Error::DenseCapExceeded { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(checks)
}

/// Result of the exact-identity suite on one model.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IdentityReport {
    pub configs: usize,
    pub skipped_by_guard: usize,
    /// Largest `|sum of scores - Tr f(A)|` relative to `Σ|a_q| Tr A^q`.
    pub max_scores_vs_walks: f64,
    /// Largest walk-route versus spectral-route discrepancy, same scale.
    pub max_walks_vs_spectrum: f64,
    pub invariant_failures: usize,
}

/// Random small configurations with random polynomials of degree at most 5:
/// sum of scores, closed walks and the spectrum must agree.
pub fn identity_suite(model: GraphModel, dim: usize, configs: usize, seed: u64) -> Result<IdentityReport> {
    let window = Window::new(dim, 12.0)?;
    let per = (0..configs)
        .into_par_iter()
        .map(|j| -> Result<Option<(f64, f64, usize)>> {
            let mut rng = stream(seed, j as u64 | (1 << 40));
            let config = sample_poisson(&window, seed, j as u64);
            let deg = rng.random_range(0..=5usize);
            let f = TestFunction::polynomial((0..=deg).map(|_| rng.random_range(-3..=3) as f64 * 0.5).collect());
            let adj = build_graph(&config, model);
            let scores = match sum_scores(&config, model, &f) {
                Ok(v) => v,
                Err(Error::EnumerationGuard { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let walks = trace_poly_walks(&adj, &f)?;
            let spectral = eigenvalues(&adj)?.trace_of(&f);
            let traces = closed_walk_traces(&adj, deg.max(1))?;
            let a = f.coefficients().unwrap_or(&[]);
            let scale = a.iter().enumerate().map(|(q, c)| c.abs() * if q == 0 { config.len() as f64 } else { traces[q] }).sum::<f64>().max(1.0);
            let fails = invariant_checks(&adj)?.iter().filter(|c| !c.passed).count();
            Ok(Some(((scores - walks).abs() / scale, (walks - spectral).abs() / scale, fails)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rep = IdentityReport::default();
    for p in per {
        match p {
            None => rep.skipped_by_guard += 1,
            Some((a, b, fails)) => {
                rep.configs += 1;
                rep.max_scores_vs_walks = rep.max_scores_vs_walks.max(a);
                rep.max_walks_vs_spectrum = rep.max_walks_vs_spectrum.max(b);
                rep.invariant_failures += fails;
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepReport {
    pub graphs: usize,
    pub largest: usize,
    pub failures: usize,
}

/// The trace invariants on `count` graphs per dimension `1..=3`, window
/// volumes cycling from 10 to 400.
pub fn invariant_sweep(model: GraphModel, count: usize, seed: u64) -> Result<SweepReport> {
    let per = (1..=3usize)
        .flat_map(|d| (0..count).map(move |j| (d, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(d, j)| -> Result<(usize, usize)> {
            let volume = 10.0 + 390.0 * ((j * 37) % 100) as f64 / 99.0;
            let config = sample_poisson(&Window::new(d, volume)?, seed, (d as u64) << 36 | j as u64);
            let adj = build_graph(&config, model);
            Ok((config.len(), invariant_checks(&adj)?.iter().filter(|c| !c.passed).count()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { graphs: per.len(), largest: per.iter().map(|p| p.0).max().unwrap_or(0), failures: per.iter().map(|p| p.1).sum() })
}

fn verify(args: &ModelArgs, configs: usize, support_trials: usize, seed: u64, out: &mut Out) -> Result<Vec<CheckLine>> {
    let mut checks = Vec::new();
    let mut reports = BTreeMap::new();
    for model in models_of(args)? {
        let name = model.name();
        if configs > 0 {
            let rep = identity_suite(model, args.d, configs, seed)?;
            checks.push(CheckLine::new(
                format!("{name} sum of scores = trace"),
                rep.configs > 0 && rep.max_scores_vs_walks <= 1e-9,
                format!("{} configs, max relative gap {:.2e}", rep.configs, rep.max_scores_vs_walks),
            ));
            checks.push(CheckLine::new(format!("{name} walk route = spectral route"), rep.configs > 0 && rep.max_walks_vs_spectrum <= 1e-9, format!("max relative gap {:.2e}", rep.max_walks_vs_spectrum)));
            checks.push(CheckLine::new(format!("{name} graph invariants"), rep.invariant_failures == 0, format!("{} failures", rep.invariant_failures)));
            reports.insert(format!("{name} identities"), serde_json::to_value(&rep)?);
            let sweep = invariant_sweep(model, configs, seed)?;
            checks.push(CheckLine::new(
                format!("{name} graph invariants in dimensions 1-3"),
                sweep.failures == 0,
                format!("{} failures on {} graphs with up to {} vertices", sweep.failures, sweep.graphs, sweep.largest),
            ));
            reports.insert(format!("{name} invariant sweep"), serde_json::to_value(&sweep)?);
        }
        let window = Window::new(args.d, 40.0)?;
        let config = sample_poisson(&window, seed, 1 << 41);
        let shift: Vec<f64> = (0..args.d).map(|a| 0.37 + a as f64).collect();
        let axioms = check_neighborhood_axioms(model, &config, &shift);
        checks.push(CheckLine::new(format!("{name} neighborhood axioms"), axioms.all_pass(), format!("{axioms:?}")));
        if let GraphModel::Rgg { radius } = model {
            if support_trials > 0 {
                let params = SupportCheck { dim: args.d, radius, volume: 40.0, seed };
                let mut total = 0;
                for q in 2..=3 {
                    let rep = support_check_score_diffs(model, &TestFunction::monomial(q), support_trials / 2, params)?;
                    total += rep.violations;
                    reports.insert(format!("{name} support x^{q}"), serde_json::to_value(&rep)?);
                }
                checks.push(CheckLine::new(format!("{name} difference supports"), total == 0, format!("{total} violations in {} trials", 2 * (support_trials / 2))));
            }
        }
    }
    out.json("verify.json", &reports)?;
    Ok(checks)
}

fn clt(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<CheckLine>> {
    let (report, samples) = mcclt::clt_report(cfg)?;
    out.json("report.json", &report)?;
    mcclt::write_samples_csv(&samples, out.create("samples.csv")?)?;
    let mut checks = Vec::new();
    let last = report.rows.last().expect("validated grid is non-empty");
    checks.push(CheckLine::new("non-degenerate variance", !report.degenerate, format!("sigma2 {:.4} ± {:.4}", report.sigma2, report.sigma2_se)));
    if !report.degenerate {
        let z = mcclt::normalized(samples.last().expect("non-empty"));
        mcclt::write_histogram_svg(&z, report.sigma2.sqrt(), out.create("histogram.svg")?)?;
        mcclt::write_qq_svg(&z, report.sigma2.sqrt(), out.create("qq.svg")?)?;
        let p = last.ks_p_value.unwrap_or(0.0);
        checks.push(CheckLine::new(format!("KS p-value > 0.01 at n={}", last.n), p > 0.01, format!("p = {p:.4}")));
        checks.push(CheckLine::new("Var/n drift below 10%", report.drift.abs() < 0.1, format!("{:.2}% ± {:.2}%", 100.0 * report.drift, 100.0 * report.drift_se)));
    }
    if let Some(rate) = &report.rate {
        checks.push(CheckLine::new(
            "rate slope in [-0.8, -0.2]",
            (-0.8..=-0.2).contains(&rate.slope),
            format!("slope {:.3}, 95% bootstrap interval [{:.3}, {:.3}]", rate.slope, rate.ci_low, rate.ci_high),
        ));
    }
    if let (1, GraphModel::Rgg { radius }, None) = (cfg.dim, cfg.model, cfg.c) {
        if cfg.f == TestFunction::monomial(2) {
            let exact = mcclt::rgg_square_variance_1d(last.n, radius)? / last.n;
            let rel = (last.var_over_n - exact) / exact;
            checks.push(CheckLine::new("Var/n within 10% of the exact value", rel.abs() <= 0.1, format!("{:.4} vs exact {:.4} ({:+.2}%)", last.var_over_n, exact, 100.0 * rel)));
        }
    }
    Ok(checks)
}

fn stein(cfg: &ExperimentConfig, out: &mut Out) -> Result<Vec<CheckLine>> {
    let rows = mcclt::gamma_estimates(cfg)?;
    out.json("stein.json", &rows)?;
    let mut checks = vec![CheckLine::new(
        "second differences vanish beyond 4mr",
        rows.iter().all(|r| r.beyond_support_nonzero == 0),
        format!("{} control probes, {} nonzero", rows.iter().map(|r| r.beyond_support_probes).sum::<usize>(), rows.iter().map(|r| r.beyond_support_nonzero).sum::<usize>()),
    )];
    for w in rows.windows(2) {
        let expect = w[1].n / w[0].n;
        for (name, a, ase, b, bse) in [
            ("gamma1", w[0].gamma1, w[0].gamma1_se, w[1].gamma1, w[1].gamma1_se),
            ("gamma2", w[0].gamma2, w[0].gamma2_se, w[1].gamma2, w[1].gamma2_se),
            ("gamma3", w[0].gamma3, w[0].gamma3_se, w[1].gamma3, w[1].gamma3_se),
        ] {
            let (ratio, se) = mcclt::ratio_with_se(a, ase, b, bse);
            checks.push(CheckLine::new(
                format!("{name} linear in n ({} -> {})", w[0].n, w[1].n),
                (ratio - expect).abs() <= 2.0 * se,
                format!("ratio {ratio:.3} ± {se:.3}, expected {expect}"),
            ));
        }
    }
    Ok(checks)
}

fn parse_floor(spec: &str) -> Result<RadiusFloor> {
    match spec {
        "standard" => Ok(RadiusFloor::Standard),
        s => s
            .strip_prefix("beta=")
            .and_then(|b| b.parse().ok())
            .filter(|b: &f64| *b > 0.0)
            .map(|beta| RadiusFloor::Scaled { beta })
            .ok_or_else(|| Error::InvalidArgument(format!("floor must be `standard` or `beta=<positive>`, got `{s}`"))),
    }
}

fn stabilize(args: &ModelArgs, m: usize, trials: Option<usize>, floor: &str, seed: u64, out: &mut Out) -> Result<Vec<CheckLine>> {
    let floor = parse_floor(floor)?;
    let runs: Vec<(GraphModel, usize, usize)> = if args.model == "all" {
        let mut v: Vec<_> = (1..=4).map(|m| (GraphModel::Rgg { radius: args.r }, m, trials.unwrap_or(500))).collect();
        for model in [GraphModel::Knn { k: 1 }, GraphModel::Rng] {
            v.extend((1..=2).map(|m| (model, m, trials.unwrap_or(200))));
        }
        v
    } else {
        let model = parse_model(&args.model, args.r, args.k)?;
        let default = if matches!(model, GraphModel::Rgg { .. }) { 500 } else { 200 };
        vec![(model, m, trials.unwrap_or(default))]
    };
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    for (model, m, trials) in runs {
        let dim = if matches!(model, GraphModel::Rgg { .. }) { args.d } else { 2 };
        let rep = stabilization_suite(model, dim, m, floor, trials, seed)?;
        checks.push(CheckLine::new(
            format!("{} m={m} stable at R={}", model.name(), rep.radius.value),
            rep.check.violations == 0,
            format!("{} changes in {} resamplings, {} interior points", rep.check.violations, rep.check.trials, rep.check.interior_points),
        ));
        reports.push(rep);
    }
    out.json("stabilize.json", &reports)?;
    Ok(checks)
}

fn geometry(samples: usize, trials: usize, seed: u64, out: &mut Out) -> Result<Vec<CheckLine>> {
    let sector = rng_lens_sector_check(samples, seed);
    let angle = lens_angle_check(samples, seed);
    let knn = positivity_event_check(PositivityModel::Knn1, trials, seed)?;
    let rng = positivity_event_check(PositivityModel::Rng, trials, seed)?;
    let bound = 4.0 * std::f64::consts::PI / 13.0 - 1e-9;
    let checks = vec![
        CheckLine::new("sector-in-lens claim", sector.outside_lens == 0 && sector.no_fitting_sector == 0, format!("{} samples, {} outside, {} without sector", sector.samples, sector.outside_lens, sector.no_fitting_sector)),
        CheckLine::new("lens angles >= 4pi/13", angle.angle_violations == 0 && angle.min_alpha >= bound, format!("min angle {:.6} over {} samples", angle.min_alpha, angle.samples)),
        CheckLine::new("lens norms >= 1 + eps", angle.norm_violations == 0, format!("min max-norm {:.6}", angle.min_max_norm)),
        CheckLine::new("kNN(1) positivity event", knn.edge_removals == 0 && knn.event_failures == 0, format!("{} removals in {} trials", knn.edge_removals, knn.trials)),
        CheckLine::new("RNG positivity event", rng.edge_removals == 0 && rng.event_failures == 0, format!("{} removals in {} trials", rng.edge_removals, rng.trials)),
    ];
    out.json("geometry.json", &serde_json::json!({ "sector": sector, "angle": angle, "knn": knn, "rng": rng }))?;
    Ok(checks)
}

fn selftest(seed: u64) -> Result<Vec<CheckLine>> {
    let mut checks = Vec::new();
    let flat = vec![0.0; 500];
    let ks = mcclt::gaussianity_tests(&flat, 1.0, false)?;
    checks.push(CheckLine::new("KS rejects a point mass", ks.ks_p_value < 1e-6, format!("p = {:.2e}", ks.ks_p_value)));

    let ns = [64.0, 256.0, 1024.0];
    let (slope, _) = mcclt::fit_slope(&ns, &ns.map(|n: f64| n.powf(-0.5)))?;
    let (flat_slope, _) = mcclt::fit_slope(&ns, &[0.3; 3])?;
    checks.push(CheckLine::new("rate fit recovers synthetic slopes", (slope + 0.5).abs() < 1e-12 && flat_slope.abs() < 1e-12, format!("{slope}, {flat_slope}")));

    let cfg = ExperimentConfig::new(1, GraphModel::Rgg { radius: 0.5 }, TestFunction::monomial(2), vec![64.0], 400, seed);
    let row = &mcclt::poincare_check(&cfg, 800)?[0];
    checks.push(CheckLine::new("Poincaré check flags a shrunken right side", row.margin_with(0.1) < -3.0, format!("margin at 0.1x: {:.1} sigma", row.margin_with(0.1))));

    let witness = rgg_chain_witness(2, 1.0, 4, 1.0)?;
    checks.push(CheckLine::new("undersized RGG radius changes the cost", witness.changed, format!("{} -> {}", witness.cost_interior, witness.cost_with_exterior)));

    let probe = crate::pointproc::PointConfig::new(Window::from_half_side(2, 3.0)?, &[vec![0.5, 0.5]])?;
    let smooth = verify_stabilization(&probe, GraphModel::Rng, &TestFunction::smooth(SmoothKind::Bump), 1.0, 1, ResampleOptions::default());
    checks.push(CheckLine::new("stabilization check refuses non-polynomials", smooth.is_err(), "error returned"));

    let weighted = parse_config("c = 0\nf = xgauss\n");
    checks.push(CheckLine::new("config rejects c = 0", matches!(weighted, Err(Error::ConfigInvalid(_))), format!("{:?}", weighted.err())));

    let diverges = lc_norm(&TestFunction::smooth(SmoothKind::Exp2Abs), 1.0);
    checks.push(CheckLine::new("weighted norm diverges outside the admissible class", diverges.is_err(), format!("{:?}", diverges.err())));

    let broken = vec![vec![1], vec![]];
    checks.push(CheckLine::new("asymmetric neighbor lists are detected", !lists_symmetric(&broken), "0 -> 1 without 1 -> 0"));

    let cfg = ExperimentConfig::new(1, GraphModel::Rgg { radius: 0.5 }, TestFunction::monomial(2), vec![64.0], 100, seed);
    let guard = mcclt::gamma_estimates(&ExperimentConfig { options: mcclt::EstimatorOptions { cost_limit: 1, ..cfg.options.clone() }, ..cfg });
    checks.push(CheckLine::new("Stein cost guard trips", matches!(guard, Err(Error::CostGuard { .. })), "guard error returned"));
    Ok(checks)
}
