//! Monte Carlo checks of the fluctuation theory of linear eigenvalue
//! statistics `Tr f(A_n)` over Poisson windows of volume `n`.
//!
//! Replicate statistics feed variance estimates with jackknife errors,
//! Kolmogorov–Smirnov and Wasserstein comparisons against a fitted normal,
//! a log–log rate fit, the Poincaré inequality, Malliavin–Stein error terms
//! and the weighted variance bound. Every random draw comes from
//! [`stream`](crate::pointproc::stream) keyed by the master seed, and all
//! reductions run in a fixed order, so results do not depend on the worker
//! count.

use std::f64::consts::PI;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graphs::{build_graph, GraphModel};
use crate::pointproc::{poisson_count, sample_poisson, stream, PointConfig, Provenance, Window};
use crate::scores::{diff_first, diff_second, rgg_diff_first_local, rgg_diff_second_local, trace_on, Functional};
use crate::spectral::{sobolev_norms, trace_weighted, TestFunction};
use crate::stabilization::ball_volume;

pub const MIN_REPLICATES: usize = 100;

const PROBE_SALT: u64 = 0x7072_6f62_6573;
const GAMMA_SALT: u64 = 0x6761_6d6d_61;
const BOOT_SALT: u64 = 0x626f_6f74;

/// Tuning of the estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorOptions {
    /// Bootstrap resamples for the rate-fit interval.
    pub bootstrap: usize,
    /// Fresh configurations per probe in the Stein terms.
    pub inner: usize,
    /// Outer probes for the Poincaré right-hand side and the Stein terms.
    pub probes: usize,
    /// Largest allowed `probes * inner` before a Stein run is refused.
    pub cost_limit: u64,
    /// Also report the Anderson–Darling statistic.
    pub anderson_darling: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { bootstrap: 200, inner: 64, probes: 2000, cost_limit: 50_000_000, anderson_darling: false }
    }
}

/// One Monte Carlo experiment over a grid of window volumes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub model: GraphModel,
    pub f: TestFunction,
    /// Weight `c` of `Tr f(A) e^{cA}`; plain `Tr f(A)` when absent.
    pub c: Option<f64>,
    pub n_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub options: EstimatorOptions,
}

impl ExperimentConfig {
    pub fn new(dim: usize, model: GraphModel, f: TestFunction, n_grid: Vec<f64>, replicates: usize, seed: u64) -> Self {
        Self { dim, model, f, c: None, n_grid, replicates, seed, options: EstimatorOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::ConfigInvalid("dimension must be at least 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::ConfigInvalid("n_grid is empty".into()));
        }
        if self.n_grid.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(Error::ConfigInvalid("n_grid entries must be positive".into()));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::ConfigInvalid("n_grid must be strictly increasing".into()));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::ConfigInvalid(format!("replicates must be at least {MIN_REPLICATES}, got {}", self.replicates)));
        }
        if let Some(c) = self.c {
            if c == 0.0 || !c.is_finite() {
                return Err(Error::ConfigInvalid("the weighted statistic Tr f(A) e^{cA} requires a constant c != 0".into()));
            }
            if !self.f.vanishes_at_zero() {
                return Err(Error::ConfigInvalid(format!("the weighted statistic requires f(0) = 0, got {}", self.f.eval(0.0))));
            }
        }
        Ok(())
    }

    fn window(&self, n: f64) -> Result<Window> {
        Window::new(self.dim, n)
    }
}

/// Replicate statistics at one window volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub n: f64,
    pub values: Vec<f64>,
}

fn statistic(config: &PointConfig, model: GraphModel, f: &TestFunction, c: Option<f64>) -> Result<f64> {
    if config.is_empty() || f.is_zero() {
        return Ok(0.0);
    }
    let adj = build_graph(config, model);
    match c {
        Some(c) => trace_weighted(&adj, f, c),
        None => trace_on(&adj, f),
    }
}

/// `M` independent values of the statistic per grid volume. Replicate `j`
/// at grid index `k` uses stream `(seed, k·2^32 + j)`.
pub fn run_replicates(cfg: &ExperimentConfig) -> Result<Vec<SampleSet>> {
    cfg.validate()?;
    cfg.n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let window = cfg.window(n)?;
            let values = (0..cfg.replicates)
                .into_par_iter()
                .map(|j| statistic(&sample_poisson(&window, cfg.seed, ((k as u64) << 32) | j as u64), cfg.model, &cfg.f, cfg.c))
                .collect::<Result<Vec<f64>>>()?;
            Ok(SampleSet { n, values })
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Sample variance with its jackknife standard error.
pub fn jackknife_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n < 3 {
        return (variance(values), f64::INFINITY);
    }
    let m = mean(values);
    let dev: Vec<f64> = values.iter().map(|v| v - m).collect();
    let s: f64 = dev.iter().sum();
    let q: f64 = dev.iter().map(|d| d * d).sum();
    let nf = n as f64;
    let loo: Vec<f64> = dev
        .iter()
        .map(|&d| {
            let (s1, q1) = (s - d, q - d * d);
            (q1 - s1 * s1 / (nf - 1.0)) / (nf - 2.0)
        })
        .collect();
    let lm = mean(&loo);
    let se = ((nf - 1.0) / nf * loo.iter().map(|v| (v - lm) * (v - lm)).sum::<f64>()).sqrt();
    (variance(values), se)
}

/// `Var/n` at one grid volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarRow {
    pub n: f64,
    pub mean: f64,
    pub var_over_n: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sigma2Estimate {
    pub rows: Vec<VarRow>,
    /// `Var/n` at the largest volume.
    pub sigma2: f64,
    pub sigma2_se: f64,
    /// Relative change of `Var/n` between the two largest volumes.
    pub drift: f64,
    pub drift_se: f64,
    /// `σ̂²` is within two standard errors of zero.
    pub degenerate: bool,
}

pub fn estimate_sigma2(samples: &[SampleSet]) -> Result<Sigma2Estimate> {
    if samples.len() < 2 {
        return Err(Error::Insufficient(format!("variance asymptotics need at least 2 grid points, got {}", samples.len())));
    }
    let rows: Vec<VarRow> = samples
        .iter()
        .map(|s| {
            let (v, se) = jackknife_variance(&s.values);
            VarRow { n: s.n, mean: mean(&s.values), var_over_n: v / s.n, se: se / s.n }
        })
        .collect();
    let (prev, last) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
    let (drift, drift_se) = if prev.var_over_n > 0.0 {
        let ratio = last.var_over_n / prev.var_over_n;
        let rel = ((last.se / last.var_over_n.max(f64::MIN_POSITIVE)).powi(2) + (prev.se / prev.var_over_n).powi(2)).sqrt();
        (ratio - 1.0, ratio * rel)
    } else if last.var_over_n == 0.0 {
        (0.0, 0.0)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let degenerate = last.var_over_n <= 2.0 * last.se || last.var_over_n == 0.0;
    if degenerate {
        log::warn!(
            "Var/n = {:.4e} ± {:.2e} at n = {} is consistent with 0; the normal approximation does not apply, the scaled fluctuations vanish instead",
            last.var_over_n,
            last.se,
            last.n
        );
    }
    Ok(Sigma2Estimate { sigma2: last.var_over_n, sigma2_se: last.se, drift, drift_se, degenerate, rows })
}

/// `(T - mean T)/√n` for each replicate.
pub fn normalized(set: &SampleSet) -> Vec<f64> {
    let m = mean(&set.values);
    set.values.iter().map(|v| (v - m) / set.n.sqrt()).collect()
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let t = -PI * PI / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=20).map(|k| (((2 * k - 1) * (2 * k - 1)) as f64 * t).exp()).sum::<f64>() * (2.0 * PI).sqrt() / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let t = -2.0 * lambda * lambda;
        let tail: f64 = (1..=20).map(|k| if k % 2 == 1 { 1.0 } else { -1.0 } * ((k * k) as f64 * t).exp()).sum::<f64>() * 2.0;
        tail.clamp(0.0, 1.0)
    }
}

/// Kolmogorov–Smirnov distance between the sample and `N(0, σ²)`, with the
/// asymptotic p-value at `λ = (√M + 0.12 + 0.11/√M) D`.
pub fn ks_test(z: &[f64], sigma: f64) -> (f64, f64) {
    let s = sorted(z);
    let m = s.len() as f64;
    let nd = std_normal();
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = nd.cdf(v / sigma);
            ((i + 1) as f64 / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max);
    let root = m.sqrt();
    (d, kolmogorov_tail((root + 0.12 + 0.11 / root) * d))
}

/// Anderson–Darling `A²` against `N(0, σ²)` with the small-sample
/// modification for estimated parameters, and its approximate p-value.
pub fn anderson_darling(z: &[f64], sigma: f64) -> (f64, f64) {
    let s = sorted(z);
    let m = s.len();
    let nd = std_normal();
    let cdf: Vec<f64> = s.iter().map(|&v| nd.cdf(v / sigma).clamp(1e-300, 1.0 - 1e-16)).collect();
    let sum: f64 = (0..m).map(|i| (2 * i + 1) as f64 * (cdf[i].ln() + (1.0 - cdf[m - 1 - i]).ln())).sum();
    let mf = m as f64;
    let a2 = -mf - sum / mf;
    let a = a2 * (1.0 + 0.75 / mf + 2.25 / (mf * mf));
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    (a2, p.clamp(0.0, 1.0))
}

/// Mean absolute difference between the order statistics and the `N(0, σ²)`
/// quantiles at plotting positions `(i - 1/2)/M`.
pub fn wasserstein_to_normal(z: &[f64], sigma: f64) -> f64 {
    let s = sorted(z);
    let m = s.len() as f64;
    let nd = std_normal();
    s.iter().enumerate().map(|(i, &v)| (v - sigma * nd.inverse_cdf((i as f64 + 0.5) / m)).abs()).sum::<f64>() / m
}

/// Wasserstein distance between two equally sized samples by matching order statistics.
pub fn wasserstein_between(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArgument(format!("sample sizes {} and {} must agree and be positive", a.len(), b.len())));
    }
    Ok(sorted(a).iter().zip(sorted(b)).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianityTest {
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub w_hat: f64,
    pub ad_statistic: Option<f64>,
    pub ad_p_value: Option<f64>,
}

/// Compares normalized samples with `N(0, σ̂²)`.
pub fn gaussianity_tests(z: &[f64], sigma2: f64, anderson: bool) -> Result<GaussianityTest> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::DegenerateVariance(format!("normal comparison needs σ̂² > 0, got {sigma2}")));
    }
    if z.is_empty() {
        return Err(Error::Insufficient("no samples".into()));
    }
    let sigma = sigma2.sqrt();
    let (ks_statistic, ks_p_value) = ks_test(z, sigma);
    let ad = anderson.then(|| anderson_darling(z, sigma));
    Ok(GaussianityTest { ks_statistic, ks_p_value, w_hat: wasserstein_to_normal(z, sigma), ad_statistic: ad.map(|a| a.0), ad_p_value: ad.map(|a| a.1) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap: usize,
}

/// Least-squares slope and intercept of `log w` against `log n`.
pub fn fit_slope(ns: &[f64], ws: &[f64]) -> Result<(f64, f64)> {
    if ns.len() < 3 || ns.len() != ws.len() {
        return Err(Error::Insufficient(format!("rate fit needs at least 3 grid points, got {}", ns.len())));
    }
    if ws.iter().chain(ns).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Insufficient("rate fit needs positive finite values".into()));
    }
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = ws.iter().map(|w| w.ln()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// `d̂_W` per grid volume against `N(0, σ̂²)`, `σ̂²` taken from the largest volume.
pub fn w_hats(samples: &[SampleSet]) -> Result<Vec<f64>> {
    let last = samples.last().ok_or_else(|| Error::Insufficient("no grid points".into()))?;
    let sigma2 = variance(&last.values) / last.n;
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateVariance("σ̂² = 0 at the largest volume".into()));
    }
    Ok(samples.iter().map(|s| wasserstein_to_normal(&normalized(s), sigma2.sqrt())).collect())
}

/// Rate fit of `d̂_W` with a percentile bootstrap interval, resampling
/// replicates within each grid volume.
pub fn rate_fit(samples: &[SampleSet], bootstrap: usize, seed: u64) -> Result<RateFit> {
    let ns: Vec<f64> = samples.iter().map(|s| s.n).collect();
    let (slope, intercept) = fit_slope(&ns, &w_hats(samples)?)?;
    let mut slopes: Vec<f64> = (0..bootstrap)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = stream(seed ^ BOOT_SALT, b as u64);
            let resampled: Vec<SampleSet> = samples
                .iter()
                .map(|s| SampleSet { n: s.n, values: (0..s.values.len()).map(|_| *s.values.choose(&mut rng).unwrap()).collect() })
                .collect();
            w_hats(&resampled).ok().and_then(|w| fit_slope(&ns, &w).ok()).map(|f| f.0)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let pick = |q: f64| if slopes.is_empty() { f64::NAN } else { slopes[((q * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)] };
    Ok(RateFit { slope, intercept, ci_low: pick(0.025), ci_high: pick(0.975), bootstrap: slopes.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltRow {
    pub n: f64,
    pub mean: f64,
    pub var_over_n: f64,
    pub var_se: f64,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub ad_statistic: Option<f64>,
    pub ad_p_value: Option<f64>,
    pub w_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub config: ExperimentConfig,
    pub rows: Vec<CltRow>,
    pub sigma2: f64,
    pub sigma2_se: f64,
    pub drift: f64,
    pub drift_se: f64,
    pub degenerate: bool,
    pub rate: Option<RateFit>,
    pub centering: String,
}

/// Replicates, variance asymptotics, normal comparison and rate fit.
pub fn clt_report(cfg: &ExperimentConfig) -> Result<(CltReport, Vec<SampleSet>)> {
    let samples = run_replicates(cfg)?;
    let est = estimate_sigma2(&samples)?;
    let rows = samples
        .iter()
        .zip(&est.rows)
        .map(|(s, r)| {
            let g = if est.degenerate { None } else { gaussianity_tests(&normalized(s), est.sigma2, cfg.options.anderson_darling).ok() };
            CltRow {
                n: r.n,
                mean: r.mean,
                var_over_n: r.var_over_n,
                var_se: r.se,
                ks_statistic: g.as_ref().map(|g| g.ks_statistic),
                ks_p_value: g.as_ref().map(|g| g.ks_p_value),
                ad_statistic: g.as_ref().and_then(|g| g.ad_statistic),
                ad_p_value: g.as_ref().and_then(|g| g.ad_p_value),
                w_hat: g.as_ref().map(|g| g.w_hat),
            }
        })
        .collect();
    let rate = if samples.len() >= 3 && !est.degenerate { rate_fit(&samples, cfg.options.bootstrap, cfg.seed).ok() } else { None };
    let report = CltReport {
        config: cfg.clone(),
        rows,
        sigma2: est.sigma2,
        sigma2_se: est.sigma2_se,
        drift: est.drift,
        drift_se: est.drift_se,
        degenerate: est.degenerate,
        rate,
        centering: "samples are centered by their sample mean; σ̂² is Var/n at the largest volume".into(),
    };
    Ok((report, samples))
}

pub fn write_samples_csv<W: Write>(samples: &[SampleSet], mut out: W) -> Result<()> {
    writeln!(out, "# spatial-spectra samples v1")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "replicate", "value"])?;
    for s in samples {
        for (j, v) in s.values.iter().enumerate() {
            w.write_record([format!("{}", s.n), j.to_string(), format!("{v:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

const SVG_W: f64 = 480.0;
const SVG_H: f64 = 320.0;
const PAD: f64 = 40.0;

fn svg_open(out: &mut impl Write, title: &str) -> Result<()> {
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" font-family="sans-serif" font-size="11">"#)?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(out, r#"<text x="{}" y="18" text-anchor="middle">{title}</text>"#, SVG_W / 2.0)?;
    writeln!(out, r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, SVG_H - PAD, SVG_W - PAD / 2.0, SVG_H - PAD)?;
    writeln!(out, r#"<line x1="{PAD}" y1="{}" x2="{PAD}" y2="{}" stroke="black"/>"#, SVG_H - PAD, PAD / 2.0)?;
    Ok(())
}

/// Density histogram of normalized samples with the `N(0, σ²)` density overlaid.
pub fn write_histogram_svg<W: Write>(z: &[f64], sigma: f64, mut out: W) -> Result<()> {
    let bins = ((z.len() as f64).sqrt().ceil() as usize).clamp(5, 60);
    let lo = z.iter().copied().fold(-3.0 * sigma, f64::min);
    let hi = z.iter().copied().fold(3.0 * sigma, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in z {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let dens: Vec<f64> = counts.iter().map(|&c| c as f64 / (z.len().max(1) as f64 * width)).collect();
    let peak = dens.iter().copied().fold(1.0 / (sigma * (2.0 * PI).sqrt()), f64::max);
    let sx = |v: f64| PAD + (v - lo) / (hi - lo) * (SVG_W - 1.5 * PAD);
    let sy = |p: f64| SVG_H - PAD - p / peak * (SVG_H - 1.5 * PAD);
    svg_open(&mut out, "normalized statistic")?;
    for (b, d) in dens.iter().enumerate() {
        let x0 = sx(lo + b as f64 * width);
        writeln!(out, r##"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#8fb3d9" stroke="#3b6a9a"/>"##, sy(*d), sx(lo + (b + 1) as f64 * width) - x0, SVG_H - PAD - sy(*d))?;
    }
    let nd = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let path: Vec<String> = (0..=200).map(|k| lo + (hi - lo) * k as f64 / 200.0).map(|v| format!("{:.2},{:.2}", sx(v), sy(nd.pdf(v)))).collect();
    writeln!(out, r##"<polyline fill="none" stroke="#c0392b" stroke-width="1.5" points="{}"/>"##, path.join(" "))?;
    writeln!(out, "</svg>")?;
    Ok(())
}

/// Normal QQ plot: order statistics against `N(0, σ²)` quantiles.
pub fn write_qq_svg<W: Write>(z: &[f64], sigma: f64, mut out: W) -> Result<()> {
    let s = sorted(z);
    let m = s.len() as f64;
    let nd = std_normal();
    let q: Vec<f64> = (0..s.len()).map(|i| sigma * nd.inverse_cdf((i as f64 + 0.5) / m)).collect();
    let lim = s.iter().chain(&q).map(|v| v.abs()).fold(sigma, f64::max) * 1.05;
    let sx = |v: f64| PAD + (v + lim) / (2.0 * lim) * (SVG_W - 1.5 * PAD);
    let sy = |v: f64| SVG_H - PAD - (v + lim) / (2.0 * lim) * (SVG_H - 1.5 * PAD);
    svg_open(&mut out, "normal QQ plot")?;
    writeln!(out, r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c0392b"/>"##, sx(-lim), sy(-lim), sx(lim), sy(lim))?;
    for (a, b) in q.iter().zip(&s) {
        writeln!(out, r##"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="#3b6a9a"/>"##, sx(*a), sy(*b))?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

/// Uniform point in the shell `inner ≤ |a - center| < outer`.
fn uniform_in_shell<R: Rng + ?Sized>(center: &[f64], inner: f64, outer: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    let (lo, hi) = (inner.powi(d as i32), outer.powi(d as i32));
    let rad = (lo + rng.random::<f64>() * (hi - lo)).powf(1.0 / d as f64);
    let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    center.iter().zip(&g).map(|(c, v)| c + v / norm * rad).collect()
}

/// Poisson points of the window that fall in the box `[lo, hi]`, which is
/// clipped to the window first.
fn sample_window_box<R: Rng + ?Sized>(window: &Window, lo: &[f64], hi: &[f64], rng: &mut R) -> PointConfig {
    let h = window.half_side();
    let bounds: Vec<(f64, f64)> = lo.iter().zip(hi).map(|(&a, &b)| (a.max(-h), b.min(h))).collect();
    let vol: f64 = bounds.iter().map(|(a, b)| (b - a).max(0.0)).product();
    let count = poisson_count(vol, rng);
    let mut coords = Vec::with_capacity(count * lo.len());
    for _ in 0..count {
        for &(a, b) in &bounds {
            coords.push(a + rng.random::<f64>() * (b - a));
        }
    }
    PointConfig::from_flat(*window, coords, Provenance::Manual)
}

/// Fresh configuration covering every `B(p, reach)`, `p` in `centers`.
fn local_config<R: Rng + ?Sized>(window: &Window, centers: &[&[f64]], reach: f64, rng: &mut R) -> PointConfig {
    let d = window.dim();
    let lo: Vec<f64> = (0..d).map(|a| centers.iter().map(|c| c[a]).fold(f64::INFINITY, f64::min) - reach).collect();
    let hi: Vec<f64> = (0..d).map(|a| centers.iter().map(|c| c[a]).fold(f64::NEG_INFINITY, f64::max) + reach).collect();
    sample_window_box(window, &lo, &hi, rng)
}

fn polynomial_degree(f: &TestFunction) -> Result<usize> {
    f.degree().ok_or_else(|| Error::InvalidArgument(format!("{f} is not a polynomial")))
}

/// `D_x Tr f(A)` on a fresh configuration. For the geometric graph only the
/// points within `m r` of `x` are sampled.
fn first_difference_probe<R: Rng + ?Sized>(window: &Window, model: GraphModel, f: &TestFunction, x: &[f64], rng: &mut R) -> Result<f64> {
    match model {
        GraphModel::Rgg { radius } => {
            let reach = polynomial_degree(f)? as f64 * radius;
            rgg_diff_first_local(&local_config(window, &[x], reach, rng), radius, f, x)
        }
        _ => {
            let q = PointConfig::from_flat(*window, crate::pointproc::sample_poisson_with(window, rng), Provenance::Manual);
            diff_first(&Functional::Trace(f.clone()), &q, model, x)
        }
    }
}

/// One side-by-side estimate of `Var F ≤ ∫ E (D_x F)² dx` at volume `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareRow {
    pub n: f64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// `(rhs - lhs)` in units of the combined standard error.
    pub margin_sigma: f64,
}

impl PoincareRow {
    /// Margin after multiplying the right-hand side by `scale`.
    pub fn margin_with(&self, scale: f64) -> f64 {
        let diff = scale * self.rhs - self.lhs;
        let se = (self.lhs_se.powi(2) + (scale * self.rhs_se).powi(2)).sqrt();
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }

    /// The inequality holds within three standard errors.
    pub fn holds(&self) -> bool {
        self.margin_sigma >= -3.0
    }
}

/// Left side from the replicate variance, right side as `|W_n|` times the
/// mean of `(D_x F)²` over uniform probes, each on a fresh configuration.
pub fn poincare_check(cfg: &ExperimentConfig, probes: usize) -> Result<Vec<PoincareRow>> {
    polynomial_degree(&cfg.f)?;
    if cfg.c.is_some() {
        return Err(Error::InvalidArgument("the Poincaré check uses the plain trace Tr f(A)".into()));
    }
    if probes < 2 {
        return Err(Error::Insufficient("at least 2 probes are needed".into()));
    }
    let samples = run_replicates(cfg)?;
    samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let window = cfg.window(s.n)?;
            let (lhs, lhs_se) = jackknife_variance(&s.values);
            let sq = (0..probes)
                .into_par_iter()
                .map(|p| {
                    let mut rng = stream(cfg.seed ^ PROBE_SALT, ((k as u64) << 32) | p as u64);
                    let x = window.uniform_point(&mut rng);
                    first_difference_probe(&window, cfg.model, &cfg.f, &x, &mut rng).map(|d| d * d)
                })
                .collect::<Result<Vec<f64>>>()?;
            let vol = window.volume();
            let rhs = vol * mean(&sq);
            let rhs_se = vol * (variance(&sq) / probes as f64).sqrt();
            let mut row = PoincareRow { n: s.n, lhs, lhs_se, rhs, rhs_se, margin_sigma: 0.0 };
            row.margin_sigma = row.margin_with(1.0);
            Ok(row)
        })
        .collect()
}

/// Estimated Malliavin–Stein error terms at one volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaEstimates {
    pub n: f64,
    pub gamma1: f64,
    pub gamma1_se: f64,
    pub gamma2: f64,
    pub gamma2_se: f64,
    pub gamma3: f64,
    pub gamma3_se: f64,
    /// Replicate variance of `F`.
    pub variance: f64,
    pub variance_se: f64,
    /// `4 √γ₁/Var + √γ₂/Var + γ₃/Var^{3/2}`.
    pub stein_bound: f64,
    pub bound_times_sqrt_n: f64,
    pub inner_evaluations: u64,
    /// Control probes with `|x - z|` beyond the `4 m r` support.
    pub beyond_support_probes: usize,
    /// Control probes whose second difference was not exactly zero.
    pub beyond_support_nonzero: usize,
}

struct GammaProbe {
    g1: f64,
    g2: f64,
    g3: f64,
    control: Option<bool>,
}

/// Importance-sampled error terms for the geometric graph: `z` uniform on
/// `W_n`, `x, y` uniform on `B(z, 4 m r)` and reweighted by the ball volume,
/// inner expectations averaged over `options.inner` fresh configurations.
pub fn gamma_estimates(cfg: &ExperimentConfig) -> Result<Vec<GammaEstimates>> {
    let GraphModel::Rgg { radius } = cfg.model else {
        return Err(Error::InvalidArgument("Stein terms are estimated for the random geometric graph".into()));
    };
    let m = polynomial_degree(&cfg.f)?;
    if cfg.c.is_some() {
        return Err(Error::InvalidArgument("Stein terms use the plain trace Tr f(A)".into()));
    }
    let (probes, inner) = (cfg.options.probes.max(2), cfg.options.inner.max(1));
    let estimated = (probes as u64).saturating_mul(inner as u64).saturating_mul(cfg.n_grid.len() as u64);
    log::info!("Stein terms: {estimated} inner evaluations over {} volumes", cfg.n_grid.len());
    if estimated > cfg.options.cost_limit {
        return Err(Error::CostGuard { estimated, limit: cfg.options.cost_limit });
    }
    let mr = m as f64 * radius;
    let support = 4.0 * mr;
    let ball = ball_volume(cfg.dim, support);
    let samples = run_replicates(cfg)?;
    samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let window = cfg.window(s.n)?;
            let vol = window.volume();
            let f = &cfg.f;
            let outcomes = (0..probes)
                .into_par_iter()
                .map(|p| -> Result<GammaProbe> {
                    let mut rng = stream(cfg.seed ^ GAMMA_SALT, ((k as u64) << 32) | p as u64);
                    let z = window.uniform_point(&mut rng);
                    let x = uniform_in_shell(&z, 0.0, support, &mut rng);
                    let y = uniform_in_shell(&z, 0.0, support, &mut rng);
                    let inside = window.contains(&x) && window.contains(&y);
                    let (mut a, mut b, mut c3) = (0.0, 0.0, 0.0);
                    for _ in 0..inner {
                        let q = local_config(&window, &[&x, &y, &z], mr, &mut rng);
                        c3 += rgg_diff_first_local(&q, radius, f, &z)?.abs().powi(3);
                        if inside {
                            let dx = rgg_diff_first_local(&q, radius, f, &x)?;
                            let dy = rgg_diff_first_local(&q, radius, f, &y)?;
                            let dxz = rgg_diff_second_local(&q, radius, f, &x, &z)?;
                            let dyz = rgg_diff_second_local(&q, radius, f, &y, &z)?;
                            a += dx * dx * dy * dy;
                            b += dxz * dxz * dyz * dyz;
                        }
                    }
                    let inv = 1.0 / inner as f64;
                    let (a, b) = (a * inv, b * inv);
                    let far = uniform_in_shell(&z, support * (1.0 + 1e-9), 2.0 * support, &mut rng);
                    let control = if window.contains(&far) {
                        let q = local_config(&window, &[&far, &z], mr, &mut rng);
                        Some(diff_second(&Functional::Trace(f.clone()), &q, cfg.model, &far, &z)? != 0.0)
                    } else {
                        None
                    };
                    Ok(GammaProbe { g1: vol * ball * ball * a.sqrt() * b.sqrt(), g2: vol * ball * ball * b, g3: vol * c3 * inv, control })
                })
                .collect::<Result<Vec<GammaProbe>>>()?;
            let summarize = |v: Vec<f64>| (mean(&v), (variance(&v) / v.len() as f64).sqrt());
            let (gamma1, gamma1_se) = summarize(outcomes.iter().map(|o| o.g1).collect());
            let (gamma2, gamma2_se) = summarize(outcomes.iter().map(|o| o.g2).collect());
            let (gamma3, gamma3_se) = summarize(outcomes.iter().map(|o| o.g3).collect());
            let (var, var_se) = jackknife_variance(&s.values);
            let stein_bound = if var > 0.0 { 4.0 * gamma1.sqrt() / var + gamma2.sqrt() / var + gamma3 / var.powf(1.5) } else { f64::INFINITY };
            Ok(GammaEstimates {
                n: s.n,
                gamma1,
                gamma1_se,
                gamma2,
                gamma2_se,
                gamma3,
                gamma3_se,
                variance: var,
                variance_se: var_se,
                stein_bound,
                bound_times_sqrt_n: stein_bound * s.n.sqrt(),
                inner_evaluations: (probes * inner) as u64,
                beyond_support_probes: outcomes.iter().filter(|o| o.control.is_some()).count(),
                beyond_support_nonzero: outcomes.iter().filter(|o| o.control == Some(true)).count(),
            })
        })
        .collect()
}

/// Exact `Var(Tr A²)` for the geometric graph of radius `r` on a segment of
/// length `n ≥ 2r`: `4 (½ ∫ g + ∫ g²)`, where `g(x)` is the length of
/// `[x - r, x + r]` inside the segment.
pub fn rgg_square_variance_1d(n: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && n >= 2.0 * r) {
        return Err(Error::InvalidArgument(format!("closed form needs 0 < 2r <= n, got r = {r}, n = {n}")));
    }
    let int_g = 2.0 * r * n - r * r;
    let int_g2 = 4.0 * r * r * (n - 2.0 * r) + 14.0 * r * r * r / 3.0;
    Ok(4.0 * (0.5 * int_g + int_g2))
}

/// `b / a` with its delta-method standard error, for independent estimates.
pub fn ratio_with_se(a: f64, a_se: f64, b: f64, b_se: f64) -> (f64, f64) {
    let r = b / a;
    (r, r.abs() * ((a_se / a).powi(2) + (b_se / b).powi(2)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedRow {
    pub function: String,
    pub n: f64,
    pub var_over_n: f64,
    pub se: f64,
    /// `‖f‖₂² + ‖f''‖₂²`.
    pub norm: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionSummary {
    pub function: String,
    pub max_ratio: f64,
    /// Ratios increase at every step and the total increase exceeds two
    /// combined standard errors.
    pub growth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedReport {
    pub c: f64,
    pub rows: Vec<WeightedRow>,
    pub summaries: Vec<FunctionSummary>,
    pub excluded: Vec<String>,
}

/// `Var(Tr f(A_n) e^{cA_n})/n ÷ (‖f‖₂² + ‖f''‖₂²)` for each function over the
/// grid of `base`. The zero function is listed as excluded.
pub fn weighted_variance_check(base: &ExperimentConfig, functions: &[TestFunction], c: f64) -> Result<WeightedReport> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidArgument("the weighted variance bound requires c != 0".into()));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut excluded = Vec::new();
    for f in functions {
        if f.is_zero() {
            excluded.push(f.to_string());
            continue;
        }
        if !f.vanishes_at_zero() {
            return Err(Error::InvalidArgument(format!("{f} does not vanish at 0")));
        }
        let (l2, l2pp) = sobolev_norms(f)?;
        let norm = l2 + l2pp;
        let cfg = ExperimentConfig { f: f.clone(), c: Some(c), ..base.clone() };
        let samples = run_replicates(&cfg)?;
        let fr: Vec<WeightedRow> = samples
            .iter()
            .map(|s| {
                let (v, se) = jackknife_variance(&s.values);
                WeightedRow { function: f.to_string(), n: s.n, var_over_n: v / s.n, se: se / s.n, norm, ratio: v / s.n / norm, ratio_se: se / s.n / norm }
            })
            .collect();
        let increasing = fr.windows(2).all(|w| w[1].ratio > w[0].ratio);
        let (first, last) = (&fr[0], &fr[fr.len() - 1]);
        let growth = fr.len() >= 2 && increasing && last.ratio - first.ratio > 2.0 * (first.ratio_se.powi(2) + last.ratio_se.powi(2)).sqrt();
        summaries.push(FunctionSummary { function: f.to_string(), max_ratio: fr.iter().map(|r| r.ratio).fold(0.0, f64::max), growth });
        rows.extend(fr);
    }
    Ok(WeightedReport { c, rows, summaries, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgg_cfg(dim: usize, r: f64, f: TestFunction, grid: Vec<f64>, m: usize) -> ExperimentConfig {
        ExperimentConfig::new(dim, GraphModel::Rgg { radius: r }, f, grid, m, 3)
    }

    #[test]
    fn validation_rules() {
        let ok = rgg_cfg(1, 0.5, TestFunction::monomial(2), vec![16.0, 32.0], 100);
        assert!(ok.validate().is_ok());
        assert!(rgg_cfg(1, 0.5, TestFunction::monomial(2), vec![32.0, 16.0], 100).validate().is_err());
        assert!(rgg_cfg(1, 0.5, TestFunction::monomial(2), vec![16.0], 99).validate().is_err());
        let weighted = ExperimentConfig { c: Some(0.0), ..ok.clone() };
        assert!(matches!(weighted.validate(), Err(Error::ConfigInvalid(m)) if m.contains("c != 0")));
    }

    #[test]
    fn zero_function_gives_zero_samples() {
        let s = run_replicates(&rgg_cfg(2, 1.0, TestFunction::zero(), vec![16.0, 32.0], 100)).unwrap();
        assert!(s.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
        let e = estimate_sigma2(&s).unwrap();
        assert_eq!(e.sigma2, 0.0);
        assert!(e.degenerate);
    }

    #[test]
    fn first_power_has_zero_trace() {
        let s = run_replicates(&rgg_cfg(2, 1.0, TestFunction::monomial(1), vec![16.0, 32.0], 100)).unwrap();
        assert!(s.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn square_statistic_counts_edges() {
        let cfg = rgg_cfg(2, 1.0, TestFunction::monomial(2), vec![20.0, 40.0], 100);
        let s = run_replicates(&cfg).unwrap();
        for (k, set) in s.iter().enumerate() {
            let w = Window::new(2, set.n).unwrap();
            for (j, v) in set.values.iter().enumerate() {
                let c = sample_poisson(&w, cfg.seed, ((k as u64) << 32) | j as u64);
                assert_eq!(*v, 2.0 * build_graph(&c, cfg.model).edge_count() as f64);
            }
        }
        assert_eq!(s, run_replicates(&cfg).unwrap());
    }

    #[test]
    fn jackknife_matches_direct_leave_one_out() {
        let v: Vec<f64> = (0..40).map(|k| ((k * 7919) % 61) as f64 * 0.37 - 3.0).collect();
        let (var, se) = jackknife_variance(&v);
        let loo: Vec<f64> = (0..v.len()).map(|i| variance(&[&v[..i], &v[i + 1..]].concat())).collect();
        let lm = mean(&loo);
        let direct = ((v.len() - 1) as f64 / v.len() as f64 * loo.iter().map(|x| (x - lm).powi(2)).sum::<f64>()).sqrt();
        assert!((se - direct).abs() < 1e-10 * direct);
        assert!((var - variance(&v)).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_branches_agree() {
        for lambda in [1.17, 1.18, 1.19] {
            let t = -2.0 * lambda * lambda;
            let series: f64 = 2.0 * (1..=50).map(|k: i32| (-1f64).powi(k - 1) * ((k * k) as f64 * t).exp()).sum::<f64>();
            assert!((kolmogorov_tail(lambda) - series).abs() < 1e-10);
        }
        // critical values of the Kolmogorov distribution
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn gaussian_samples_pass_and_constants_fail() {
        let mut rng = stream(9, 0);
        let z: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = gaussianity_tests(&z, 1.0, true).unwrap();
        assert!(g.ks_p_value > 0.01, "{g:?}");
        assert!(g.w_hat <= 0.05, "{g:?}");
        assert!(g.ad_p_value.unwrap() > 0.01);
        let flat = vec![0.0; 2000];
        let g = gaussianity_tests(&flat, 1.0, true).unwrap();
        assert!(g.ks_p_value < 1e-6 && g.ks_statistic >= 0.5);
        assert!(gaussianity_tests(&z, 0.0, false).is_err());
    }

    #[test]
    fn wasserstein_identity() {
        let a = [3.0, -1.0, 2.5, 0.0];
        assert_eq!(wasserstein_between(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein_between(&a, &[4.0, 0.0, 3.5, 1.0]).unwrap(), 1.0);
        assert!(wasserstein_between(&a, &a[..2]).is_err());
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let ns = [64.0, 256.0, 1024.0, 4096.0];
        let ws: Vec<f64> = ns.iter().map(|n: &f64| 3.7 * n.powf(-0.5)).collect();
        assert!((fit_slope(&ns, &ws).unwrap().0 + 0.5).abs() < 1e-12);
        assert!(fit_slope(&ns, &[0.2; 4]).unwrap().0.abs() < 1e-12);
        assert!(fit_slope(&ns[..2], &ws[..2]).is_err());
        assert!(fit_slope(&ns[..3], &[0.1, 0.0, 0.1]).is_err());
    }

    #[test]
    fn poincare_zero_and_negative_control() {
        let zero = rgg_cfg(1, 0.5, TestFunction::zero(), vec![32.0], 100);
        let rows = poincare_check(&zero, 50).unwrap();
        assert_eq!((rows[0].lhs, rows[0].rhs, rows[0].margin_sigma), (0.0, 0.0, 0.0));
        let sq = rgg_cfg(1, 0.5, TestFunction::monomial(2), vec![64.0], 400);
        let row = &poincare_check(&sq, 800).unwrap()[0];
        assert!(row.holds(), "{row:?}");
        assert!(row.margin_with(0.1) < -3.0, "{row:?}");
    }

    #[test]
    fn stein_terms_respect_support_and_guard() {
        let mut cfg = rgg_cfg(1, 0.5, TestFunction::monomial(2), vec![32.0], 100);
        cfg.options.probes = 200;
        cfg.options.inner = 8;
        let g = &gamma_estimates(&cfg).unwrap()[0];
        assert!(g.beyond_support_probes > 0);
        assert_eq!(g.beyond_support_nonzero, 0);
        assert!(g.gamma1 > 0.0 && g.gamma2 > 0.0 && g.gamma3 > 0.0);
        cfg.options.cost_limit = 10;
        assert!(matches!(gamma_estimates(&cfg), Err(Error::CostGuard { .. })));
    }

    #[test]
    fn weighted_ratio_is_scale_free() {
        let base = rgg_cfg(1, 0.5, TestFunction::zero(), vec![32.0, 64.0], 100);
        let f = TestFunction::smooth(crate::spectral::SmoothKind::XGauss);
        let rep = weighted_variance_check(&base, &[f.clone(), f.scaled(2.0), TestFunction::zero()], 1.0).unwrap();
        assert_eq!(rep.excluded, vec!["zero".to_string()]);
        for (a, b) in rep.rows[..2].iter().zip(&rep.rows[2..4]) {
            assert!((a.ratio - b.ratio).abs() <= 1e-9 * a.ratio);
        }
        assert!(weighted_variance_check(&base, &[f], 0.0).is_err());
    }
}
