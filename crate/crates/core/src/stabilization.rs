//! Sector-based stabilization radii for planar kNN and relative neighborhood
//! graphs, the RGG radius `r m`, exterior-resampling verification of the
//! add-one cost, and the geometric predicates behind variance positivity.
//!
//! Sectors are open: the apex, the bounding rays and the arc are excluded, so
//! a point `p` belongs to `x + T_j(ℓ)` when its direction lies strictly inside
//! sector `j` and `|p - x| < ℓ`. The fan's first sector starts at the positive
//! horizontal axis and sectors are numbered counterclockwise from 1.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::{in_open_lens, GraphBuild, GraphModel};
use crate::pointproc::{dist2, norm2, poisson_count, sample_poisson_with, stream, GridIndex, PointConfig, Window};
use crate::spectral::{closed_walk_trace_change, TestFunction};

/// Sector count used for kNN stabilization.
pub const KNN_SECTORS: usize = 6;
/// Sector count used for RNG stabilization.
pub const RNG_SECTORS: usize = 13;
/// The `ε` of the RNG positivity event.
pub const RNG_EPSILON: f64 = 1e-5;
/// Default `β` in the floor `β m²` of the second radius.
pub const STANDARD_BETA: f64 = 100.0;

/// `J` open sectors of angle `2π/J` around an apex in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorFan {
    pub apex: [f64; 2],
    pub sectors: usize,
    pub radius: f64,
}

impl SectorFan {
    pub fn new(apex: [f64; 2], sectors: usize, radius: f64) -> Result<Self> {
        if sectors < 3 {
            return Err(Error::InvalidArgument(format!("a fan needs at least 3 sectors, got {sectors}")));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("fan radius must be positive".into()));
        }
        Ok(Self { apex, sectors, radius })
    }

    pub fn knn(apex: [f64; 2], radius: f64) -> Result<Self> {
        Self::new(apex, KNN_SECTORS, radius)
    }

    pub fn rng(apex: [f64; 2], radius: f64) -> Result<Self> {
        Self::new(apex, RNG_SECTORS, radius)
    }

    pub fn width(&self) -> f64 {
        TAU / self.sectors as f64
    }

    /// 1-based sector of the direction of `p`, ignoring the radius.
    ///
    /// The apex gives `None`. A point exactly on a bounding ray goes to the
    /// lower-indexed of its two sectors (ray 0 to sector 1) and is logged.
    pub fn sector_of(&self, p: &[f64]) -> Result<Option<usize>> {
        if p.len() != 2 {
            return Err(Error::PlanarOnly(p.len()));
        }
        Ok(sector_index(p[0] - self.apex[0], p[1] - self.apex[1], self.sectors))
    }

    /// Membership in the open sector `apex + T_j(radius)`, `j` 1-based.
    pub fn contains(&self, j: usize, p: &[f64]) -> Result<bool> {
        let d2 = dist2(p, &self.apex);
        Ok(d2 < self.radius * self.radius && self.sector_of(p)? == Some(j))
    }
}

fn sector_index(dx: f64, dy: f64, sectors: usize) -> Option<usize> {
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    let w = TAU / sectors as f64;
    let theta = dy.atan2(dx).rem_euclid(TAU);
    let j = ((theta / w) as usize).min(sectors - 1);
    let len = dx.hypot(dy);
    for ray in [j, j + 1] {
        let (s, c) = (ray as f64 * w).sin_cos();
        if (c * dy - s * dx).abs() <= 1e-12 * len && c * dx + s * dy > 0.0 {
            let assigned = if ray % sectors == 0 { 1 } else { ray };
            log::debug!("point ({dx}, {dy}) relative to apex lies on ray {ray}; assigned to sector {assigned}");
            return Some(assigned);
        }
    }
    Some(j + 1)
}

/// Sector count and required points per sector for a stabilizing model.
fn fan_spec(model: GraphModel) -> Result<(usize, usize)> {
    match model {
        GraphModel::Knn { k } => Ok((KNN_SECTORS, k + 1)),
        GraphModel::Rng => Ok((RNG_SECTORS, 1)),
        GraphModel::Rgg { .. } => Err(Error::InvalidArgument("sector radii are defined for kNN and RNG only".into())),
    }
}

/// Farthest distance from `x` within `(x + cone) ∩ box` for the cone of
/// directions with angles in `(lo, hi)`, `hi - lo < π`, and the closed box
/// `[bx.0, bx.1] × [by.0, by.1]` containing `x`.
fn cone_reach_box(x: &[f64], lo: f64, hi: f64, bbox: [(f64, f64); 2]) -> f64 {
    let exit = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let mut t = f64::INFINITY;
        for ((p, u), (l, h)) in [(x[0], c), (x[1], s)].into_iter().zip(bbox) {
            if u > 0.0 {
                t = t.min((h - p) / u);
            } else if u < 0.0 {
                t = t.min((l - p) / u);
            }
        }
        t.max(0.0)
    };
    let (sl, cl) = lo.sin_cos();
    let (sh, ch) = hi.sin_cos();
    let mut reach = exit(lo).max(exit(hi));
    let [(x0, x1), (y0, y1)] = bbox;
    for corner in [[x1, y1], [x0, y1], [x0, y0], [x1, y0]] {
        let v = [corner[0] - x[0], corner[1] - x[1]];
        if cl * v[1] - sl * v[0] > 0.0 && v[0] * sh - v[1] * ch > 0.0 {
            reach = reach.max(v[0].hypot(v[1]));
        }
    }
    reach
}

/// Farthest distance from `x` inside `(x + cone) ∩ [-h, h]²`.
fn cone_reach(x: &[f64], lo: f64, hi: f64, h: f64) -> f64 {
    cone_reach_box(x, lo, hi, [(-h, h), (-h, h)])
}

/// Least integer radius of an open ball around `x` holding a point at distance `d`.
#[inline]
fn least_radius(d: f64) -> u64 {
    d.floor() as u64 + 1
}

/// Points of a planar configuration with a grid, for repeated sector queries.
struct SectorIndex<'a> {
    coords: &'a [f64],
    grid: GridIndex,
    sectors: usize,
    need: usize,
    start: f64,
}

impl<'a> SectorIndex<'a> {
    fn new(coords: &'a [f64], model: GraphModel) -> Result<Self> {
        let (sectors, need) = fan_spec(model)?;
        let n = coords.len() / 2;
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in coords.chunks(2) {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(1e-12);
        let density = if n > 1 { n as f64 / area } else { 1.0 };
        // radius where each sector expects about four times the points it needs
        let start = (4.0 * (need * sectors) as f64 / (std::f64::consts::PI * density)).sqrt().max(1e-6);
        let grid = GridIndex::from_coords(coords, 2, (start / 2.0).max(1e-6));
        Ok(Self { coords, grid, sectors, need, start })
    }

    /// Per-sector distance of the `need`-th nearest point, searching the
    /// ball of radius `rho` only. Entries stay infinite when a sector holds
    /// fewer than `need` points within `rho`.
    fn sector_distances(&self, x: &[f64], rho: f64) -> Vec<f64> {
        let need = self.need;
        // per sector, the `need` smallest squared distances in ascending order
        let mut best = vec![f64::INFINITY; self.sectors * need];
        let r2 = rho * rho;
        self.grid.for_each_candidate(x, rho, |i| {
            let p = &self.coords[2 * i..2 * i + 2];
            let d2 = dist2(p, x);
            if d2 > r2 {
                return;
            }
            if let Some(j) = sector_index(p[0] - x[0], p[1] - x[1], self.sectors) {
                let list = &mut best[(j - 1) * need..j * need];
                if d2 < list[need - 1] {
                    let at = list.partition_point(|&e| e <= d2);
                    list.copy_within(at..need - 1, at + 1);
                    list[at] = d2;
                }
            }
        });
        best.chunks(need).map(|l| l[need - 1].sqrt()).collect()
    }

    /// First radius: `max_j min{ℓ : count(x + T_j(ℓ)) ≥ need}`, or `None`
    /// if some sector does not fill within distance `cap`.
    fn r1(&self, x: &[f64], cap: f64) -> Option<u64> {
        let mut rho = self.start.min(cap);
        loop {
            let d = self.sector_distances(x, rho);
            if d.iter().all(|v| v.is_finite()) {
                return d.iter().map(|&v| least_radius(v)).max();
            }
            if rho >= cap {
                return None;
            }
            rho = (1.5 * rho).min(cap);
        }
    }

    /// Window-restricted first radius: each sector stops at `need` points or
    /// once its intersection with `[-h, h]²` stops growing.
    fn r1_window(&self, x: &[f64], h: f64) -> u64 {
        let w = TAU / self.sectors as f64;
        let exhaust: Vec<f64> = (0..self.sectors).map(|j| cone_reach(x, j as f64 * w, (j + 1) as f64 * w, h)).collect();
        let cap = exhaust.iter().copied().fold(0.0, f64::max);
        let mut rho = self.start.min(cap).max(1e-9);
        loop {
            let d = self.sector_distances(x, rho);
            if (0..self.sectors).all(|j| d[j].is_finite() || exhaust[j] <= rho) || rho >= cap {
                return (0..self.sectors).map(|j| least_radius(exhaust[j]).min(if d[j].is_finite() { least_radius(d[j]) } else { u64::MAX })).max().unwrap();
            }
            rho = (2.0 * rho).min(cap);
        }
    }
}

fn require_planar(config: &PointConfig) -> Result<()> {
    if config.dim() != 2 {
        return Err(Error::PlanarOnly(config.dim()));
    }
    Ok(())
}

/// First stabilization radius of `x` for kNN (`k + 1` points in each of six
/// sectors) or RNG (one point in each of thirteen sectors). A configuration
/// point at `x` is the apex and never counts.
pub fn r1(x: &[f64], config: &PointConfig, model: GraphModel) -> Result<u64> {
    require_planar(config)?;
    SectorIndex::new(config.coords(), model)?
        .r1(x, config.window().diameter())
        .ok_or_else(|| Error::NotStabilized(format!("a sector around ({}, {}) does not fill within the window", x[0], x[1])))
}

pub fn r1_knn(x: &[f64], config: &PointConfig, k: usize) -> Result<u64> {
    r1(x, config, GraphModel::knn(k)?)
}

pub fn r1_rng(x: &[f64], config: &PointConfig) -> Result<u64> {
    r1(x, config, GraphModel::Rng)
}

/// Window-restricted first radius; always finite for `x` in the window.
pub fn r1_window(x: &[f64], config: &PointConfig, model: GraphModel) -> Result<u64> {
    require_planar(config)?;
    if !config.window().contains(x) {
        return Err(Error::OutsideWindow);
    }
    Ok(SectorIndex::new(config.coords(), model)?.r1_window(x, config.window().half_side()))
}

pub fn r1_knn_window(x: &[f64], config: &PointConfig, k: usize) -> Result<u64> {
    r1_window(x, config, GraphModel::knn(k)?)
}

/// Lower end `β m²` of the second-radius scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "floor", rename_all = "lowercase")]
pub enum RadiusFloor {
    /// `β = 100`.
    Standard,
    /// Debug mode with a configurable `β`.
    Scaled { beta: f64 },
}

impl RadiusFloor {
    pub fn beta(&self) -> f64 {
        match self {
            RadiusFloor::Standard => STANDARD_BETA,
            RadiusFloor::Scaled { beta } => *beta,
        }
    }

    pub fn start(&self, m: usize) -> u64 {
        ((self.beta() * (m * m) as f64).ceil() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RadiusKind {
    R1,
    R2,
    R1W,
    R2W,
    Rgg,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabRadius {
    pub kind: RadiusKind,
    pub value: f64,
    pub anchor: Vec<f64>,
    pub model: GraphModel,
    pub m: usize,
    pub floor: Option<RadiusFloor>,
}

/// RGG stabilization radius `r m`.
pub fn rgg_radius(radius: f64, m: usize, dim: usize) -> StabRadius {
    StabRadius { kind: RadiusKind::Rgg, value: radius * m as f64, anchor: vec![0.0; dim], model: GraphModel::Rgg { radius }, m, floor: None }
}

/// Largest integer `ℓ` with `ℓ + √ℓ ≤ h`.
fn largest_exact_ell(h: f64) -> u64 {
    let fits = |l: u64| (l as f64) + (l as f64).sqrt() <= h;
    let mut l = (h.max(0.0)) as u64;
    while l > 0 && !fits(l) {
        l -= 1;
    }
    l
}

/// Smallest window half-side on which [`r2`] can certify `ℓ = start`.
pub fn required_half_side(start: u64) -> f64 {
    start as f64 + (start as f64).sqrt()
}

/// Second stabilization radius at the origin,
/// `min{ℓ ≥ β m² : R1(0; P ∪ {0}) ∨ max_{x ∈ P ∩ B(0,ℓ)} R1(x; P) ≤ √ℓ}`.
///
/// A candidate `ℓ` is decided exactly only while `B(0, ℓ + √ℓ)` lies in the
/// window, so the scan stops with [`Error::NotStabilized`] past that point.
pub fn r2(config: &PointConfig, model: GraphModel, m: usize, floor: RadiusFloor) -> Result<StabRadius> {
    require_planar(config)?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let h = config.window().half_side();
    let start = floor.start(m);
    let last = largest_exact_ell(h).min(config.window().diameter().ceil() as u64);
    if last < start {
        let need = required_half_side(start);
        return Err(Error::NotStabilized(format!(
            "window half-side {h:.1} cannot hold B(0, ℓ + √ℓ) at ℓ = {start}; need half-side ≥ {need:.1} (about {:.0} points)",
            4.0 * need * need
        )));
    }
    let index = SectorIndex::new(config.coords(), model)?;
    let cap = (last as f64).sqrt() + 1.0;
    let mut current = index.r1(&[0.0, 0.0], cap).unwrap_or(u64::MAX);
    let limit = (last * last) as f64;
    let mut order: Vec<(f64, usize)> = config.points().enumerate().map(|(i, p)| (norm2(p), i)).filter(|&(n2, _)| n2 <= limit).collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut next = 0;
    for ell in start..=last {
        while current != u64::MAX && next < order.len() && order[next].0 <= (ell * ell) as f64 {
            current = current.max(index.r1(config.point(order[next].1), cap).unwrap_or(u64::MAX));
            next += 1;
        }
        if current == u64::MAX {
            break;
        }
        if current * current <= ell {
            return Ok(StabRadius { kind: RadiusKind::R2, value: ell as f64, anchor: vec![0.0, 0.0], model, m, floor: Some(floor) });
        }
    }
    Err(Error::NotStabilized(format!("no admissible ℓ in [{start}, {last}] inside the window")))
}

pub fn r2_knn(config: &PointConfig, k: usize, m: usize) -> Result<StabRadius> {
    r2(config, GraphModel::knn(k)?, m, RadiusFloor::Standard)
}

pub fn r2_rng(config: &PointConfig, m: usize) -> Result<StabRadius> {
    r2(config, GraphModel::Rng, m, RadiusFloor::Standard)
}

/// Window-restricted second radius built from [`r1_window`]. It always
/// exists because every window-restricted first radius is bounded.
pub fn r2_window(config: &PointConfig, model: GraphModel, m: usize, floor: RadiusFloor) -> Result<StabRadius> {
    require_planar(config)?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let origin = [0.0, 0.0];
    let h = config.window().half_side();
    let index = SectorIndex::new(config.coords(), model)?;
    let mut current = index.r1_window(&origin, h);
    let mut order: Vec<(f64, usize)> = config.points().enumerate().map(|(i, p)| (norm2(p), i)).collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut next = 0;
    let mut ell = floor.start(m);
    loop {
        while next < order.len() && order[next].0 <= (ell * ell) as f64 {
            current = current.max(index.r1_window(config.point(order[next].1), h));
            next += 1;
        }
        if current * current <= ell {
            return Ok(StabRadius { kind: RadiusKind::R2W, value: ell as f64, anchor: origin.to_vec(), model, m, floor: Some(floor) });
        }
        // the condition can only change when a new point enters B(0, ℓ) or ℓ reaches current²
        let entry = order.get(next).map(|&(n2, _)| n2.sqrt().ceil() as u64).unwrap_or(u64::MAX);
        ell = (ell + 1).max(entry.min(current * current));
    }
}

/// Second radius for kNN/RNG, or `r m` for the RGG.
pub fn stabilization_radius(config: &PointConfig, model: GraphModel, m: usize, floor: RadiusFloor) -> Result<StabRadius> {
    match model {
        GraphModel::Rgg { radius } => Ok(rgg_radius(radius, m, config.dim())),
        _ => r2(config, model, m, floor),
    }
}

/// Outcome of the shield-property check on one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShieldReport {
    pub checked: usize,
    /// Points whose first radius does not exist inside the window.
    pub skipped: usize,
    pub violations: usize,
}

/// Every graph neighbor of a point `x` lies in the open ball `B(x, R1(x))`.
pub fn shield_check(config: &PointConfig, model: GraphModel) -> Result<ShieldReport> {
    require_planar(config)?;
    let index = SectorIndex::new(config.coords(), model)?;
    let adj = GraphBuild::new(config.coords(), 2, model).adjacency();
    let cap = config.window().diameter();
    let mut report = ShieldReport { checked: 0, skipped: 0, violations: 0 };
    for (i, x) in config.points().enumerate() {
        let Some(rho) = index.r1(x, cap) else {
            report.skipped += 1;
            continue;
        };
        report.checked += 1;
        let r2 = (rho * rho) as f64;
        if adj.neighbors(i).iter().any(|&j| dist2(config.point(j as usize), x) >= r2) {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// One point of the empirical tail `P(R2 ≥ ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalPoint {
    pub ell: u64,
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub model: GraphModel,
    pub m: usize,
    pub floor: RadiusFloor,
    pub half_side: f64,
    pub trials: usize,
    /// Trials whose radius exceeded what the window can certify.
    pub censored: usize,
    pub points: Vec<SurvivalPoint>,
}

/// Monte Carlo tail of the second radius on fresh configurations in the
/// square of half-side `half_side`. Censored trials count as exceeding every
/// reported `ℓ`.
pub fn survival_curve(model: GraphModel, m: usize, floor: RadiusFloor, trials: usize, half_side: f64, seed: u64) -> Result<SurvivalCurve> {
    let window = Window::from_half_side(2, half_side)?;
    let values: Vec<Result<Option<u64>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let cfg = PointConfig::from_flat(window, sample_poisson_with(&window, &mut rng), crate::pointproc::Provenance::Sampled { seed, replicate: t as u64 });
            match r2(&cfg, model, m, floor) {
                Ok(r) => Ok(Some(r.value as u64)),
                Err(Error::NotStabilized(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let censored = values.iter().filter(|v| v.is_none()).count();
    let start = floor.start(m);
    let top = values.iter().flatten().copied().max().unwrap_or(start).max(largest_exact_ell(half_side).min(start.max(1) * 4));
    let points = (start..=top + 1)
        .map(|ell| {
            let hits = values.iter().filter(|v| v.map_or(true, |r| r >= ell)).count();
            SurvivalPoint { ell, tail: hits as f64 / trials.max(1) as f64 }
        })
        .collect();
    Ok(SurvivalCurve { model, m, floor, half_side, trials, censored, points })
}

pub fn write_survival_csv<W: Write>(curve: &SurvivalCurve, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# spatial-spectra survival v1 model={} m={} beta={}", curve.model.name(), curve.m, curve.floor.beta())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ell", "tail"])?;
    for p in &curve.points {
        w.write_record([p.ell.to_string(), format!("{:?}", p.tail)])?;
    }
    w.flush()?;
    Ok(())
}

/// Volume of the `d`-ball of radius `r`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / statrs::function::gamma::gamma(h + 1.0) * r.powi(d as i32)
}

/// Intensity-one Poisson points in the open shell `inner < |a| < outer`.
pub fn sample_shell<R: Rng + ?Sized>(dim: usize, inner: f64, outer: f64, rng: &mut R) -> Vec<f64> {
    let count = poisson_count(ball_volume(dim, outer) - ball_volume(dim, inner), rng);
    let (lo, hi) = (inner.powi(dim as i32), outer.powi(dim as i32));
    let mut out = Vec::with_capacity(count * dim);
    while out.len() < count * dim {
        let rad = (lo + rng.random::<f64>() * (hi - lo)).powf(1.0 / dim as f64);
        if !(rad > inner && rad < outer) {
            continue;
        }
        let dir: Vec<f64> = if dim == 1 {
            vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]
        } else {
            let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = norm2(&g).sqrt();
            if n == 0.0 {
                continue;
            }
            g.into_iter().map(|v| v / n).collect()
        };
        out.extend(dir.into_iter().map(|v| v * rad));
    }
    out
}

fn polynomial_of(f: &TestFunction) -> Result<&[f64]> {
    f.coefficients().ok_or_else(|| Error::InvalidArgument(format!("stabilization checks need a polynomial, got {f}")))
}

/// Per-power change `Tr A'^q - Tr A^q`, `q = 0..=m`, from appending the
/// origin to the points of `graph` (whose coordinates are `coords`).
fn origin_profile(graph: &GraphBuild, coords: &[f64], dim: usize, m: usize) -> Result<Vec<f64>> {
    let mut with = coords.to_vec();
    with.extend(std::iter::repeat_n(0.0, dim));
    let after = graph.extend(&with);
    closed_walk_trace_change(&graph.adjacency(), &after.adjacency(), m)
}

/// Points sorted into strips of height 8 along the second axis, then by the
/// first: the traces are order-free and nearby points share cache lines.
fn spatial_order<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut pts: Vec<&[f64]> = points.collect();
    if dim >= 2 {
        pts.sort_by(|a, b| (a[1] / 8.0).floor().total_cmp(&(b[1] / 8.0).floor()).then(a[0].total_cmp(&b[0])));
    }
    pts.into_iter().flatten().copied().collect()
}

fn cost_of(profile: &[f64], a: &[f64]) -> f64 {
    profile.iter().zip(a).map(|(d, c)| d * c).sum()
}

/// Add-one cost of the origin for a polynomial `f` on flat coordinates.
pub fn origin_cost(coords: &[f64], dim: usize, model: GraphModel, f: &TestFunction) -> Result<f64> {
    let a = polynomial_of(f)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let g = GraphBuild::new(coords, dim, model);
    Ok(cost_of(&origin_profile(&g, coords, dim, a.len() - 1)?, a))
}

/// Options for exterior resampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResampleOptions {
    pub seed: u64,
    /// Shell width beyond the radius; `√R + 1` when unset.
    pub width: Option<f64>,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self { seed: 1, width: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationReport {
    pub model: GraphModel,
    pub function: String,
    pub radius: f64,
    pub exterior_width: f64,
    pub interior_points: usize,
    pub mean_exterior_points: f64,
    pub trials: usize,
    pub violations: usize,
    pub baseline_cost: f64,
    pub max_abs_cost_change: f64,
}

/// Resample the exterior of `B(0, R)` `trials` times and count how often the
/// add-one cost of the origin differs from its value on `P ∩ B(0, R)`.
///
/// Each exterior is a fresh intensity-one Poisson sample in the shell
/// `R < |a| < R + w`. Costs are compared through their exact per-power
/// closed-walk changes.
pub fn verify_stabilization(
    config: &PointConfig,
    model: GraphModel,
    f: &TestFunction,
    radius: f64,
    trials: usize,
    options: ResampleOptions,
) -> Result<StabilizationReport> {
    let a = polynomial_of(f)?.to_vec();
    let m = a.len().saturating_sub(1);
    let dim = config.dim();
    if config.position(&vec![0.0; dim]).is_some() {
        return Err(Error::DuplicatePoint { index: config.position(&vec![0.0; dim]).unwrap() });
    }
    let width = options.width.unwrap_or(radius.sqrt() + 1.0);
    let inner = spatial_order(config.points().filter(|p| norm2(p) <= radius * radius), dim);
    let base = GraphBuild::new(&inner, dim, model);
    let baseline = origin_profile(&base, &inner, dim, m)?;
    let outcomes: Vec<Result<(bool, f64, usize)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(options.seed, t as u64);
            let shell = sample_shell(dim, radius, radius + width, &mut rng);
            let shell = spatial_order(shell.chunks_exact(dim), dim);
            let mut union = inner.clone();
            union.extend_from_slice(&shell);
            let g = base.extend(&union);
            let profile = origin_profile(&g, &union, dim, m)?;
            Ok((profile != baseline, (cost_of(&profile, &a) - cost_of(&baseline, &a)).abs(), shell.len() / dim))
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(StabilizationReport {
        model,
        function: f.to_string(),
        radius,
        exterior_width: width,
        interior_points: inner.len() / dim,
        mean_exterior_points: outcomes.iter().map(|o| o.2 as f64).sum::<f64>() / trials.max(1) as f64,
        trials,
        violations: outcomes.iter().filter(|o| o.0).count(),
        baseline_cost: cost_of(&baseline, &a),
        max_abs_cost_change: outcomes.iter().map(|o| o.1).fold(0.0, f64::max),
    })
}

/// Full stabilization run for `f = x^m`: sample one configuration large
/// enough to certify the radius, compute the radius, and resample the
/// exterior `trials` times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub m: usize,
    pub radius: StabRadius,
    pub half_side: f64,
    pub expected_points: f64,
    pub check: StabilizationReport,
}

pub fn stabilization_suite(model: GraphModel, dim: usize, m: usize, floor: RadiusFloor, trials: usize, seed: u64) -> Result<SuiteReport> {
    let half_side = match model {
        GraphModel::Rgg { radius } => radius * m as f64 + 1.0,
        _ => {
            if dim != 2 {
                return Err(Error::PlanarOnly(dim));
            }
            // room to scan past the floor when a configuration needs it
            (required_half_side(floor.start(m).max(100)) + 2.0).ceil()
        }
    };
    let window = Window::from_half_side(dim, half_side)?;
    log::info!("stabilization suite {}: window half-side {half_side}, about {:.0} points", model.name(), window.volume());
    let mut rng = stream(seed, u64::MAX);
    let config = PointConfig::from_flat(window, sample_poisson_with(&window, &mut rng), crate::pointproc::Provenance::Sampled { seed, replicate: u64::MAX });
    let radius = stabilization_radius(&config, model, m, floor)?;
    let check = verify_stabilization(&config, model, &TestFunction::monomial(m), radius.value, trials, ResampleOptions { seed, width: None })?;
    Ok(SuiteReport { m, radius, half_side, expected_points: window.volume(), check })
}

/// Add-one cost with and without an exterior for a hand-built RGG chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub radius: f64,
    pub interior: Vec<Vec<f64>>,
    pub exterior: Vec<Vec<f64>>,
    pub cost_interior: f64,
    pub cost_with_exterior: f64,
    pub changed: bool,
}

/// Positive control for an undersized RGG radius: points `0.9 r j e_1`,
/// `j = 1..=⌊m/2⌋`, split into those inside `B(0, R)` and those beyond. With
/// `f = x^m` the farthest chain point is reachable by a closed walk from the
/// origin, so the cost changes whenever some chain point lies outside.
pub fn rgg_chain_witness(dim: usize, r: f64, m: usize, radius: f64) -> Result<WitnessReport> {
    let chain: Vec<Vec<f64>> = (1..=m / 2)
        .map(|j| {
            let mut p = vec![0.0; dim];
            p[0] = 0.9 * r * j as f64;
            p
        })
        .collect();
    let (interior, exterior): (Vec<Vec<f64>>, Vec<Vec<f64>>) = chain.into_iter().partition(|p| norm2(p) <= radius * radius);
    if exterior.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no chain point within {} hops lies beyond R = {radius}; closed {m}-walks from the origin cannot leave B(0, R)",
            m / 2
        )));
    }
    let model = GraphModel::rgg(r)?;
    let f = TestFunction::monomial(m);
    let flat = |v: &[Vec<f64>]| v.iter().flatten().copied().collect::<Vec<f64>>();
    let cost_interior = origin_cost(&flat(&interior), dim, model, &f)?;
    let mut all = interior.clone();
    all.extend(exterior.iter().cloned());
    let cost_with_exterior = origin_cost(&flat(&all), dim, model, &f)?;
    Ok(WitnessReport { radius, changed: cost_interior != cost_with_exterior, interior, exterior, cost_interior, cost_with_exterior })
}

/// Angle at `b` between `a - b` and `c - b`.
fn angle_at(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let u = [a[0] - b[0], a[1] - b[1]];
    let v = [c[0] - b[0], c[1] - b[1]];
    (u[0] * v[1] - u[1] * v[0]).abs().atan2(u[0] * v[0] + u[1] * v[1])
}

fn circle_intersections(c1: [f64; 2], r1: f64, c2: [f64; 2], r2: f64) -> Vec<[f64; 2]> {
    let dx = c2[0] - c1[0];
    let dy = c2[1] - c1[1];
    let d = dx.hypot(dy);
    if d == 0.0 || d > r1 + r2 || d < (r1 - r2).abs() {
        return Vec::new();
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let (mx, my) = (c1[0] + a * dx / d, c1[1] + a * dy / d);
    vec![[mx - h * dy / d, my + h * dx / d], [mx + h * dy / d, my - h * dx / d]]
}

fn polar(r: f64, theta: f64) -> [f64; 2] {
    [r * theta.cos(), r * theta.sin()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LensSectorReport {
    pub samples: usize,
    /// Points of `C(y)` found outside the closed lens of `0` and `y`.
    pub outside_lens: usize,
    /// Instances where no 13-fan sector fits inside the angular range of `C(y)`.
    pub no_fitting_sector: usize,
    /// Whether the control point beyond the `2π/3` opening was outside `C(y)`.
    pub negative_control_outside: bool,
}

/// Samples `y` and a point of the sector `C(y)` (apex 0, radius `|y|`,
/// opening `2π/3` around `y`) and checks lens membership. Also checks that
/// some sector of the 13-fan lies angularly inside `C(y)`.
pub fn rng_lens_sector_check(samples: usize, seed: u64) -> LensSectorReport {
    let mut rng = stream(seed, 0);
    let w = TAU / RNG_SECTORS as f64;
    let mut report = LensSectorReport { samples, outside_lens: 0, no_fitting_sector: 0, negative_control_outside: false };
    for _ in 0..samples {
        let ry = 0.1 + 5.0 * rng.random::<f64>();
        let ty = TAU * rng.random::<f64>();
        let y = polar(ry, ty);
        let p = polar(ry * rng.random::<f64>().sqrt(), ty + (rng.random::<f64>() * 2.0 - 1.0) * PI / 3.0);
        let tol = 1e-12 * ry * ry;
        let r2 = ry * ry;
        if norm2(&p) > r2 + tol || dist2(&p, &y) > r2 + tol {
            report.outside_lens += 1;
        }
        let lo = ty - PI / 3.0;
        let fits = (0..RNG_SECTORS).any(|j| {
            let start = (j as f64 * w - lo).rem_euclid(TAU);
            start + w <= 2.0 * PI / 3.0
        });
        if !fits {
            report.no_fitting_sector += 1;
        }
    }
    let y = [1.0, 0.0];
    let q = polar(1.0, 2.0 * PI / 3.0 + 0.2);
    let off_axis = angle_at(y, [0.0, 0.0], q);
    report.negative_control_outside = off_axis > PI / 3.0;
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LensAngleReport {
    pub samples: usize,
    pub proposals: usize,
    pub min_alpha: f64,
    pub min_inscribed: f64,
    pub min_max_norm: f64,
    pub angle_violations: usize,
    pub norm_violations: usize,
    /// Pairs for which the witness points or the tip `s` did not exist.
    pub missing_witness: usize,
}

/// Samples `X_i, X_j` in the annulus `1 ≤ |·| ≤ 5` with the origin in their
/// open lens and checks the two claims behind the 13-sector argument:
/// `max(|x|, |y|) ≥ 1 + ε` and `∠(y, 0, x) ≥ 4π/13` for the witness points
/// `x, y` on the lens boundary at distance `(1 + ε)|X_i - X_j|/2` from the
/// midpoint. The inscribed angle `∠(y, s, x)` at the lens tip is reported.
pub fn lens_angle_check(samples: usize, seed: u64) -> LensAngleReport {
    let mut rng = stream(seed, 0);
    let eps = RNG_EPSILON;
    let bound = 4.0 * PI / RNG_SECTORS as f64;
    let mut report = LensAngleReport {
        samples,
        proposals: 0,
        min_alpha: f64::INFINITY,
        min_inscribed: f64::INFINITY,
        min_max_norm: f64::INFINITY,
        angle_violations: 0,
        norm_violations: 0,
        missing_witness: 0,
    };
    let annulus = |rng: &mut rand_chacha::ChaCha8Rng| polar((1.0 + 24.0 * rng.random::<f64>()).sqrt(), TAU * rng.random::<f64>());
    let mut done = 0;
    while done < samples {
        report.proposals += 1;
        let xi = annulus(&mut rng);
        let xj = annulus(&mut rng);
        if !in_open_lens(&[0.0, 0.0], &xi, &xj) {
            continue;
        }
        done += 1;
        let dist = dist2(&xi, &xj).sqrt();
        let mid = [(xi[0] + xj[0]) / 2.0, (xi[1] + xj[1]) / 2.0];
        let reach = (1.0 + eps) * dist / 2.0;
        let witness = |near: [f64; 2], far: [f64; 2]| {
            circle_intersections(far, dist, mid, reach)
                .into_iter()
                .map(|p| ((near[0] - p[0]) * p[0] + (near[1] - p[1]) * p[1], p))
                .filter(|(ip, _)| *ip < 0.0)
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, p)| p)
        };
        let tip = circle_intersections(xi, dist, xj, dist).into_iter().min_by(|a, b| (xi[0] * a[0] + xi[1] * a[1]).total_cmp(&(xi[0] * b[0] + xi[1] * b[1])));
        let (Some(x), Some(y), Some(s)) = (witness(xi, xj), witness(xj, xi), tip) else {
            report.missing_witness += 1;
            continue;
        };
        let alpha = angle_at(y, [0.0, 0.0], x);
        let inscribed = angle_at(y, s, x);
        let max_norm = norm2(&x).sqrt().max(norm2(&y).sqrt());
        report.min_alpha = report.min_alpha.min(alpha);
        report.min_inscribed = report.min_inscribed.min(inscribed);
        report.min_max_norm = report.min_max_norm.min(max_norm);
        if alpha < bound - 1e-9 {
            report.angle_violations += 1;
        }
        if max_norm < 1.0 + eps - 1e-12 {
            report.norm_violations += 1;
        }
    }
    report
}

/// Model whose variance-positivity event is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PositivityModel {
    Knn1,
    Rng,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivityReport {
    pub model: PositivityModel,
    pub trials: usize,
    /// Trials in which inserting the origin removed at least one edge.
    pub edge_removals: usize,
    /// Trials where the sampled configuration failed the stated event.
    pub event_failures: usize,
    pub mean_points: f64,
}

/// Half-side of the square used for the positivity events.
pub const POSITIVITY_HALF_SIDE: f64 = 4.0;

/// Count of a Poisson variable with mean `lambda` conditioned to be positive,
/// by inversion.
fn zero_truncated_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * -(-lambda).exp_m1();
    let mut p = lambda * (-lambda).exp();
    let mut acc = p;
    let mut k = 1;
    while acc < u && k < 1000 {
        k += 1;
        p *= lambda / k as f64;
        acc += p;
    }
    k
}

/// Area of `B(c, ρ) \ B(0, 1)` for `|c| = 1`.
fn cap_outside_unit(rho: f64) -> f64 {
    // intersection of circles of radii 1 and ρ with centers at distance 1
    let (r, d) = (rho, 1.0f64);
    let a1 = ((d * d + 1.0 - r * r) / (2.0 * d)).acos();
    let a2 = ((d * d + r * r - 1.0) / (2.0 * d * r)).acos();
    let lens = a1 + r * r * a2 - 0.5 * ((-d + 1.0 + r) * (d + 1.0 - r) * (d - 1.0 + r) * (d + 1.0 + r)).sqrt();
    PI * r * r - lens
}

const KNN_EVENT_CENTERS: usize = 32;
const KNN_EVENT_RHO: f64 = 1.0 / 16.0;

/// Configuration conditioned on `P(B(0,1)) = 0` and `P(A_i) ≥ 1` for the 32
/// sets `A_i = B(v_i, 1/16) \ B(0,1)`, `v_i` equally spaced on the unit circle.
fn sample_knn_event<R: Rng + ?Sized>(window: &Window, rng: &mut R) -> Vec<f64> {
    let centers: Vec<[f64; 2]> = (0..KNN_EVENT_CENTERS).map(|i| polar(1.0, TAU * i as f64 / KNN_EVENT_CENTERS as f64)).collect();
    let rho2 = KNN_EVENT_RHO * KNN_EVENT_RHO;
    let mut pts: Vec<f64> = sample_poisson_with(window, rng)
        .chunks(2)
        .filter(|p| norm2(p) >= 1.0 && centers.iter().all(|c| dist2(p, c) >= rho2))
        .flatten()
        .copied()
        .collect();
    let area = cap_outside_unit(KNN_EVENT_RHO);
    for c in &centers {
        let count = zero_truncated_poisson(area, rng);
        let mut placed = 0;
        while placed < count {
            let p = [c[0] + KNN_EVENT_RHO * (2.0 * rng.random::<f64>() - 1.0), c[1] + KNN_EVENT_RHO * (2.0 * rng.random::<f64>() - 1.0)];
            if dist2(&p, c) < rho2 && norm2(&p) >= 1.0 {
                pts.extend_from_slice(&p);
                placed += 1;
            }
        }
    }
    pts
}

/// Every point of the unit circle lies within `1/4` of some point.
fn unit_circle_covered(coords: &[f64]) -> bool {
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    for p in coords.chunks(2) {
        let r = norm2(p).sqrt();
        if (r - 1.0).abs() > 0.25 || r == 0.0 {
            continue;
        }
        let cos = ((1.0 + r * r - 1.0 / 16.0) / (2.0 * r)).clamp(-1.0, 1.0);
        let half = cos.acos();
        let center = p[1].atan2(p[0]).rem_euclid(TAU);
        arcs.push((center - half, center + half));
        arcs.push((center - half + TAU, center + half + TAU));
    }
    if arcs.is_empty() {
        return false;
    }
    arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let origin = arcs[0].0;
    let mut reach = origin;
    for (lo, hi) in arcs {
        if lo > reach {
            return false;
        }
        reach = reach.max(hi);
        if reach >= origin + TAU {
            return true;
        }
    }
    false
}

/// Configuration conditioned on `P(B(0,1)) = 0` and one or more points in
/// every annular piece `T_i(1 + ε) \ B(0, 1)` of the 13-fan.
fn sample_rng_event<R: Rng + ?Sized>(window: &Window, rng: &mut R) -> Vec<f64> {
    let outer = 1.0 + RNG_EPSILON;
    let mut pts: Vec<f64> = sample_poisson_with(window, rng).chunks(2).filter(|p| norm2(p) >= outer * outer).flatten().copied().collect();
    let w = TAU / RNG_SECTORS as f64;
    let area = w / 2.0 * (outer * outer - 1.0);
    for i in 0..RNG_SECTORS {
        for _ in 0..zero_truncated_poisson(area, rng) {
            let r = (1.0 + rng.random::<f64>() * (outer * outer - 1.0)).sqrt();
            let mut u = rng.random::<f64>();
            while u == 0.0 {
                u = rng.random::<f64>();
            }
            pts.extend_from_slice(&polar(r, (i as f64 + u) * w));
        }
    }
    pts
}

fn rng_event_holds(coords: &[f64]) -> bool {
    let outer2 = (1.0 + RNG_EPSILON).powi(2);
    let mut filled = [false; RNG_SECTORS];
    for p in coords.chunks(2) {
        let n2 = norm2(p);
        if n2 < 1.0 {
            return false;
        }
        if n2 < outer2 {
            if let Some(j) = sector_index(p[0], p[1], RNG_SECTORS) {
                filled[j - 1] = true;
            }
        }
    }
    filled.iter().all(|&f| f)
}

/// Samples configurations on the positivity event of the model and checks
/// that inserting the origin removes no existing edge. Sampling is exact:
/// the conditioned pieces get zero-truncated Poisson counts and the rest of
/// the window an independent Poisson sample.
pub fn positivity_event_check(model: PositivityModel, trials: usize, seed: u64) -> Result<PositivityReport> {
    let window = Window::from_half_side(2, POSITIVITY_HALF_SIDE)?;
    let graph_model = match model {
        PositivityModel::Knn1 => GraphModel::Knn { k: 1 },
        PositivityModel::Rng => GraphModel::Rng,
    };
    let outcomes: Vec<(bool, bool, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let pts = match model {
                PositivityModel::Knn1 => sample_knn_event(&window, &mut rng),
                PositivityModel::Rng => sample_rng_event(&window, &mut rng),
            };
            let holds = match model {
                PositivityModel::Knn1 => pts.chunks(2).all(|p| norm2(p) >= 1.0) && unit_circle_covered(&pts),
                PositivityModel::Rng => rng_event_holds(&pts),
            };
            let before = GraphBuild::new(&pts, 2, graph_model);
            let mut with = pts.clone();
            with.extend_from_slice(&[0.0, 0.0]);
            let after = before.extend(&with).adjacency();
            let removed = before.adjacency().edges().iter().any(|&(i, j)| !after.has_edge(i as usize, j as usize));
            (removed, !holds, pts.len() / 2)
        })
        .collect();
    Ok(PositivityReport {
        model,
        trials,
        edge_removals: outcomes.iter().filter(|o| o.0).count(),
        event_failures: outcomes.iter().filter(|o| o.1).count(),
        mean_points: outcomes.iter().map(|o| o.2 as f64).sum::<f64>() / trials.max(1) as f64,
    })
}

/// Moment statistics of `|D_f(P ∩ W)|` on one cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub half_side: f64,
    pub trials: usize,
    pub mean_abs4: f64,
    pub mean_proxy4: f64,
    pub mean_radius: f64,
    /// Trials with `|D_f| > Σ|a_q| (N + 1)^{m+1}`, `N` the count in `B(0, (m+1)√R2W)`.
    pub violations: usize,
}

/// Fourth moments of the add-one cost and of its deterministic proxy
/// built from the window-restricted second radius, over nested cubes.
pub fn window_moment_proxy(model: GraphModel, f: &TestFunction, half_sides: &[f64], trials: usize, seed: u64, floor: RadiusFloor) -> Result<Vec<MomentRow>> {
    let a = polynomial_of(f)?.to_vec();
    let m = a.len().saturating_sub(1).max(1);
    let scale: f64 = a.iter().map(|c| c.abs()).sum();
    half_sides
        .iter()
        .enumerate()
        .map(|(w_idx, &h)| {
            let window = Window::from_half_side(2, h)?;
            let per: Vec<Result<(f64, f64, f64, bool)>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream(seed ^ ((w_idx as u64) << 32), t as u64);
                    let cfg = PointConfig::from_flat(window, sample_poisson_with(&window, &mut rng), crate::pointproc::Provenance::Sampled { seed, replicate: t as u64 });
                    let cost = origin_cost(cfg.coords(), 2, model, f)?.abs();
                    let rw = r2_window(&cfg, model, m, floor)?.value;
                    let reach = (m as f64 + 1.0) * rw.sqrt();
                    let count = cfg.points().filter(|p| norm2(p) <= reach * reach).count() as f64;
                    let proxy = scale * (count + 1.0).powi(m as i32 + 1);
                    Ok((cost.powi(4), proxy.powi(4), rw, cost > proxy))
                })
                .collect();
            let per = per.into_iter().collect::<Result<Vec<_>>>()?;
            let n = trials.max(1) as f64;
            Ok(MomentRow {
                half_side: h,
                trials,
                mean_abs4: per.iter().map(|p| p.0).sum::<f64>() / n,
                mean_proxy4: per.iter().map(|p| p.1).sum::<f64>() / n,
                mean_radius: per.iter().map(|p| p.2).sum::<f64>() / n,
                violations: per.iter().filter(|p| p.3).count(),
            })
        })
        .collect()
}
