//! Score functions, the add-one cost and first/second difference operators
//! for trace functionals of spatial graphs.
//!
//! The score of `x_1` in `Q` for a polynomial `f = Σ a_q x^q` is
//!
//! ```text
//! g_f(x_1, Q) = Σ_{p=2}^{m} 1/(p-1)! Σ_{(x_2..x_p) distinct in Q\{x_1}}
//!               Σ_{q=p}^{m} a_q Σ_{π ∈ Σ_{q,p}, π(1)=1} Π_j A(x_π(j), x_π(j+1))
//! ```
//!
//! [`score_enumerated`] evaluates this sum term by term; [`score_diagonal`]
//! evaluates `Σ_{q≥1} a_q (A^q)_{x_1 x_1}`. The constant coefficient never
//! enters a score, so `Σ_X g_f(X, Q) + a_0 |Q| = Tr f(A^Q)`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::{build_graph, Adjacency, GraphModel};
use crate::pointproc::{dist2, stream, PointConfig, Window};
use crate::spectral::{trace_function, trace_poly_walks, TestFunction, WalkScratch};

pub const SURJECTION_CAP: usize = 8;
pub const ENUMERATION_GUARD: usize = 25;
pub const MAX_ENUMERATED_DEGREE: usize = 5;

/// A surjection `{1..p'} -> {1..p}` stored with 1-based values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Surjection {
    pub target_size: usize,
    pub values: Vec<usize>,
}

impl Surjection {
    pub fn source_size(&self) -> usize {
        self.values.len()
    }

    /// `π(j)` for 1-based `j`, with `π(p'+1) = π(1)`.
    pub fn at(&self, j: usize) -> usize {
        self.values[(j - 1) % self.values.len()]
    }
}

/// Every surjection from `{1..p_prime}` onto `{1..p}`, in lexicographic order.
pub fn surjections(p_prime: usize, p: usize) -> Result<Vec<Surjection>> {
    if p_prime > SURJECTION_CAP {
        return Err(Error::SurjectionCap { requested: p_prime, cap: SURJECTION_CAP });
    }
    let mut out = Vec::new();
    if p == 0 || p > p_prime {
        return Ok(out);
    }
    let mut values = Vec::with_capacity(p_prime);
    let mut hits = vec![0usize; p + 1];
    fn rec(p_prime: usize, p: usize, values: &mut Vec<usize>, hits: &mut [usize], covered: usize, out: &mut Vec<Surjection>) {
        if values.len() == p_prime {
            if covered == p {
                out.push(Surjection { target_size: p, values: values.clone() });
            }
            return;
        }
        if p - covered > p_prime - values.len() {
            return;
        }
        for v in 1..=p {
            hits[v] += 1;
            values.push(v);
            rec(p_prime, p, values, hits, covered + usize::from(hits[v] == 1), out);
            values.pop();
            hits[v] -= 1;
        }
    }
    rec(p_prime, p, &mut values, &mut hits, 0, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreRoute {
    Enumerated,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreValue {
    pub anchor: usize,
    pub value: f64,
    pub route: ScoreRoute,
}

fn poly_coefficients(f: &TestFunction) -> Result<&[f64]> {
    f.coefficients().ok_or_else(|| Error::InvalidArgument("scores are defined for polynomial test functions".into()))
}

/// Vertices within graph distance `radius` of `z`.
fn graph_ball(adj: &Adjacency, z: usize, radius: usize) -> Vec<u32> {
    let mut seen = vec![z as u32];
    let mut frontier = vec![z as u32];
    for _ in 0..radius {
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in adj.neighbors(v as usize) {
                if !seen.contains(&u) {
                    seen.push(u);
                    next.push(u);
                }
            }
        }
        frontier = next;
    }
    seen
}

/// Literal evaluation of the score on a built graph.
pub fn score_enumerated_on(adj: &Adjacency, z: usize, f: &TestFunction, guard: usize) -> Result<ScoreValue> {
    let a = poly_coefficients(f)?;
    let m = f.degree().unwrap_or(0);
    if m > MAX_ENUMERATED_DEGREE {
        return Err(Error::InvalidArgument(format!("enumerated score supports degree <= {MAX_ENUMERATED_DEGREE}, got {m}")));
    }
    let local = graph_ball(adj, z, m / 2).len();
    if local > guard {
        return Err(Error::EnumerationGuard { size: local, limit: guard });
    }
    let mut value = 0.0;
    let mut factorial = 1.0;
    for p in 2..=m {
        factorial *= (p - 1) as f64;
        for q in p..=m {
            if a[q] == 0.0 {
                continue;
            }
            let mut count = 0u64;
            for pi in surjections(q, p)?.into_iter().filter(|s| s.values[0] == 1) {
                let mut assigned = vec![u32::MAX; p + 1];
                assigned[1] = z as u32;
                count += count_assignments(adj, &pi.values, 0, &mut assigned);
            }
            value += a[q] * count as f64 / factorial;
        }
    }
    Ok(ScoreValue { anchor: z, value, route: ScoreRoute::Enumerated })
}

/// Number of distinct-point labelings that make every step of the cyclic
/// pattern `pi` an edge, extending the labels already in `assigned`.
fn count_assignments(adj: &Adjacency, pi: &[usize], j: usize, assigned: &mut [u32]) -> u64 {
    if j == pi.len() {
        return 1;
    }
    let cur = assigned[pi[j]] as usize;
    let next = pi[(j + 1) % pi.len()];
    if assigned[next] != u32::MAX {
        return u64::from(adj.has_edge(cur, assigned[next] as usize)) * count_assignments(adj, pi, j + 1, assigned);
    }
    let mut total = 0;
    for &u in adj.neighbors(cur) {
        if assigned.contains(&u) {
            continue;
        }
        assigned[next] = u;
        total += count_assignments(adj, pi, j + 1, assigned);
        assigned[next] = u32::MAX;
    }
    total
}

/// Score of point `z` by direct enumeration of tuples and surjections.
pub fn score_enumerated(z: usize, config: &PointConfig, model: GraphModel, f: &TestFunction) -> Result<ScoreValue> {
    if z >= config.len() {
        return Err(Error::InvalidArgument(format!("anchor {z} out of range")));
    }
    score_enumerated_on(&build_graph(config, model), z, f, ENUMERATION_GUARD)
}

/// Score of vertex `z` as `Σ_{q≥1} a_q (A^q)_{zz}`.
pub fn score_diagonal(z: usize, adj: &Adjacency, f: &TestFunction) -> Result<ScoreValue> {
    let a = poly_coefficients(f)?;
    if a.len() <= 1 {
        return Ok(ScoreValue { anchor: z, value: 0.0, route: ScoreRoute::Diagonal });
    }
    let diag = WalkScratch::new(adj.vertex_count()).diagonal_powers(adj, z, a.len() - 1)?;
    let value = a.iter().zip(&diag).skip(1).map(|(c, d)| c * d).sum();
    Ok(ScoreValue { anchor: z, value, route: ScoreRoute::Diagonal })
}

/// `Σ_X g_f(X, Q) + a_0 |Q|` via the enumerated route.
pub fn sum_scores(config: &PointConfig, model: GraphModel, f: &TestFunction) -> Result<f64> {
    sum_scores_with(config, model, f, ScoreRoute::Enumerated)
}

pub fn sum_scores_with(config: &PointConfig, model: GraphModel, f: &TestFunction, route: ScoreRoute) -> Result<f64> {
    let a = poly_coefficients(f)?;
    let adj = build_graph(config, model);
    let mut total = a.first().copied().unwrap_or(0.0) * config.len() as f64;
    for z in 0..config.len() {
        total += match route {
            ScoreRoute::Enumerated => score_enumerated_on(&adj, z, f, ENUMERATION_GUARD)?.value,
            ScoreRoute::Diagonal => score_diagonal(z, &adj, f)?.value,
        };
    }
    Ok(total)
}

/// `Tr f(A)` on a built graph: closed walks for polynomials, the spectrum otherwise.
pub fn trace_on(adj: &Adjacency, f: &TestFunction) -> Result<f64> {
    if f.coefficients().is_some() {
        trace_poly_walks(adj, f)
    } else {
        trace_function(adj, f)
    }
}

/// `Tr f(A^{Q ∪ {x}}) - Tr f(A^Q)`.
pub fn add_one_cost(config: &PointConfig, model: GraphModel, f: &TestFunction, x: &[f64]) -> Result<f64> {
    if f.coefficients().is_none() && !f.vanishes_at_zero() {
        return Err(Error::InvalidArgument("add-one cost through the spectrum requires f(0) = 0".into()));
    }
    let with = config.insert_probe(x)?;
    Ok(trace_on(&build_graph(&with, model), f)? - trace_on(&build_graph(config, model), f)?)
}

/// Configuration functionals addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// `Tr f(A)`.
    Trace(TestFunction),
    EdgeCount,
    PointCount,
    /// Score of the configuration point at `anchor`; zero if the point is absent.
    Score { anchor: Vec<f64>, f: TestFunction },
}

impl Functional {
    pub fn evaluate(&self, config: &PointConfig, model: GraphModel) -> Result<f64> {
        match self {
            Self::PointCount => Ok(config.len() as f64),
            Self::EdgeCount => Ok(build_graph(config, model).edge_count() as f64),
            Self::Trace(f) => trace_on(&build_graph(config, model), f),
            Self::Score { anchor, f } => match config.position(anchor) {
                Some(z) => Ok(score_diagonal(z, &build_graph(config, model), f)?.value),
                None => Ok(0.0),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Trace(f) => format!("trace[{f}]"),
            Self::EdgeCount => "edges".into(),
            Self::PointCount => "points".into(),
            Self::Score { f, .. } => format!("score[{f}]"),
        }
    }
}

/// `D_x F(Q) = F(Q + δ_x) - F(Q)`.
pub fn diff_first(functional: &Functional, config: &PointConfig, model: GraphModel, x: &[f64]) -> Result<f64> {
    let with = config.insert_probe(x)?;
    Ok(functional.evaluate(&with, model)? - functional.evaluate(config, model)?)
}

/// `D²_{x,y} F(Q) = F(Q+δ_x+δ_y) - F(Q+δ_x) - F(Q+δ_y) + F(Q)`.
pub fn diff_second(functional: &Functional, config: &PointConfig, model: GraphModel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x == y {
        return Err(Error::DuplicatePoint { index: config.len() + 1 });
    }
    let qx = config.insert_probe(x)?;
    let qy = config.insert_probe(y)?;
    let qxy = qx.insert_probe(y)?;
    let e = |c: &PointConfig| functional.evaluate(c, model);
    // pair the terms so that the result is exactly symmetric in (x, y)
    Ok((e(&qxy)? + e(config)?) - (e(&qx)? + e(&qy)?))
}

/// Points of `config` within `rho` of `x`, in their original order.
pub fn restrict_to_ball(config: &PointConfig, x: &[f64], rho: f64) -> PointConfig {
    let r2 = rho * rho;
    config.filter(|p| dist2(p, x) <= r2)
}

/// `D_x Tr f(A)` for an RGG with a degree-`m` polynomial, evaluated on
/// `Q ∩ B(x, m r)` only. Equal to [`diff_first`] on the full configuration.
pub fn rgg_diff_first_local(config: &PointConfig, radius: f64, f: &TestFunction, x: &[f64]) -> Result<f64> {
    let m = f.degree().ok_or_else(|| Error::InvalidArgument("local evaluation needs a polynomial".into()))?;
    let local = restrict_to_ball(config, x, m as f64 * radius);
    diff_first(&Functional::Trace(f.clone()), &local, GraphModel::Rgg { radius }, x)
}

/// `D²_{x,y} Tr f(A)` for an RGG, evaluated on `Q ∩ B(x, m r)`; zero when `|x-y| > m r`.
pub fn rgg_diff_second_local(config: &PointConfig, radius: f64, f: &TestFunction, x: &[f64], y: &[f64]) -> Result<f64> {
    let m = f.degree().ok_or_else(|| Error::InvalidArgument("local evaluation needs a polynomial".into()))?;
    let reach = m as f64 * radius;
    let local = restrict_to_ball(config, x, reach);
    diff_second(&Functional::Trace(f.clone()), &local, GraphModel::Rgg { radius }, x, y)
}

/// Outcome of the randomized support checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SupportReport {
    pub trials: usize,
    pub violations: usize,
    pub max_abs_diff_beyond_radius: f64,
    /// First-difference score probes beyond `m r` that were nonzero.
    pub first_order_violations: usize,
    /// Second-difference score probes with a probe beyond `m r` that were nonzero.
    pub second_order_violations: usize,
    /// Second-difference trace probes with `|x - y| > 4 m r` that were nonzero.
    pub trace_second_violations: usize,
    /// Probes inside radius `r` of the anchor whose difference was nonzero.
    pub positive_controls: usize,
}

/// Parameters of [`support_check_score_diffs`].
#[derive(Debug, Clone, Copy)]
pub struct SupportCheck {
    pub dim: usize,
    pub radius: f64,
    /// Expected number of points in each trial configuration.
    pub volume: f64,
    pub seed: u64,
}

impl Default for SupportCheck {
    fn default() -> Self {
        Self { dim: 2, radius: 1.0, volume: 40.0, seed: 1 }
    }
}

fn point_at_distance<R: Rng>(rng: &mut R, center: &[f64], dist: f64) -> Vec<f64> {
    let mut dir: Vec<f64> = (0..center.len()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for (d, c) in dir.iter_mut().zip(center) {
        *d = c + *d / norm * dist;
    }
    dir
}

/// Randomized check that score differences vanish beyond `m r` and that
/// second differences of the trace vanish beyond `4 m r`, for an RGG.
pub fn support_check_score_diffs(model: GraphModel, f: &TestFunction, trials: usize, params: SupportCheck) -> Result<SupportReport> {
    let GraphModel::Rgg { radius } = model else {
        return Err(Error::InvalidArgument("support checks apply to the random geometric graph only".into()));
    };
    let m = f.degree().ok_or_else(|| Error::InvalidArgument("support check needs a polynomial".into()))?;
    let mr = m as f64 * radius;
    let window = Window::new(params.dim, params.volume)?;
    let outcomes: Vec<Result<SupportReport>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(params.seed, t as u64);
            let base = crate::pointproc::sample_poisson(&window, params.seed, t as u64);
            let z1 = window.uniform_point(&mut rng);
            let config = base.insert_probe(&z1)?;
            let score = Functional::Score { anchor: z1.clone(), f: f.clone() };
            let trace = Functional::Trace(f.clone());
            let mut rep = SupportReport { trials: 1, ..Default::default() };

            // probes just beyond the radius half of the time, farther otherwise
            let beyond = |rng: &mut rand_chacha::ChaCha8Rng| {
                let extra = if rng.random_bool(0.5) { rng.random_range(1e-6..0.05) * radius } else { rng.random_range(0.0..2.0) * mr };
                mr + extra
            };
            let dx = beyond(&mut rng);
            let x = point_at_distance(&mut rng, &z1, dx);
            let d1 = diff_first(&score, &config, model, &x)?;
            if d1 != 0.0 {
                rep.first_order_violations += 1;
                rep.max_abs_diff_beyond_radius = rep.max_abs_diff_beyond_radius.max(d1.abs());
            }

            let far_dist = beyond(&mut rng);
            let far = point_at_distance(&mut rng, &z1, far_dist);
            let near_dist = rng.random_range(0.0..2.0) * mr;
            let near = point_at_distance(&mut rng, &z1, near_dist);
            let (px, py) = if rng.random_bool(0.5) { (far, near) } else { (near, far) };
            let d2 = diff_second(&score, &config, model, &px, &py)?;
            if d2 != 0.0 {
                rep.second_order_violations += 1;
                rep.max_abs_diff_beyond_radius = rep.max_abs_diff_beyond_radius.max(d2.abs());
            }

            let sep = 4.0 * mr + rng.random_range(1e-6..1.0) * radius;
            let y = point_at_distance(&mut rng, &x, sep);
            let dt = diff_second(&trace, &config, model, &x, &y)?;
            if dt != 0.0 {
                rep.trace_second_violations += 1;
                rep.max_abs_diff_beyond_radius = rep.max_abs_diff_beyond_radius.max(dt.abs());
            }

            let close_dist = rng.random_range(0.0..radius);
            let close = point_at_distance(&mut rng, &z1, close_dist);
            if diff_first(&score, &config, model, &close)? != 0.0 {
                rep.positive_controls += 1;
            }
            rep.violations = rep.first_order_violations + rep.second_order_violations + rep.trace_second_violations;
            Ok(rep)
        })
        .collect();
    let mut total = SupportReport::default();
    for r in outcomes {
        let r = r?;
        total.trials += r.trials;
        total.violations += r.violations;
        total.first_order_violations += r.first_order_violations;
        total.second_order_violations += r.second_order_violations;
        total.trace_second_violations += r.trace_second_violations;
        total.positive_controls += r.positive_controls;
        total.max_abs_diff_beyond_radius = total.max_abs_diff_beyond_radius.max(r.max_abs_diff_beyond_radius);
    }
    Ok(total)
}
