//! Walk counts `L_m` on spatial graphs and the box-partition and Poisson
//! moment bounds used to control their expectation.
//!
//! A "path of length m" is counted as an `m`-vertex walk: a sequence
//! `(v_1..v_m)` with consecutive vertices adjacent. Vertices may repeat
//! non-consecutively.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::{build_graph, Adjacency, GraphModel};
use crate::pointproc::{sample_poisson, PointConfig, Window};

const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum WalkVariant {
    Total,
    Anchored { ell: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkCount {
    pub m: usize,
    pub value: f64,
    /// False once any intermediate count exceeded 2^53.
    pub exact: bool,
    pub variant: WalkVariant,
}

/// `A^k 1` for `k = 0..=steps`.
fn walk_vectors(adj: &Adjacency, steps: usize) -> Vec<Vec<f64>> {
    let n = adj.vertex_count();
    let mut out = vec![vec![1.0; n]];
    for _ in 0..steps {
        let prev = out.last().unwrap();
        let next = (0..n).map(|v| adj.neighbors(v).iter().map(|&u| prev[u as usize]).sum()).collect();
        out.push(next);
    }
    out
}

/// `L_m = 1ᵀ A^{m-1} 1`.
pub fn count_walks(adj: &Adjacency, m: usize) -> Result<WalkCount> {
    if m == 0 {
        return Err(Error::InvalidArgument("walk length m must be at least 1".into()));
    }
    let vecs = walk_vectors(adj, m - 1);
    let value: f64 = vecs[m - 1].iter().sum();
    let exact = value <= EXACT_LIMIT && vecs.iter().flatten().all(|&c| c <= EXACT_LIMIT);
    Ok(WalkCount { m, value, exact, variant: WalkVariant::Total })
}

/// Walks of `m` vertices whose `ell`-th vertex is `v`: `(A^{ell-1}1)_v (A^{m-ell}1)_v`.
pub fn count_walks_at(adj: &Adjacency, v: usize, m: usize, ell: usize) -> Result<WalkCount> {
    if ell == 0 || ell > m {
        return Err(Error::InvalidArgument(format!("need 1 <= ell <= m, got ell={ell}, m={m}")));
    }
    let vecs = walk_vectors(adj, (ell - 1).max(m - ell));
    let value = vecs[ell - 1][v] * vecs[m - ell][v];
    Ok(WalkCount { m, value, exact: value <= EXACT_LIMIT, variant: WalkVariant::Anchored { ell } })
}

/// Anchored count `L_m^{(ell, x)}` on the graph of `config ∪ {x}`.
pub fn count_walks_through(config: &PointConfig, model: GraphModel, m: usize, ell: usize, x: &[f64]) -> Result<WalkCount> {
    let (augmented, v) = match config.position(x) {
        Some(v) => (config.clone(), v),
        None => (config.insert_probe(x)?, config.len()),
    };
    count_walks_at(&build_graph(&augmented, model), v, m, ell)
}

/// Box-partition bound: the sum over box-index tuples `(i_1..i_m)` whose
/// consecutive boxes are equal or adjacent of `Π Z_{i_j}`, where `Z_i` is the
/// number of points in box `i`. Boxes have side `r`; the last box on each
/// axis is truncated when the window side is not a multiple of `r`.
pub fn box_bound(config: &PointConfig, r: f64, m: usize) -> Result<f64> {
    if !(r > 0.0) || m == 0 {
        return Err(Error::InvalidArgument("box bound needs r > 0 and m >= 1".into()));
    }
    if config.is_empty() {
        return Ok(0.0);
    }
    let d = config.dim();
    let h = config.window().half_side();
    let per_axis = ((2.0 * h / r).ceil() as usize).max(1);
    let total = per_axis.checked_pow(d as u32).filter(|&t| t <= 50_000_000).ok_or_else(|| Error::InvalidArgument("too many boxes".into()))?;
    let mut z = vec![0.0f64; total];
    for p in config.points() {
        let mut idx = 0;
        for &c in p {
            let b = (((c + h) / r).floor() as isize).clamp(0, per_axis as isize - 1) as usize;
            idx = idx * per_axis + b;
        }
        z[idx] += 1.0;
    }
    let mut v = z.clone();
    for _ in 1..m {
        let mut next = vec![0.0; total];
        for (i, slot) in next.iter_mut().enumerate() {
            if z[i] == 0.0 {
                continue;
            }
            *slot = z[i] * neighbor_box_sum(&v, i, per_axis, d);
        }
        v = next;
    }
    Ok(v.iter().sum())
}

/// Sum of `v` over boxes at Chebyshev index distance at most 1 from box `i`.
fn neighbor_box_sum(v: &[f64], i: usize, per_axis: usize, d: usize) -> f64 {
    let mut coord = vec![0isize; d];
    let mut rest = i;
    for a in (0..d).rev() {
        coord[a] = (rest % per_axis) as isize;
        rest /= per_axis;
    }
    let mut offset = vec![-1isize; d];
    let mut sum = 0.0;
    loop {
        let mut idx = 0usize;
        let mut inside = true;
        for a in 0..d {
            let c = coord[a] + offset[a];
            if c < 0 || c >= per_axis as isize {
                inside = false;
                break;
            }
            idx = idx * per_axis + c as usize;
        }
        if inside {
            sum += v[idx];
        }
        let mut a = d;
        loop {
            if a == 0 {
                return sum;
            }
            a -= 1;
            if offset[a] < 1 {
                offset[a] += 1;
                break;
            }
            offset[a] = -1;
        }
    }
}

/// `(m / log(m/λ + 1))^m`, an upper bound on `E[Z^m]` for `Z ~ Poisson(λ)`.
pub fn poisson_moment_bound(lambda: f64, m: usize) -> f64 {
    poisson_shifted_moment_bound(lambda, m, 1.0)
}

/// `(C m / log(m/λ + 1))^m`, the companion bound used for `E[(Z+1)^m]`.
pub fn poisson_shifted_moment_bound(lambda: f64, m: usize, constant: f64) -> f64 {
    let m_f = m as f64;
    (constant * m_f / (m_f / lambda + 1.0).ln()).powi(m as i32)
}

/// `(n / r^d) (3^d)^{m-1} (m / log(m/r^d + 1))^m`.
pub fn expected_walk_bound(n: f64, r: f64, d: usize, m: usize) -> f64 {
    let rd = r.powi(d as i32);
    n / rd * 3f64.powi((d * (m - 1)) as i32) * poisson_moment_bound(rd, m)
}

/// One row of a bound-versus-simulation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    pub m: usize,
    pub empirical_mean: f64,
    pub std_error: f64,
    pub bound: f64,
    pub ratio: f64,
    /// Configurations where `L_m` exceeded the box bound.
    pub box_violations: usize,
}

/// Monte Carlo comparison of `E L_m` with [`expected_walk_bound`] on an RGG, plus
/// the deterministic box-bound check on every sampled configuration.
pub fn bounds_table(d: usize, r: f64, n: f64, m_max: usize, replicates: usize, seed: u64) -> Result<Vec<BoundRow>> {
    let window = Window::new(d, n)?;
    let model = GraphModel::rgg(r)?;
    let per_rep: Vec<Result<Vec<(f64, bool)>>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let cfg = sample_poisson(&window, seed, rep as u64);
            let adj = build_graph(&cfg, model);
            (1..=m_max)
                .map(|m| {
                    let l = count_walks(&adj, m)?.value;
                    Ok((l, l <= box_bound(&cfg, r, m)?))
                })
                .collect()
        })
        .collect();
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for m in 1..=m_max {
        let xs: Vec<f64> = per_rep.iter().map(|v| v[m - 1].0).collect();
        let (mean, se) = mean_se(&xs);
        let bound = expected_walk_bound(n, r, d, m);
        rows.push(BoundRow {
            m,
            empirical_mean: mean,
            std_error: se,
            bound,
            ratio: mean / bound,
            box_violations: per_rep.iter().filter(|v| !v[m - 1].1).count(),
        });
    }
    Ok(rows)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Table as CSV: `m,empirical_mean,bound,ratio` plus standard error and violations.
pub fn write_bounds_csv<W: Write>(rows: &[BoundRow], out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# spatial-spectra bounds v1")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "empirical_mean", "bound", "ratio", "std_error", "box_violations"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            format!("{:?}", r.empirical_mean),
            format!("{:?}", r.bound),
            format!("{:?}", r.ratio),
            format!("{:?}", r.std_error),
            r.box_violations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
