//! Brute-force references shared by the integration tests.

#![allow(dead_code)]

use spatial_spectra::graphs::Adjacency;

pub fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pts(coords: &[f64], dim: usize) -> Vec<&[f64]> {
    coords.chunks_exact(dim).collect()
}

pub fn rgg_pairs(coords: &[f64], dim: usize, r: f64) -> Vec<(u32, u32)> {
    let p = pts(coords, dim);
    let mut out = Vec::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if d2(p[i], p[j]) <= r * r {
                out.push((i as u32, j as u32));
            }
        }
    }
    out
}

/// Symmetrized kNN: `i ~ j` when either is among the other's `k` nearest,
/// ties broken by index.
pub fn knn_pairs(coords: &[f64], dim: usize, k: usize) -> Vec<(u32, u32)> {
    let p = pts(coords, dim);
    let mut out = Vec::new();
    for i in 0..p.len() {
        let mut others: Vec<(f64, usize)> = (0..p.len()).filter(|&j| j != i).map(|j| (d2(p[i], p[j]), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            out.push((i.min(j) as u32, i.max(j) as u32));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// `i ~ j` unless some third point is strictly closer to both.
pub fn rng_pairs(coords: &[f64], dim: usize) -> Vec<(u32, u32)> {
    let p = pts(coords, dim);
    let mut out = Vec::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let dij = d2(p[i], p[j]);
            let blocked = (0..p.len()).any(|k| k != i && k != j && d2(p[k], p[i]) < dij && d2(p[k], p[j]) < dij);
            if !blocked {
                out.push((i as u32, j as u32));
            }
        }
    }
    out
}

pub fn dense(adj: &Adjacency) -> Vec<Vec<f64>> {
    let n = adj.vertex_count();
    let mut a = vec![vec![0.0; n]; n];
    for (i, j) in adj.edges() {
        a[i as usize][j as usize] = 1.0;
        a[j as usize][i as usize] = 1.0;
    }
    a
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0.0 {
                for j in 0..n {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

/// `Tr A^q` for `q = 0..=m` by repeated dense multiplication.
pub fn dense_traces(adj: &Adjacency, m: usize) -> Vec<f64> {
    let a = dense(adj);
    let n = a.len();
    let mut p: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut out = vec![n as f64];
    for _ in 0..m {
        p = matmul(&p, &a);
        out.push((0..n).map(|i| p[i][i]).sum());
    }
    out
}

/// `Σ a_q Tr A^q` through [`dense_traces`].
pub fn dense_poly_trace(adj: &Adjacency, coefficients: &[f64]) -> f64 {
    let t = dense_traces(adj, coefficients.len().saturating_sub(1));
    coefficients.iter().zip(&t).map(|(a, t)| a * t).sum()
}

/// Walks of `m` vertices, counted by depth-first enumeration.
pub fn walks_by_dfs(adj: &Adjacency, m: usize) -> u64 {
    fn go(adj: &Adjacency, v: usize, left: usize) -> u64 {
        if left == 0 {
            return 1;
        }
        adj.neighbors(v).iter().map(|&u| go(adj, u as usize, left - 1)).sum()
    }
    (0..adj.vertex_count()).map(|v| go(adj, v, m - 1)).sum()
}

/// `Var(Tr A²)` for the geometric graph of radius `r` on a Poisson process of
/// unit intensity in `[0, n]`, by midpoint quadrature of the second-order
/// U-statistic variance `4 (½ ∫∫ 1{|x-y|≤r} + ∫ |B(x, r) ∩ [0, n]|²)`.
pub fn rgg_square_variance_quadrature(n: f64, r: f64, cells: usize) -> f64 {
    let h = n / cells as f64;
    let reach = |x: f64| (x + r).min(n) - (x - r).max(0.0);
    let (mut pairs, mut squares) = (0.0, 0.0);
    for i in 0..cells {
        let x = (i as f64 + 0.5) * h;
        let g = reach(x);
        pairs += g * h;
        squares += g * g * h;
    }
    4.0 * (0.5 * pairs + squares)
}
