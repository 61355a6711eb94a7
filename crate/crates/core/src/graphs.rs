//! Adjacency construction for random geometric graphs, k-nearest-neighbor
//! graphs and relative neighborhood graphs.
//!
//! Builders are pure functions of the point list and the rule. Besides the
//! one-shot [`build_graph`], [`GraphBuild`] supports exact insertion of new
//! points into an already built graph, recomputing only the vertices whose
//! neighborhoods can change. The insertion path is checked against full
//! rebuilds in the test-suite.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointproc::{dist2, GridIndex, PointConfig};

/// Connection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphModel {
    /// Edge iff Euclidean distance is at most `radius`.
    Rgg { radius: f64 },
    /// Edge iff either endpoint is among the `k` nearest neighbors of the other.
    Knn { k: usize },
    /// Edge iff no third point lies strictly inside the lens of the pair.
    Rng,
}

impl GraphModel {
    pub fn rgg(radius: f64) -> Result<Self> {
        if radius > 0.0 && radius.is_finite() {
            Ok(Self::Rgg { radius })
        } else {
            Err(Error::InvalidArgument(format!("RGG radius must be positive, got {radius}")))
        }
    }

    pub fn knn(k: usize) -> Result<Self> {
        if k >= 1 {
            Ok(Self::Knn { k })
        } else {
            Err(Error::InvalidArgument("kNN requires k >= 1".into()))
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Rgg { radius } => format!("rgg(r={radius})"),
            Self::Knn { k } => format!("knn(k={k})"),
            Self::Rng => "rng".into(),
        }
    }
}

/// Symmetric 0/1 adjacency in compressed-row form. Rows are sorted, there
/// are no self-loops, and equality of two values is equality of edge sets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Adjacency {
    pub fn empty(vertex_count: usize) -> Self {
        Self { offsets: vec![0; vertex_count + 1], neighbors: Vec::new() }
    }

    /// Builds from undirected pairs; order, orientation and duplicates are irrelevant.
    pub fn from_edges(vertex_count: usize, edges: &[(u32, u32)]) -> Result<Self> {
        for &(i, j) in edges {
            if i == j {
                return Err(Error::InvalidArgument(format!("self-loop at {i}")));
            }
            if i as usize >= vertex_count || j as usize >= vertex_count {
                return Err(Error::InvalidArgument(format!("edge ({i},{j}) out of range")));
            }
        }
        Ok(Self::from_pairs_unchecked(vertex_count, edges.iter().copied()))
    }

    fn from_pairs_unchecked(vertex_count: usize, edges: impl Iterator<Item = (u32, u32)> + Clone) -> Self {
        let mut degree = vec![0usize; vertex_count + 1];
        for (i, j) in edges.clone() {
            degree[i as usize + 1] += 1;
            degree[j as usize + 1] += 1;
        }
        for v in 0..vertex_count {
            degree[v + 1] += degree[v];
        }
        let mut fill = degree.clone();
        let mut neighbors = vec![0u32; degree[vertex_count]];
        for (i, j) in edges {
            neighbors[fill[i as usize]] = j;
            fill[i as usize] += 1;
            neighbors[fill[j as usize]] = i;
            fill[j as usize] += 1;
        }
        // sort and dedup each row, then compact
        let mut offsets = vec![0usize; vertex_count + 1];
        let mut write = 0usize;
        for v in 0..vertex_count {
            let row = &mut neighbors[degree[v]..degree[v + 1]];
            row.sort_unstable();
            let mut last = None;
            for k in degree[v]..degree[v + 1] {
                let u = neighbors[k];
                if last != Some(u) {
                    neighbors[write] = u;
                    write += 1;
                    last = Some(u);
                }
            }
            offsets[v + 1] = write;
        }
        neighbors.truncate(write);
        Self { offsets, neighbors }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Canonical sorted edge list with `i < j`.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        (0..self.vertex_count())
            .flat_map(|i| self.neighbors(i).iter().filter(move |&&j| j as usize > i).map(move |&j| (i as u32, j)))
            .collect()
    }

    pub fn triangle_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.vertex_count() {
            for &j in self.neighbors(i).iter().filter(|&&j| j as usize > i) {
                let (a, b) = (self.neighbors(i), self.neighbors(j as usize));
                // merge-count common neighbors above j
                let (mut p, mut q) = (0, 0);
                while p < a.len() && q < b.len() {
                    match a[p].cmp(&b[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            if a[p] > j {
                                count += 1;
                            }
                            p += 1;
                            q += 1;
                        }
                    }
                }
            }
        }
        count
    }

    /// Connected components, each listed in ascending vertex order.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            stack.push(s as u32);
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &u in self.neighbors(v as usize) {
                    if !seen[u as usize] {
                        seen[u as usize] = true;
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Edge list as CSV with an `i,j` header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# spatial-spectra edge-list v1 vertices={}", self.vertex_count())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j"])?;
        for (i, j) in self.edges() {
            w.serialize((i, j))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Maximum vertex degree; 0 for a graph without vertices.
pub fn max_degree(adj: &Adjacency) -> usize {
    (0..adj.vertex_count()).map(|v| adj.degree(v)).max().unwrap_or(0)
}

/// Adjacency of `config` under `model`.
pub fn build_graph(config: &PointConfig, model: GraphModel) -> Adjacency {
    GraphBuild::new(config.coords(), config.dim(), model).adjacency()
}

/// Neighborhood map `N(x, Q)` for every point, evaluated from each point's
/// own perspective (before any symmetrization for the distance rules).
pub fn neighborhood_lists(config: &PointConfig, model: GraphModel) -> Vec<Vec<usize>> {
    let n = config.len();
    if n == 0 {
        return Vec::new();
    }
    let set = Indexed::new(config.coords(), config.dim(), model);
    match model {
        GraphModel::Rgg { radius } => (0..n)
            .map(|i| set.grid.within(set.coords, set.point(i), radius).into_iter().filter(|&j| j != i).collect())
            .collect(),
        GraphModel::Knn { k } => {
            let mut out = vec![Vec::new(); n];
            for i in 0..n {
                for j in set.knn_of(i, k).0 {
                    out[i].push(j as usize);
                    out[j as usize].push(i);
                }
            }
            for l in &mut out {
                l.sort_unstable();
                l.dedup();
            }
            out
        }
        GraphModel::Rng if set.dim <= 2 => {
            let adj = GraphBuild::new(config.coords(), config.dim(), model).adjacency();
            (0..n).map(|i| adj.neighbors(i).iter().map(|&j| j as usize).collect()).collect()
        }
        GraphModel::Rng => (0..n)
            .map(|i| {
                let mut l: Vec<usize> = set.rng_neighbors_of(i).into_iter().map(|j| j as usize).collect();
                l.sort_unstable();
                l
            })
            .collect(),
    }
}

/// Outcome of the neighborhood-axiom checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub symmetric: bool,
    pub subset: bool,
    pub translation_invariant: bool,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.symmetric && self.subset && self.translation_invariant
    }
}

/// `y in N(x)` iff `x in N(y)` for every listed pair.
pub fn lists_symmetric(lists: &[Vec<usize>]) -> bool {
    lists.iter().enumerate().all(|(x, l)| l.iter().all(|&y| y < lists.len() && lists[y].contains(&x)))
}

/// Every neighborhood is a subset of the configuration minus the point itself.
pub fn lists_subset(lists: &[Vec<usize>]) -> bool {
    lists.iter().enumerate().all(|(x, l)| l.iter().all(|&y| y < lists.len() && y != x))
}

/// Checks symmetry, the subset property and translation invariance under `shift`.
pub fn check_neighborhood_axioms(model: GraphModel, config: &PointConfig, shift: &[f64]) -> AxiomReport {
    let lists = neighborhood_lists(config, model);
    let shifted = neighborhood_lists(&config.translate(shift), model);
    AxiomReport {
        symmetric: lists_symmetric(&lists),
        subset: lists_subset(&lists),
        translation_invariant: lists == shifted,
    }
}

fn initial_cell(coords: &[f64], dim: usize, model: GraphModel) -> f64 {
    match model {
        GraphModel::Rgg { radius } => radius,
        GraphModel::Knn { k } => spacing(coords, dim, k as f64 + 1.0),
        GraphModel::Rng => spacing(coords, dim, 4.0),
    }
}

fn bounding_box(coords: &[f64], dim: usize) -> Vec<(f64, f64)> {
    (0..dim)
        .map(|a| {
            coords
                .iter()
                .skip(a)
                .step_by(dim)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &c| (l.min(c), h.max(c)))
        })
        .collect()
}

/// Side of a cube expected to hold `target` points at the empirical density.
fn spacing(coords: &[f64], dim: usize, target: f64) -> f64 {
    let n = coords.len() / dim;
    if n < 2 {
        return 1.0;
    }
    let vol: f64 = bounding_box(coords, dim).iter().map(|(lo, hi)| (hi - lo).max(1e-9)).product();
    (target * vol / n as f64).powf(1.0 / dim as f64).max(1e-9)
}

/// A point set with its grid index and bounding-box diameter.
struct Indexed<'a> {
    coords: &'a [f64],
    dim: usize,
    grid: GridIndex,
    span: f64,
}

impl<'a> Indexed<'a> {
    fn new(coords: &'a [f64], dim: usize, model: GraphModel) -> Self {
        let grid = GridIndex::from_coords(coords, dim, initial_cell(coords, dim, model));
        let span = bounding_box(coords, dim)
            .iter()
            .map(|(lo, hi)| if hi > lo { (hi - lo) * (hi - lo) } else { 0.0 })
            .sum::<f64>()
            .sqrt();
        Self { coords, dim, grid, span }
    }

    fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Candidates within `rho` of point `i`, excluding `i`, sorted by (distance, index).
    fn sorted_candidates(&self, i: usize, rho: f64) -> Vec<(f64, u32)> {
        let x = self.point(i);
        let r2 = rho * rho;
        let mut c = Vec::new();
        self.grid.for_each_candidate(x, rho, |j| {
            if j != i {
                let d2 = dist2(self.point(j), x);
                if d2 <= r2 {
                    c.push((d2, j as u32));
                }
            }
        });
        c.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        c
    }

    /// The `k` nearest neighbors of point `i` (ties by smaller index) and the
    /// squared distance to the last of them (infinite when fewer than `k` exist).
    fn knn_of(&self, i: usize, k: usize) -> (Vec<u32>, f64) {
        if self.len() <= 1 {
            return (Vec::new(), f64::INFINITY);
        }
        let mut rho = self.grid.cell_size();
        loop {
            let c = self.sorted_candidates(i, rho);
            if c.len() >= k || rho > self.span {
                let take: Vec<(f64, u32)> = c.into_iter().take(k).collect();
                let kth = if take.len() == k { take[k - 1].0 } else { f64::INFINITY };
                return (take.into_iter().map(|(_, j)| j).collect(), kth);
            }
            rho *= 2.0;
        }
    }

    /// Relative-neighborhood neighbors of point `i` by direct search over
    /// all points; used off the plane and the line.
    fn rng_neighbors_of(&self, i: usize) -> Vec<u32> {
        let cands = self.sorted_candidates(i, self.span * 1.01 + 1.0);
        let mut out = Vec::new();
        for (t, &(d2, j)) in cands.iter().enumerate() {
            let y = self.point(j as usize);
            // blockers are strictly closer to x than y is, so they precede y
            let blocked = cands[..t]
                .iter()
                .take_while(|(pd2, _)| *pd2 < d2)
                .any(|&(_, p)| dist2(self.point(p as usize), y) < d2);
            if !blocked {
                out.push(j);
            }
        }
        out
    }

    /// Planar relative-neighborhood neighbors of point `i`.
    ///
    /// Only the nearest points of eight angular sectors around `x` can be
    /// neighbors: a farther point `y` in a sector (angle below pi/3 to the
    /// nearest one `p`) has `p` strictly inside its lens by the law of
    /// cosines. The search grows until each sector has a point or has been
    /// searched to the edge of the convex hull.
    fn rng_neighbors_planar(&self, i: usize, hull: &ConvexHull, near: &mut Vec<(f64, u32)>) -> Vec<u32> {
        let x = self.point(i);
        let w = std::f64::consts::TAU / SHIELD_SECTORS as f64;
        let mut reach: Option<[f64; SHIELD_SECTORS]> = None;
        let mut rho = 2.0 * self.grid.cell_size();
        // per sector: nearest squared distance, one nearest point, whether it is tied
        let nearest = loop {
            let mut nearest = [(f64::INFINITY, u32::MAX, false); SHIELD_SECTORS];
            let r2 = rho * rho;
            near.clear();
            self.grid.for_each_candidate(x, rho, |j| {
                if j == i {
                    return;
                }
                let p = self.point(j);
                let d2 = dist2(p, x);
                if d2 > r2 {
                    return;
                }
                near.push((d2, j as u32));
                let slot = &mut nearest[shield_sector(p[0] - x[0], p[1] - x[1])];
                if d2 < slot.0 {
                    *slot = (d2, j as u32, false);
                } else if d2 == slot.0 {
                    slot.2 = true;
                }
            });
            if nearest.iter().all(|s| s.0.is_finite()) || rho > self.span {
                break nearest;
            }
            let reach = reach.get_or_insert_with(|| std::array::from_fn(|s| hull.cone_reach(x, s as f64 * w, (s + 1) as f64 * w)));
            if (0..SHIELD_SECTORS).all(|s| nearest[s].0.is_finite() || reach[s] <= rho) {
                break nearest;
            }
            rho *= 2.0;
        };
        let mut candidates: Vec<(f64, u32)> = Vec::with_capacity(SHIELD_SECTORS);
        for (s, &(d2, y, tied)) in nearest.iter().enumerate() {
            if !d2.is_finite() {
                continue;
            }
            if tied {
                candidates.extend(near.iter().filter(|&&(pd2, p)| {
                    let p = self.point(p as usize);
                    pd2 == d2 && shield_sector(p[0] - x[0], p[1] - x[1]) == s
                }));
            } else {
                candidates.push((d2, y));
            }
        }
        // a blocker is strictly closer to x than y, so the scan above saw it
        let mut out: Vec<u32> = candidates
            .into_iter()
            .filter(|&(d2, y)| {
                let y = self.point(y as usize);
                !near.iter().any(|&(pd2, p)| pd2 < d2 && dist2(self.point(p as usize), y) < d2)
            })
            .map(|(_, y)| y)
            .collect();
        out.sort_unstable();
        out
    }

    /// RNG edges with at least one endpoint in `from`, each reported once.
    /// `hull` must be the hull of all points when given (planar case only).
    fn rng_edges(&self, from: std::ops::Range<usize>, hull: Option<&ConvexHull>) -> Vec<(u32, u32)> {
        match self.dim {
            1 => rng_edges_line(self.coords, from),
            2 => {
                let owned;
                let hull = match hull {
                    Some(h) => h,
                    None => {
                        owned = ConvexHull::new(self.coords);
                        &owned
                    }
                };
                let start = from.start;
                let mut edges = Vec::new();
                let mut near = Vec::new();
                for i in from {
                    for j in self.rng_neighbors_planar(i, hull, &mut near) {
                        let j = j as usize;
                        if j < start || j > i {
                            edges.push((j.min(i) as u32, j.max(i) as u32));
                        }
                    }
                }
                edges
            }
            _ => {
                let start = from.start;
                let mut edges = Vec::new();
                for i in from {
                    for j in self.rng_neighbors_of(i) {
                        let j = j as usize;
                        // pairs inside the range are reported from their smaller endpoint
                        if j < start || j > i {
                            edges.push((j.min(i) as u32, j.max(i) as u32));
                        }
                    }
                }
                edges
            }
        }
    }
}

const SHIELD_SECTORS: usize = 8;

/// Octant of a direction, counted counterclockwise from the positive x-axis.
fn shield_sector(dx: f64, dy: f64) -> usize {
    let (ax, ay) = (dx.abs(), dy.abs());
    match (dx >= 0.0, dy >= 0.0) {
        (true, true) => usize::from(ay >= ax),
        (false, true) => 2 + usize::from(ay < ax),
        (false, false) => 4 + usize::from(ay >= ax),
        (true, false) => 6 + usize::from(ay < ax),
    }
}

/// Convex hull of planar points as half-planes `n · p <= c`.
struct ConvexHull {
    vertices: Vec<[f64; 2]>,
    faces: Vec<([f64; 2], f64)>,
}

impl ConvexHull {
    /// Monotone-chain hull. Fewer than three non-collinear points give a
    /// hull without faces, whose cones reach infinitely far.
    fn new(coords: &[f64]) -> Self {
        let mut pts: Vec<[f64; 2]> = coords.chunks(2).map(|p| [p[0], p[1]]).collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        let mut hull: Vec<[f64; 2]> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
            for &p in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
        }
        if hull.len() < 3 {
            return Self { vertices: hull, faces: Vec::new() };
        }
        let faces = (0..hull.len())
            .map(|k| {
                let (a, b) = (hull[k], hull[(k + 1) % hull.len()]);
                // counterclockwise order puts the outward normal on the right of a -> b
                let n = [b[1] - a[1], a[0] - b[0]];
                (n, n[0] * a[0] + n[1] * a[1])
            })
            .collect();
        Self { vertices: hull, faces }
    }

    /// Points whose hull equals this one: the vertices, or all of `coords`
    /// when degenerate.
    fn seed_points(&self, coords: &[f64]) -> Vec<f64> {
        if self.faces.is_empty() {
            return coords.to_vec();
        }
        self.vertices.iter().flatten().copied().collect()
    }

    /// Farthest distance from `x` (inside the hull) within the hull and the
    /// cone of directions with angles in `(lo, hi)`, `hi - lo < π`.
    fn cone_reach(&self, x: &[f64], lo: f64, hi: f64) -> f64 {
        if self.faces.is_empty() {
            return f64::INFINITY;
        }
        let exit = |theta: f64| {
            let u = [theta.cos(), theta.sin()];
            self.faces
                .iter()
                .filter_map(|(n, c)| {
                    let nu = n[0] * u[0] + n[1] * u[1];
                    (nu > 0.0).then(|| (c - n[0] * x[0] - n[1] * x[1]) / nu)
                })
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        };
        let (sl, cl) = lo.sin_cos();
        let (sh, ch) = hi.sin_cos();
        let mut reach = exit(lo).max(exit(hi));
        for v in &self.vertices {
            let d = [v[0] - x[0], v[1] - x[1]];
            if cl * d[1] - sl * d[0] > 0.0 && d[0] * sh - d[1] * ch > 0.0 {
                reach = reach.max(d[0].hypot(d[1]));
            }
        }
        // guard against rounding in the face offsets
        reach * (1.0 + 1e-9) + 1e-9
    }
}

/// `p` strictly inside both open balls of radius `|a - b|` around `a` and `b`.
#[inline]
pub(crate) fn in_open_lens(p: &[f64], a: &[f64], b: &[f64]) -> bool {
    let r2 = dist2(a, b);
    dist2(p, a) < r2 && dist2(p, b) < r2
}

/// A built graph that can absorb additional points exactly.
///
/// Insertion is driven from the new points: for kNN only vertices whose k-th
/// neighbor distance exceeds their distance to some new point are recomputed,
/// and for RNG only edges whose lens contains a new point are dropped.
#[derive(Debug, Clone)]
pub struct GraphBuild {
    model: GraphModel,
    dim: usize,
    vertex_count: usize,
    edges: Vec<(u32, u32)>,
    /// Flat kNN lists, `k` slots per vertex, `u32::MAX` marking empty slots.
    knn: Vec<u32>,
    knn_kth: Vec<f64>,
    /// Flat hull vertices of a planar point set, for the relative neighborhood graph.
    hull: Vec<f64>,
}

impl GraphBuild {
    pub fn new(coords: &[f64], dim: usize, model: GraphModel) -> Self {
        let n = coords.len() / dim;
        let mut out = Self { model, dim, vertex_count: n, edges: Vec::new(), knn: Vec::new(), knn_kth: Vec::new(), hull: Vec::new() };
        if n == 0 {
            return out;
        }
        let set = Indexed::new(coords, dim, model);
        match model {
            GraphModel::Rgg { radius } => {
                for i in 0..n {
                    for j in set.grid.within(coords, set.point(i), radius) {
                        if j > i {
                            out.edges.push((i as u32, j as u32));
                        }
                    }
                }
            }
            GraphModel::Knn { k } => {
                out.knn = vec![u32::MAX; n * k];
                out.knn_kth = vec![f64::INFINITY; n];
                for i in 0..n {
                    out.set_knn(i, k, set.knn_of(i, k));
                }
                out.edges = knn_edges(&out.knn, k);
            }
            GraphModel::Rng if dim == 2 => {
                let hull = ConvexHull::new(coords);
                out.edges = set.rng_edges(0..n, Some(&hull));
                out.hull = hull.seed_points(coords);
            }
            GraphModel::Rng => out.edges = set.rng_edges(0..n, None),
        }
        out
    }

    fn set_knn(&mut self, v: usize, k: usize, (list, kth): (Vec<u32>, f64)) {
        let slots = &mut self.knn[v * k..(v + 1) * k];
        slots.fill(u32::MAX);
        slots[..list.len()].copy_from_slice(&list);
        self.knn_kth[v] = kth;
    }

    pub fn model(&self) -> GraphModel {
        self.model
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_pairs_unchecked(self.vertex_count, self.edges.iter().copied())
    }

    /// Graph on `union`, whose first `vertex_count()` points are the points
    /// this graph was built on and whose remaining points are new.
    pub fn extend(&self, union: &[f64]) -> Self {
        let dim = self.dim;
        let n_old = self.vertex_count;
        let n = union.len() / dim;
        assert!(n >= n_old, "union must contain the original points first");
        if n == n_old {
            return self.clone();
        }
        if n_old == 0 {
            return Self::new(union, dim, self.model);
        }
        let set = Indexed::new(union, dim, self.model);
        let mut out = Self { vertex_count: n, ..self.clone() };
        match self.model {
            GraphModel::Rgg { radius } => {
                for a in n_old..n {
                    for j in set.grid.within(union, set.point(a), radius) {
                        if j < a {
                            out.edges.push((j as u32, a as u32));
                        }
                    }
                }
            }
            GraphModel::Knn { k } => {
                let mut dirty: Vec<bool> = self.knn_kth.iter().map(|t| t.is_infinite()).collect();
                let reach = self.knn_kth.iter().copied().filter(|t| t.is_finite()).fold(0.0, f64::max).sqrt();
                for a in n_old..n {
                    let x = set.point(a);
                    set.grid.for_each_candidate(x, reach, |j| {
                        if j < n_old && !dirty[j] && dist2(set.point(j), x) < self.knn_kth[j] {
                            dirty[j] = true;
                        }
                    });
                }
                out.knn.resize(n * k, u32::MAX);
                out.knn_kth.resize(n, f64::INFINITY);
                for v in (0..n_old).filter(|&v| dirty[v]).chain(n_old..n) {
                    out.set_knn(v, k, set.knn_of(v, k));
                }
                out.edges = knn_edges(&out.knn, k);
            }
            GraphModel::Rng => {
                let old = self.adjacency();
                let longest = self.edges.iter().map(|&(i, j)| dist2(set.point(i as usize), set.point(j as usize))).fold(0.0, f64::max).sqrt();
                let mut removed = Vec::new();
                for a in n_old..n {
                    let x = set.point(a);
                    set.grid.for_each_candidate(x, longest, |p| {
                        if p >= n_old {
                            return;
                        }
                        for &q in old.neighbors(p) {
                            if (q as usize) > p && in_open_lens(x, set.point(p), set.point(q as usize)) {
                                removed.push((p as u32, q));
                            }
                        }
                    });
                }
                if !removed.is_empty() {
                    removed.sort_unstable();
                    removed.dedup();
                    out.edges.retain(|e| removed.binary_search(e).is_err());
                }
                if dim == 2 {
                    let mut seed_pts = self.hull.clone();
                    seed_pts.extend_from_slice(&union[n_old * dim..]);
                    let hull = ConvexHull::new(&seed_pts);
                    out.edges.extend(set.rng_edges(n_old..n, Some(&hull)));
                    out.hull = hull.seed_points(union);
                } else {
                    out.edges.extend(set.rng_edges(n_old..n, None));
                }
            }
        }
        out
    }
}

fn knn_edges(flat: &[u32], k: usize) -> Vec<(u32, u32)> {
    let mut edges: Vec<(u32, u32)> = flat
        .iter()
        .enumerate()
        .filter(|(_, &j)| j != u32::MAX)
        .map(|(slot, &j)| {
            let i = (slot / k) as u32;
            if i < j { (i, j) } else { (j, i) }
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// On the line the lens of a pair is the segment between them, so the
/// relative neighborhood graph joins consecutive points.
fn rng_edges_line(coords: &[f64], from: std::ops::Range<usize>) -> Vec<(u32, u32)> {
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]));
    order
        .windows(2)
        .filter(|w| from.contains(&w[0]) || from.contains(&w[1]))
        .map(|w| (w[0].min(w[1]) as u32, w[0].max(w[1]) as u32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointproc::Window;

    fn cfg(dim: usize, volume: f64, pts: &[&[f64]]) -> PointConfig {
        let w = Window::new(dim, volume).unwrap();
        PointConfig::new(w, &pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rgg_line_example() {
        let c = cfg(1, 8.0, &[&[0.0], &[0.5], &[2.0]]);
        assert_eq!(build_graph(&c, GraphModel::rgg(1.0).unwrap()).edges(), vec![(0, 1)]);
    }

    #[test]
    fn knn_line_example() {
        let c = cfg(1, 8.0, &[&[0.0], &[1.0], &[3.0]]);
        assert_eq!(build_graph(&c, GraphModel::knn(1).unwrap()).edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn rng_lens_example() {
        let c = cfg(2, 16.0, &[&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.1]]);
        assert_eq!(build_graph(&c, GraphModel::Rng).edges(), vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn knn_ties_prefer_smaller_index() {
        // 1 and 2 are equidistant from 0
        let c = cfg(1, 16.0, &[&[0.0], &[-1.0], &[1.0], &[5.0]]);
        let adj = build_graph(&c, GraphModel::knn(1).unwrap());
        assert!(adj.has_edge(0, 1));
        assert!(!adj.has_edge(0, 2) || adj.has_edge(2, 0));
        // 2's own nearest is 0, so 0-2 is present through 2's list
        assert!(adj.has_edge(0, 2));
    }

    #[test]
    fn knn_small_configs_are_complete() {
        let c = cfg(2, 16.0, &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.5]]);
        let adj = build_graph(&c, GraphModel::knn(3).unwrap());
        assert_eq!(adj.edge_count(), 3);
        let one = cfg(2, 16.0, &[&[0.0, 0.0]]);
        assert_eq!(build_graph(&one, GraphModel::knn(2).unwrap()).edge_count(), 0);
    }

    #[test]
    fn degree_examples() {
        assert_eq!(max_degree(&Adjacency::empty(0)), 0);
        let tri = Adjacency::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(max_degree(&tri), 2);
        assert_eq!(tri.triangle_count(), 1);
        let star = Adjacency::from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        assert_eq!(max_degree(&star), 5);
        assert_eq!(star.triangle_count(), 0);
    }

    #[test]
    fn from_edges_validates() {
        assert!(Adjacency::from_edges(2, &[(0, 0)]).is_err());
        assert!(Adjacency::from_edges(2, &[(0, 2)]).is_err());
        let a = Adjacency::from_edges(3, &[(2, 0), (0, 2), (1, 0)]).unwrap();
        assert_eq!(a.edges(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn corrupted_lists_fail_symmetry() {
        let lists = vec![vec![1], vec![], vec![0]];
        assert!(!lists_symmetric(&lists));
        assert!(lists_subset(&lists));
        assert!(!lists_subset(&[vec![0]]));
    }

    #[test]
    fn identity_shift_is_invariant() {
        let w = Window::new(2, 30.0).unwrap();
        let c = crate::pointproc::sample_poisson(&w, 9, 0);
        for model in [GraphModel::Rgg { radius: 1.0 }, GraphModel::Knn { k: 2 }, GraphModel::Rng] {
            assert!(check_neighborhood_axioms(model, &c, &[0.0, 0.0]).all_pass());
        }
    }

    #[test]
    fn rng_on_the_line_joins_consecutive_points() {
        let c = cfg(1, 20.0, &[&[3.0], &[-1.0], &[0.5], &[7.0]]);
        let e = build_graph(&c, GraphModel::Rng).edges();
        assert_eq!(e, vec![(0, 2), (0, 3), (1, 2)]);
    }

    #[test]
    fn edge_csv_has_header() {
        let tri = Adjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut buf = Vec::new();
        tri.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("i,j\n0,1\n1,2\n"));
    }

    #[test]
    fn extend_matches_full_rebuild() {
        use crate::pointproc::sample_poisson;
        for dim in [1, 2, 3] {
            let w = Window::new(dim, 300.0).unwrap();
            for rep in 0..3 {
                let base = sample_poisson(&w, 11, rep);
                let extra = sample_poisson(&w, 12, rep);
                let extra: Vec<f64> = extra.coords().iter().take(dim * 9).copied().collect();
                let mut union = base.coords().to_vec();
                union.extend_from_slice(&extra);
                for model in [GraphModel::Rgg { radius: 1.3 }, GraphModel::Knn { k: 3 }, GraphModel::Rng] {
                    let inc = GraphBuild::new(base.coords(), dim, model).extend(&union).adjacency();
                    let full = GraphBuild::new(&union, dim, model).adjacency();
                    assert_eq!(inc.edges(), full.edges(), "{} d={dim} rep={rep}", model.name());
                }
            }
        }
    }

    fn rng_by_all_pairs(coords: &[f64], dim: usize) -> Vec<(u32, u32)> {
        let n = coords.len() / dim;
        let pt = |i: usize| &coords[i * dim..(i + 1) * dim];
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if !(0..n).any(|p| p != i && p != j && in_open_lens(pt(p), pt(i), pt(j))) {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        edges
    }

    #[test]
    fn planar_rng_matches_all_pairs() {
        use crate::pointproc::sample_poisson;
        let mut sets: Vec<Vec<f64>> = (0..4).map(|rep| sample_poisson(&Window::new(2, 250.0).unwrap(), 5, rep).coords().to_vec()).collect();
        sets.push((0..64).flat_map(|k| [(k % 8) as f64, (k / 8) as f64]).collect());
        sets.push((0..20).flat_map(|k| [k as f64 * 0.7, 3.0 - k as f64 * 0.35]).collect());
        sets.push((0..150).flat_map(|k| { let (r, t) = (20.0 * ((k * 37 % 150) as f64 / 150.0).sqrt(), k as f64 * 2.399963); [r * t.cos(), r * t.sin()] }).collect());
        for (s, coords) in sets.iter().enumerate() {
            let got = GraphBuild::new(coords, 2, GraphModel::Rng).adjacency();
            assert_eq!(got.edges(), rng_by_all_pairs(coords, 2), "set {s}");
        }
    }
}
