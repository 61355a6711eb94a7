//! Homogeneous Poisson point processes on centered cubes, point insertion,
//! and a uniform-grid spatial index.
//!
//! The window of volume `n` in dimension `d` is the cube
//! `[-n^{1/d}/2, n^{1/d}/2]^d`, so an intensity-one process has `n` points on
//! average. Every replicate draws from its own ChaCha stream keyed by
//! `(seed, replicate)`, which makes results independent of evaluation order.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Squared Euclidean distance between two points of equal dimension.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Random stream for replicate `replicate` under master seed `seed`.
pub fn stream(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Centered cube of a given volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    dim: usize,
    volume: f64,
    half_side: f64,
}

impl Window {
    pub fn new(dim: usize, volume: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidWindow("dimension must be at least 1".into()));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::InvalidWindow(format!("volume must be positive, got {volume}")));
        }
        let half_side = volume.powf(1.0 / dim as f64) / 2.0;
        Ok(Self { dim, volume, half_side })
    }

    /// Cube `[-half_side, half_side]^d`.
    pub fn from_half_side(dim: usize, half_side: f64) -> Result<Self> {
        if !(half_side.is_finite() && half_side > 0.0) {
            return Err(Error::InvalidWindow(format!("half side must be positive, got {half_side}")));
        }
        Self::new(dim, (2.0 * half_side).powi(dim as i32)).map(|w| Self { half_side, ..w })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn half_side(&self) -> f64 {
        self.half_side
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn diameter(&self) -> f64 {
        self.side() * (self.dim as f64).sqrt()
    }

    /// Closed-cube membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim && p.iter().all(|c| c.abs() <= self.half_side)
    }

    /// A point drawn uniformly from the window.
    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim)
            .map(|_| rng.random_range(-self.half_side..=self.half_side))
            .collect()
    }
}

/// Where a configuration came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sampled { seed: u64, replicate: u64 },
    Manual,
}

/// A finite simple point configuration with its sampling window.
///
/// Coordinates are stored flat, point `i` occupying `coords[i*d..(i+1)*d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    window: Window,
    coords: Vec<f64>,
    provenance: Provenance,
}

impl PointConfig {
    /// Manual configuration. Points must lie in the window and be pairwise distinct.
    pub fn new(window: Window, points: &[Vec<f64>]) -> Result<Self> {
        let cfg = Self::unchecked(window, points)?;
        if let Some(p) = (0..cfg.len()).find(|&i| !window.contains(cfg.point(i))) {
            log::debug!("point {p} outside window");
            return Err(Error::OutsideWindow);
        }
        cfg.check_distinct()?;
        Ok(cfg)
    }

    /// Manual configuration whose points may lie outside the window
    /// (exterior probes, shifted copies). Points must still be distinct.
    pub fn free(window: Window, points: &[Vec<f64>]) -> Result<Self> {
        let cfg = Self::unchecked(window, points)?;
        cfg.check_distinct()?;
        Ok(cfg)
    }

    fn unchecked(window: Window, points: &[Vec<f64>]) -> Result<Self> {
        let d = window.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in points {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { window, coords, provenance: Provenance::Manual })
    }

    /// Builds from flat coordinates without any checks. Used for sampled
    /// configurations where distinctness holds almost surely.
    pub fn from_flat(window: Window, coords: Vec<f64>, provenance: Provenance) -> Self {
        assert_eq!(coords.len() % window.dim(), 0);
        Self { window, coords, provenance }
    }

    pub fn empty(window: Window) -> Self {
        Self::from_flat(window, Vec::new(), Provenance::Manual)
    }

    fn check_distinct(&self) -> Result<()> {
        let d = self.dim();
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if self.coords[w[0] * d..(w[0] + 1) * d] == self.coords[w[1] * d..(w[1] + 1) * d] {
                return Err(Error::DuplicatePoint { index: w[0].max(w[1]) });
            }
        }
        Ok(())
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    /// Index of a point exactly equal to `x`, if any.
    pub fn position(&self, x: &[f64]) -> Option<usize> {
        self.points().position(|p| p == x)
    }

    /// Returns a new configuration with `x` appended. `x` must lie in the window.
    pub fn insert_point(&self, x: &[f64]) -> Result<Self> {
        if !self.window.contains(x) {
            return Err(Error::OutsideWindow);
        }
        self.insert_probe(x)
    }

    /// Like [`insert_point`](Self::insert_point) but accepts points outside the window.
    pub fn insert_probe(&self, x: &[f64]) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if self.position(x).is_some() {
            return Err(Error::DuplicatePoint { index: self.len() });
        }
        let mut coords = Vec::with_capacity(self.coords.len() + x.len());
        coords.extend_from_slice(&self.coords);
        coords.extend_from_slice(x);
        Ok(Self { coords, ..self.clone() })
    }

    /// Removes the most recently appended point.
    pub fn remove_last(&self) -> Self {
        let mut coords = self.coords.clone();
        coords.truncate(coords.len().saturating_sub(self.dim()));
        Self { coords, ..self.clone() }
    }

    /// Keeps the points satisfying `keep`, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&[f64]) -> bool) -> Self {
        let coords = self.points().filter(|p| keep(p)).flatten().copied().collect();
        Self { coords, ..self.clone() }
    }

    /// Concatenates the points of `other` after those of `self`.
    pub fn union(&self, other: &PointConfig) -> Self {
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Self { coords, ..self.clone() }
    }

    /// Every point translated by `shift`.
    pub fn translate(&self, shift: &[f64]) -> Self {
        let d = self.dim();
        let coords = self.coords.iter().enumerate().map(|(k, c)| c + shift[k % d]).collect();
        Self { coords, ..self.clone() }
    }

    /// Writes the configuration as CSV: a version comment, a metadata
    /// record `dim,volume,seed,replicate`, then one point per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# spatial-spectra point-config v1")?;
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(["dim", "volume", "seed", "replicate"])?;
        let (seed, rep) = match self.provenance {
            Provenance::Sampled { seed, replicate } => (seed.to_string(), replicate.to_string()),
            Provenance::Manual => ("manual".into(), String::new()),
        };
        w.write_record([self.dim().to_string(), self.window.volume().to_string(), seed, rep])?;
        for p in self.points() {
            w.write_record(p.iter().map(|c| format!("{c:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(input);
        let mut records = rdr.records();
        let meta = records
            .next()
            .ok_or_else(|| Error::InvalidArgument("missing metadata record".into()))??;
        let parse_err = |what: &str| Error::InvalidArgument(format!("bad {what} in point CSV"));
        let dim: usize = meta.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("dim"))?;
        let volume: f64 = meta.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("volume"))?;
        let provenance = match (meta.get(2).and_then(|s| s.parse().ok()), meta.get(3).and_then(|s| s.parse().ok())) {
            (Some(seed), Some(replicate)) => Provenance::Sampled { seed, replicate },
            _ => Provenance::Manual,
        };
        let window = Window::new(dim, volume)?;
        let mut coords = Vec::new();
        for rec in records {
            let rec = rec?;
            if rec.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: rec.len() });
            }
            for field in rec.iter() {
                coords.push(field.trim().parse::<f64>().map_err(|_| parse_err("coordinate"))?);
            }
        }
        Ok(Self { window, coords, provenance })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Draws `N ~ Poisson(volume)` points uniformly on the window cube.
pub fn sample_poisson_with<R: Rng + ?Sized>(window: &Window, rng: &mut R) -> Vec<f64> {
    let count = poisson_count(window.volume(), rng);
    let h = window.half_side();
    (0..count * window.dim()).map(|_| rng.random_range(-h..=h)).collect()
}

/// Poisson-distributed count with the given mean (0 for a non-positive mean).
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// Intensity-one Poisson configuration for replicate `replicate` of `seed`.
pub fn sample_poisson(window: &Window, seed: u64, replicate: u64) -> PointConfig {
    let mut rng = stream(seed, replicate);
    let coords = sample_poisson_with(window, &mut rng);
    PointConfig::from_flat(*window, coords, Provenance::Sampled { seed, replicate })
}

/// Uniform grid over the bounding box of a point set.
///
/// Cells are stored in compressed form: `cell_start[c]..cell_start[c+1]`
/// indexes into `items`, which holds point indices.
#[derive(Debug, Clone)]
pub struct GridIndex {
    dim: usize,
    cell_size: f64,
    origin: Vec<f64>,
    shape: Vec<usize>,
    cell_start: Vec<u32>,
    items: Vec<u32>,
    count: usize,
}

const MAX_CELLS_PER_POINT: usize = 4;

impl GridIndex {
    pub fn build(config: &PointConfig, cell_size: f64) -> Self {
        Self::from_coords(config.coords(), config.dim(), cell_size)
    }

    pub fn from_coords(coords: &[f64], dim: usize, cell_size: f64) -> Self {
        assert!(cell_size > 0.0 && cell_size.is_finite(), "cell size must be positive");
        let n = coords.len() / dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in coords.chunks_exact(dim) {
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if n == 0 {
            lo.fill(0.0);
            hi.fill(0.0);
        }
        // Grow the cell until the grid stays proportional to the point count.
        let mut cell = cell_size;
        let budget = MAX_CELLS_PER_POINT * n + 1024;
        let shape = loop {
            let shape: Vec<usize> = (0..dim).map(|a| ((hi[a] - lo[a]) / cell).floor() as usize + 1).collect();
            let total = shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
            match total {
                Some(t) if t <= budget => break shape,
                _ => cell *= 2.0,
            }
        };
        let total: usize = shape.iter().product();
        let mut grid = Self {
            dim,
            cell_size: cell,
            origin: lo,
            shape,
            cell_start: vec![0; total + 1],
            items: vec![0; n],
            count: n,
        };
        let cells: Vec<usize> = coords.chunks_exact(dim).map(|p| grid.cell_of(p)).collect();
        for &c in &cells {
            grid.cell_start[c + 1] += 1;
        }
        for c in 0..total {
            grid.cell_start[c + 1] += grid.cell_start[c];
        }
        let mut fill = grid.cell_start.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn axis_cell(&self, a: usize, v: f64) -> isize {
        ((v - self.origin[a]) / self.cell_size).floor() as isize
    }

    fn cell_of(&self, p: &[f64]) -> usize {
        let mut idx = 0usize;
        for a in 0..self.dim {
            let c = self.axis_cell(a, p[a]).clamp(0, self.shape[a] as isize - 1) as usize;
            idx = idx * self.shape[a] + c;
        }
        idx
    }

    /// Calls `visit` for every indexed point in cells meeting the box
    /// `[x - rho, x + rho]^d`. This is a superset of the ball `B(x, rho)`.
    pub fn for_each_candidate(&self, x: &[f64], rho: f64, mut visit: impl FnMut(usize)) {
        if self.count == 0 {
            return;
        }
        let mut lo = vec![0usize; self.dim];
        let mut hi = vec![0usize; self.dim];
        for a in 0..self.dim {
            let l = self.axis_cell(a, x[a] - rho);
            let h = self.axis_cell(a, x[a] + rho);
            let top = self.shape[a] as isize - 1;
            if h < 0 || l > top {
                return;
            }
            lo[a] = l.max(0) as usize;
            hi[a] = h.min(top) as usize;
        }
        let mut cur = lo.clone();
        loop {
            let mut idx = 0usize;
            for a in 0..self.dim {
                idx = idx * self.shape[a] + cur[a];
            }
            let (s, e) = (self.cell_start[idx] as usize, self.cell_start[idx + 1] as usize);
            for &i in &self.items[s..e] {
                visit(i as usize);
            }
            // odometer over the cell box
            let mut a = self.dim;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                if cur[a] < hi[a] {
                    cur[a] += 1;
                    break;
                }
                cur[a] = lo[a];
            }
        }
    }

    /// Indices of points `p` in `coords` with `|p - x| <= rho`, ascending.
    pub fn within(&self, coords: &[f64], x: &[f64], rho: f64) -> Vec<usize> {
        let r2 = rho * rho;
        let d = self.dim;
        let mut out = Vec::new();
        self.for_each_candidate(x, rho, |i| {
            if dist2(&coords[i * d..(i + 1) * d], x) <= r2 {
                out.push(i);
            }
        });
        out.sort_unstable();
        out
    }
}

/// Indices of configuration points within Euclidean distance `rho` of `x`, ascending.
pub fn neighbors_within(index: &GridIndex, config: &PointConfig, x: &[f64], rho: f64) -> Vec<usize> {
    index.within(config.coords(), x, rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64], volume: f64) -> PointConfig {
        let w = Window::new(1, volume).unwrap();
        PointConfig::new(w, &points.iter().map(|&p| vec![p]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn window_volume_matches_side() {
        for d in 1..=4 {
            let w = Window::new(d, 37.5).unwrap();
            let rel = (w.side().powi(d as i32) - 37.5).abs() / 37.5;
            assert!(rel < 1e-12, "d={d} rel={rel}");
        }
        let w = Window::new(1, 4.0).unwrap();
        assert_eq!(w.half_side(), 2.0);
        assert!(Window::new(0, 1.0).is_err());
        assert!(Window::new(2, 0.0).is_err());
    }

    #[test]
    fn tiny_volume_is_almost_always_empty() {
        let w = Window::new(2, 1e-9).unwrap();
        let nonempty = (0..1000).filter(|&r| !sample_poisson(&w, 3, r).is_empty()).count();
        assert_eq!(nonempty, 0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let w = Window::new(2, 50.0).unwrap();
        assert_eq!(sample_poisson(&w, 11, 4), sample_poisson(&w, 11, 4));
        assert_ne!(sample_poisson(&w, 11, 4).coords(), sample_poisson(&w, 11, 5).coords());
    }

    #[test]
    fn sampled_points_lie_in_window() {
        let w = Window::new(3, 80.0).unwrap();
        let cfg = sample_poisson(&w, 1, 0);
        assert!(cfg.points().all(|p| w.contains(p)));
    }

    #[test]
    fn insert_and_remove() {
        let w = Window::new(2, 4.0).unwrap();
        let empty = PointConfig::empty(w);
        let one = empty.insert_point(&[0.1, 0.2]).unwrap();
        assert_eq!(one.len(), 1);
        let two = one.insert_point(&[0.5, -0.5]).unwrap();
        assert_eq!(two.remove_last(), one);
        assert!(matches!(two.insert_point(&[0.1, 0.2]), Err(Error::DuplicatePoint { .. })));
        assert!(matches!(one.insert_point(&[5.0, 0.0]), Err(Error::OutsideWindow)));
        assert!(one.insert_probe(&[5.0, 0.0]).is_ok());
    }

    #[test]
    fn manual_duplicates_rejected() {
        let w = Window::new(1, 4.0).unwrap();
        assert!(PointConfig::new(w, &[vec![0.0], vec![1.0], vec![0.0]]).is_err());
    }

    #[test]
    fn neighbors_within_small_cases() {
        let cfg = line(&[0.0, 0.5, 2.0], 8.0);
        let grid = GridIndex::build(&cfg, 1.0);
        assert_eq!(neighbors_within(&grid, &cfg, &[0.0], 1.0), vec![0, 1]);
        assert!(neighbors_within(&grid, &cfg, &[0.25], 0.0).is_empty());
        // query center far outside the indexed box
        assert!(neighbors_within(&grid, &cfg, &[100.0], 1.0).is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let w = Window::new(2, 9.0).unwrap();
        let cfg = sample_poisson(&w, 5, 2);
        let mut buf = Vec::new();
        cfg.write_csv(&mut buf).unwrap();
        let back = PointConfig::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, cfg);
    }
}
