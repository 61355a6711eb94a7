//! Linear eigenvalue statistics `Tr f(A) = Σ f(λ_i)`, computed either from
//! the spectrum or, for polynomials, by counting closed walks. Also the
//! weighted traces `Tr[f(A) e^{cA}]` and the integral norms of test functions.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graphs::Adjacency;

pub const DEFAULT_DENSE_CAP: usize = 4000;
const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0; // 2^53

/// Closed-form smooth test functions known to the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothKind {
    /// `exp(-1/(1-(x-1)^2))` on `(0, 2)`, zero elsewhere.
    Bump,
    /// `exp(-x^2)`.
    Gauss,
    /// `x exp(-x^2)`.
    XGauss,
    /// `sin(2x) exp(-x^2/2)`.
    SinGauss,
    /// `atan(2x)`.
    Atan2x,
    /// `x / (1 + x^2)`.
    Rational,
    /// `exp(2|x|)`, deliberately outside every admissible class.
    Exp2Abs,
}

impl SmoothKind {
    const ALL: [(&'static str, SmoothKind); 7] = [
        ("bump", SmoothKind::Bump),
        ("gauss", SmoothKind::Gauss),
        ("xgauss", SmoothKind::XGauss),
        ("sin_gauss", SmoothKind::SinGauss),
        ("atan2x", SmoothKind::Atan2x),
        ("rational", SmoothKind::Rational),
        ("exp2abs", SmoothKind::Exp2Abs),
    ];

    fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).unwrap_or("?")
    }

    /// `(f, f', f'')` at `x`.
    fn eval3(self, x: f64) -> [f64; 3] {
        match self {
            Self::Bump => {
                let u = x - 1.0;
                let s = 1.0 - u * u;
                if s <= 0.0 {
                    return [0.0; 3];
                }
                let b = (-1.0 / s).exp();
                let g1 = -2.0 * u / (s * s);
                let g2 = -2.0 / (s * s) - 8.0 * u * u / (s * s * s);
                [b, b * g1, b * (g1 * g1 + g2)]
            }
            Self::Gauss => {
                let e = (-x * x).exp();
                [e, -2.0 * x * e, (4.0 * x * x - 2.0) * e]
            }
            Self::XGauss => {
                let e = (-x * x).exp();
                [x * e, (1.0 - 2.0 * x * x) * e, (4.0 * x * x * x - 6.0 * x) * e]
            }
            Self::SinGauss => {
                let e = (-0.5 * x * x).exp();
                let (s, c) = (2.0 * x).sin_cos();
                [s * e, (2.0 * c - x * s) * e, ((x * x - 5.0) * s - 4.0 * x * c) * e]
            }
            Self::Atan2x => {
                let q = 1.0 + 4.0 * x * x;
                [(2.0 * x).atan(), 2.0 / q, -16.0 * x / (q * q)]
            }
            Self::Rational => {
                let q = 1.0 + x * x;
                [x / q, (1.0 - x * x) / (q * q), (2.0 * x * x * x - 6.0 * x) / (q * q * q)]
            }
            Self::Exp2Abs => {
                let e = (2.0 * x.abs()).exp();
                [e, 2.0 * x.signum() * e, 4.0 * e]
            }
        }
    }

    fn support(self) -> Option<(f64, f64)> {
        match self {
            Self::Bump => Some((0.0, 2.0)),
            _ => None,
        }
    }
}

/// A test function `f` together with `f'` and `f''`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `Σ a_q x^q` with coefficients `a_0, a_1, ...`.
    Polynomial(Vec<f64>),
    /// `amplitude * kind(x)`.
    Smooth { kind: SmoothKind, amplitude: f64 },
}

impl TestFunction {
    pub fn zero() -> Self {
        Self::Polynomial(Vec::new())
    }

    pub fn monomial(q: usize) -> Self {
        let mut a = vec![0.0; q + 1];
        a[q] = 1.0;
        Self::Polynomial(a)
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self::Polynomial(coefficients)
    }

    pub fn smooth(kind: SmoothKind) -> Self {
        Self::Smooth { kind, amplitude: 1.0 }
    }

    /// Parses a registry name: `zero`, `poly:a0,a1,...`, `x^q`, a smooth
    /// name such as `bump`, optionally prefixed by an amplitude `2*`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some((a, rest)) = spec.split_once('*') {
            let amp: f64 = a.trim().parse().map_err(|_| Error::UnknownFunction(spec.into()))?;
            return Ok(Self::parse(rest)?.scaled(amp));
        }
        if spec == "zero" {
            return Ok(Self::zero());
        }
        if let Some(list) = spec.strip_prefix("poly:") {
            let coeffs = list
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::UnknownFunction(spec.into()))?;
            return Ok(Self::Polynomial(coeffs));
        }
        if let Some(q) = spec.strip_prefix("x^") {
            let q: usize = q.parse().map_err(|_| Error::UnknownFunction(spec.into()))?;
            return Ok(Self::monomial(q));
        }
        if spec == "x" {
            return Ok(Self::monomial(1));
        }
        SmoothKind::ALL
            .iter()
            .find(|(n, _)| *n == spec)
            .map(|&(_, kind)| Self::smooth(kind))
            .ok_or_else(|| Error::UnknownFunction(spec.into()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Polynomial(a) => Self::Polynomial(a.iter().map(|c| c * factor).collect()),
            Self::Smooth { kind, amplitude } => Self::Smooth { kind: *kind, amplitude: amplitude * factor },
        }
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match self {
            Self::Polynomial(a) => Some(a),
            Self::Smooth { .. } => None,
        }
    }

    /// Polynomial degree (trailing zero coefficients ignored); `None` for smooth functions.
    pub fn degree(&self) -> Option<usize> {
        self.coefficients().map(|a| a.iter().rposition(|&c| c != 0.0).unwrap_or(0))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Polynomial(a) => a.iter().all(|&c| c == 0.0),
            Self::Smooth { amplitude, .. } => *amplitude == 0.0,
        }
    }

    /// `(f, f', f'')` at `x`.
    pub fn eval3(&self, x: f64) -> [f64; 3] {
        match self {
            Self::Polynomial(a) => {
                let (mut p0, mut p1, mut p2) = (0.0, 0.0, 0.0);
                for &c in a.iter().rev() {
                    p2 = p2 * x + 2.0 * p1;
                    p1 = p1 * x + p0;
                    p0 = p0 * x + c;
                }
                [p0, p1, p2]
            }
            Self::Smooth { kind, amplitude } => kind.eval3(x).map(|v| v * amplitude),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Polynomial(a) => a.iter().rev().fold(0.0, |acc, &c| acc * x + c),
            Self::Smooth { .. } => self.eval3(x)[0],
        }
    }

    pub fn vanishes_at_zero(&self) -> bool {
        self.eval(0.0).abs() <= 1e-12
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Smooth { kind, .. } => kind.support(),
            Self::Polynomial(_) => None,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Polynomial(a) if a.iter().all(|&c| c == 0.0) => write!(f, "zero"),
            Self::Polynomial(a) => {
                let parts: Vec<String> = a.iter().map(|c| format!("{c}")).collect();
                write!(f, "poly:{}", parts.join(","))
            }
            Self::Smooth { kind, amplitude } if *amplitude == 1.0 => write!(f, "{}", kind.name()),
            Self::Smooth { kind, amplitude } => write!(f, "{amplitude}*{}", kind.name()),
        }
    }
}

impl Serialize for TestFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Sorted eigenvalues of an adjacency matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }

    pub fn trace_of(&self, f: &TestFunction) -> f64 {
        self.eigenvalues.iter().map(|&l| f.eval(l)).sum()
    }

    /// Single-column CSV with a version comment.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# spatial-spectra spectrum v1")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eigenvalue"])?;
        for l in &self.eigenvalues {
            w.write_record([format!("{l:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// All eigenvalues, solved one connected component at a time.
pub fn eigenvalues(adj: &Adjacency) -> Result<Spectrum> {
    eigenvalues_with_cap(adj, DEFAULT_DENSE_CAP)
}

pub fn eigenvalues_with_cap(adj: &Adjacency, cap: usize) -> Result<Spectrum> {
    let comps = adj.components();
    if let Some(big) = comps.iter().map(Vec::len).max() {
        if big > cap {
            return Err(Error::DenseCapExceeded { size: big, cap });
        }
    }
    let mut values = Vec::with_capacity(adj.vertex_count());
    let mut local = vec![u32::MAX; adj.vertex_count()];
    for comp in &comps {
        match comp.len() {
            1 => values.push(0.0),
            2 => values.extend([-1.0, 1.0]),
            s => {
                for (k, &v) in comp.iter().enumerate() {
                    local[v as usize] = k as u32;
                }
                let mut m = DMatrix::<f64>::zeros(s, s);
                for (k, &v) in comp.iter().enumerate() {
                    for &u in adj.neighbors(v as usize) {
                        m[(k, local[u as usize] as usize)] = 1.0;
                    }
                }
                values.extend(SymmetricEigen::new(m).eigenvalues.iter().copied());
            }
        }
    }
    values.sort_by(f64::total_cmp);
    Ok(Spectrum { eigenvalues: values })
}

/// Sparse vector propagation confined to the walk ball around one vertex.
pub(crate) struct WalkScratch {
    dense: Vec<f64>,
    touched: Vec<u32>,
}

type Sparse = Vec<(u32, f64)>;

impl WalkScratch {
    pub(crate) fn new(n: usize) -> Self {
        Self { dense: vec![0.0; n], touched: Vec::new() }
    }

    fn multiply(&mut self, adj: &Adjacency, x: &Sparse) -> Sparse {
        for &(v, val) in x {
            for &u in adj.neighbors(v as usize) {
                if self.dense[u as usize] == 0.0 {
                    self.touched.push(u);
                }
                self.dense[u as usize] += val;
            }
        }
        let mut out: Sparse = Vec::with_capacity(self.touched.len());
        for &u in &self.touched {
            out.push((u, self.dense[u as usize]));
            self.dense[u as usize] = 0.0;
        }
        self.touched.clear();
        out
    }

    fn dot(&mut self, x: &Sparse, y: &Sparse) -> f64 {
        for &(v, val) in x {
            self.dense[v as usize] = val;
        }
        let s = y.iter().map(|&(v, val)| self.dense[v as usize] * val).sum();
        for &(v, _) in x {
            self.dense[v as usize] = 0.0;
        }
        s
    }

    /// `(A^q)_{vv}` for `q = 0..=m`.
    pub(crate) fn diagonal_powers(&mut self, adj: &Adjacency, v: usize, m: usize) -> Result<Vec<f64>> {
        let half = m.div_ceil(2);
        let mut powers: Vec<Sparse> = vec![vec![(v as u32, 1.0)]];
        for _ in 0..half {
            let next = self.multiply(adj, powers.last().unwrap());
            if next.iter().any(|&(_, c)| c > EXACT_LIMIT) {
                return Err(Error::WalkOverflow);
            }
            powers.push(next);
        }
        let mut out = Vec::with_capacity(m + 1);
        for q in 0..=m {
            let a = q / 2;
            let value = self.dot(&powers[a], &powers[q - a]);
            if value > EXACT_LIMIT {
                return Err(Error::WalkOverflow);
            }
            out.push(value);
        }
        Ok(out)
    }
}

/// Closed-walk counts `Tr A^q` for `q = 0..=m` (with `Tr A^0 = N`).
pub fn closed_walk_traces(adj: &Adjacency, m: usize) -> Result<Vec<f64>> {
    let mut scratch = WalkScratch::new(adj.vertex_count());
    let mut total = vec![0.0; m + 1];
    for v in 0..adj.vertex_count() {
        for (t, d) in total.iter_mut().zip(scratch.diagonal_powers(adj, v, m)?) {
            *t += d;
        }
    }
    if total.iter().any(|&t| t > EXACT_LIMIT) {
        return Err(Error::WalkOverflow);
    }
    Ok(total)
}

/// `Tr B^q - Tr A^q` for `q = 0..=m`, where `after` contains the vertices of
/// `before` under the same indices followed by any new vertices. Only
/// vertices within walking distance of a changed adjacency row are visited.
pub fn closed_walk_trace_change(before: &Adjacency, after: &Adjacency, m: usize) -> Result<Vec<f64>> {
    let n_old = before.vertex_count();
    let n_new = after.vertex_count();
    if n_new < n_old {
        return Err(Error::InvalidArgument("second graph must extend the first".into()));
    }
    let mut seeds: Vec<u32> = (0..n_old).filter(|&v| before.neighbors(v) != after.neighbors(v)).map(|v| v as u32).collect();
    seeds.extend((n_old..n_new).map(|v| v as u32));
    let depth = m / 2;
    let mut mark = vec![false; n_new];
    let mut affected = Vec::new();
    for graph in [before, after] {
        let mut frontier: Vec<u32> = seeds.iter().copied().filter(|&s| (s as usize) < graph.vertex_count()).collect();
        let mut seen: Vec<u32> = frontier.clone();
        let mut local = vec![false; graph.vertex_count()];
        for &s in &frontier {
            local[s as usize] = true;
        }
        for _ in 0..depth {
            let mut next = Vec::new();
            for &v in &frontier {
                for &u in graph.neighbors(v as usize) {
                    if !local[u as usize] {
                        local[u as usize] = true;
                        next.push(u);
                        seen.push(u);
                    }
                }
            }
            frontier = next;
        }
        for v in seen {
            if !mark[v as usize] {
                mark[v as usize] = true;
                affected.push(v);
            }
        }
    }
    let mut delta = vec![0.0; m + 1];
    let mut s_old = WalkScratch::new(n_old);
    let mut s_new = WalkScratch::new(n_new);
    for &v in &affected {
        let v = v as usize;
        for (d, x) in delta.iter_mut().zip(s_new.diagonal_powers(after, v, m)?) {
            *d += x;
        }
        if v < n_old {
            for (d, x) in delta.iter_mut().zip(s_old.diagonal_powers(before, v, m)?) {
                *d -= x;
            }
        }
    }
    Ok(delta)
}

/// `Σ_q a_q Tr A^q` by closed-walk counting.
pub fn trace_poly_walks(adj: &Adjacency, f: &TestFunction) -> Result<f64> {
    let a = f
        .coefficients()
        .ok_or_else(|| Error::InvalidArgument("closed-walk route needs a polynomial".into()))?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let traces = closed_walk_traces(adj, a.len() - 1)?;
    Ok(a.iter().zip(&traces).map(|(c, t)| c * t).sum())
}

/// `Σ_i f(λ_i)` from the spectrum.
pub fn trace_function(adj: &Adjacency, f: &TestFunction) -> Result<f64> {
    if f.is_zero() {
        return Ok(0.0);
    }
    Ok(eigenvalues(adj)?.trace_of(f))
}

/// `Σ_i f(λ_i) e^{c λ_i}`.
pub fn trace_weighted(adj: &Adjacency, f: &TestFunction, c: f64) -> Result<f64> {
    if c == 0.0 {
        return Err(Error::InvalidArgument("weighted trace requires c != 0".into()));
    }
    if !f.vanishes_at_zero() {
        return Err(Error::InvalidArgument(format!("weighted trace requires f(0) = 0, got {}", f.eval(0.0))));
    }
    let spec = eigenvalues(adj)?;
    weighted_from_spectrum(&spec, f, c)
}

pub fn weighted_from_spectrum(spec: &Spectrum, f: &TestFunction, c: f64) -> Result<f64> {
    let reach = c.abs() * spec.spectral_radius();
    if reach > 700.0 {
        return Err(Error::SpectralRange(reach));
    }
    Ok(spec.eigenvalues.iter().map(|&l| f.eval(l) * (c * l).exp()).sum())
}

fn simpson(h: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (h(lm), h(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(h, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(h, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson integral of `h` over `[a, b]` to relative accuracy `tol`.
pub fn integrate(h: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (h(a), h(b));
    let fm = h(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    if !whole.is_finite() {
        return whole;
    }
    // coarse magnitude from a 17-point sample sets the absolute target
    let scale = (0..=16).map(|k| h(a + (b - a) * k as f64 / 16.0).abs()).fold(0.0, f64::max) * (b - a);
    simpson(h, a, b, fa, fm, fb, whole, (tol * scale).max(1e-300), 40)
}

const PANEL_TOL: f64 = 1e-13;
const TAIL_RATIO: f64 = 1e-12;
const MAX_PANELS: usize = 2000;

/// `∫_R h` over unit panels walking outward from the origin, stopping once a
/// run of panels contributes below `TAIL_RATIO` of the accumulated value.
fn integrate_line(h: &impl Fn(f64) -> f64, support: Option<(f64, f64)>) -> Result<f64> {
    if let Some((lo, hi)) = support {
        let panels = ((hi - lo) * 16.0).ceil() as usize;
        let w = (hi - lo) / panels as f64;
        let total: f64 = (0..panels).map(|k| integrate(h, lo + k as f64 * w, lo + (k + 1) as f64 * w, PANEL_TOL)).sum();
        return if total.is_finite() { Ok(total) } else { Err(Error::Divergence("non-finite integrand".into())) };
    }
    let mut total = 0.0;
    let mut quiet = 0;
    for k in 0..MAX_PANELS {
        let (a, b) = (k as f64, k as f64 + 1.0);
        let piece = integrate(h, a, b, PANEL_TOL) + integrate(h, -b, -a, PANEL_TOL);
        if !piece.is_finite() {
            return Err(Error::Divergence(format!("non-finite integrand near |x| = {b}")));
        }
        total += piece;
        if !total.is_finite() {
            return Err(Error::Divergence(format!("integral overflowed by |x| = {b}")));
        }
        if k >= 8 && piece <= TAIL_RATIO * total {
            quiet += 1;
            if quiet >= 3 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Divergence(format!("tail did not decay within |x| <= {MAX_PANELS}")))
}

fn sech(x: f64) -> f64 {
    let a = x.abs();
    if a > 700.0 {
        0.0
    } else {
        let e = (-a).exp();
        2.0 * e / (1.0 + e * e)
    }
}

/// `‖f sech(c·)‖² + ‖f' sech(c·)‖² + ‖f'' sech(c·)‖²`.
pub fn lc_norm(f: &TestFunction, c: f64) -> Result<f64> {
    if c == 0.0 {
        return Err(Error::InvalidArgument("weighted norm requires c != 0".into()));
    }
    if f.is_zero() {
        return Ok(0.0);
    }
    let h = |x: f64| {
        let [a, b, d] = f.eval3(x);
        let s = sech(c * x);
        if s == 0.0 && (a * a + b * b + d * d).is_finite() {
            return 0.0;
        }
        (a * a + b * b + d * d) * s * s
    };
    integrate_line(&h, f.support())
}

/// `(‖f‖², ‖f''‖²)`.
pub fn sobolev_norms(f: &TestFunction) -> Result<(f64, f64)> {
    if f.is_zero() {
        return Ok((0.0, 0.0));
    }
    let f0 = integrate_line(&|x| f.eval3(x)[0].powi(2), f.support())?;
    let f2 = integrate_line(&|x| f.eval3(x)[2].powi(2), f.support())?;
    Ok((f0, f2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn triangle() -> Adjacency {
        Adjacency::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn path3() -> Adjacency {
        Adjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn known_spectra() {
        let t = eigenvalues(&triangle()).unwrap().eigenvalues;
        for (a, b) in t.iter().zip([-1.0, -1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = eigenvalues(&path3()).unwrap().eigenvalues;
        for (a, b) in p.iter().zip([-2f64.sqrt(), 0.0, 2f64.sqrt()]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(eigenvalues(&Adjacency::empty(5)).unwrap().eigenvalues, vec![0.0; 5]);
    }

    #[test]
    fn dense_cap_is_enforced() {
        assert!(matches!(eigenvalues_with_cap(&triangle(), 2), Err(Error::DenseCapExceeded { size: 3, cap: 2 })));
        assert!(eigenvalues_with_cap(&Adjacency::empty(10), 1).is_ok());
    }

    #[test]
    fn walk_traces() {
        assert_eq!(trace_poly_walks(&triangle(), &TestFunction::monomial(2)).unwrap(), 6.0);
        assert_eq!(trace_poly_walks(&triangle(), &TestFunction::monomial(3)).unwrap(), 6.0);
        assert_eq!(trace_poly_walks(&path3(), &TestFunction::monomial(4)).unwrap(), 8.0);
        let with_const = TestFunction::polynomial(vec![2.0, 0.0, 1.0]);
        assert_eq!(trace_poly_walks(&triangle(), &with_const).unwrap(), 6.0 + 6.0);
    }

    #[test]
    fn walk_overflow_flagged() {
        let n = 40;
        let edges: Vec<(u32, u32)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let k40 = Adjacency::from_edges(n as usize, &edges).unwrap();
        assert!(matches!(trace_poly_walks(&k40, &TestFunction::monomial(12)), Err(Error::WalkOverflow)));
    }

    #[test]
    fn spectral_traces() {
        assert_eq!(trace_function(&triangle(), &TestFunction::zero()).unwrap(), 0.0);
        let r = trace_function(&triangle(), &TestFunction::smooth(SmoothKind::Rational)).unwrap();
        assert!((r + 3.0 / 5.0).abs() < 1e-12);
        let w = trace_weighted(&triangle(), &TestFunction::monomial(1), 1.0).unwrap();
        assert!((w - (-2.0 * (-1f64).exp() + 2.0 * 2f64.exp())).abs() < 1e-10);
        assert_eq!(trace_weighted(&Adjacency::empty(4), &TestFunction::monomial(2), 1.0).unwrap(), 0.0);
        assert!(trace_weighted(&triangle(), &TestFunction::monomial(2), 0.0).is_err());
        assert!(matches!(trace_weighted(&triangle(), &TestFunction::monomial(1), 400.0), Err(Error::SpectralRange(_))));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fs = ["bump", "gauss", "xgauss", "sin_gauss", "atan2x", "rational", "poly:1,-2,0.5,3"];
        for name in fs {
            let f = TestFunction::parse(name).unwrap();
            for &x in &[-1.3, -0.2, 0.4, 0.9, 1.7] {
                let h = 1e-5;
                let [_, d1, d2] = f.eval3(x);
                let fd1 = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
                let fd2 = (f.eval3(x + h)[1] - f.eval3(x - h)[1]) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()), "{name} f' at {x}");
                assert!((d2 - fd2).abs() < 1e-5 * (1.0 + d2.abs()), "{name} f'' at {x}");
            }
        }
    }

    #[test]
    fn registry_round_trip() {
        for name in ["zero", "poly:0,1,2", "bump", "2*xgauss"] {
            assert_eq!(TestFunction::parse(name).unwrap().to_string(), name);
        }
        assert!(TestFunction::parse("nope").is_err());
        assert!(TestFunction::parse("bump").unwrap().vanishes_at_zero());
        assert!(!TestFunction::parse("gauss").unwrap().vanishes_at_zero());
    }

    #[test]
    fn lc_norm_closed_forms() {
        assert_eq!(lc_norm(&TestFunction::zero(), 1.0).unwrap(), 0.0);
        let v = lc_norm(&TestFunction::monomial(1), 1.0).unwrap();
        assert!((v - (PI * PI / 6.0 + 2.0)).abs() < 1e-8, "{v}");
        assert!(matches!(lc_norm(&TestFunction::smooth(SmoothKind::Exp2Abs), 1.0), Err(Error::Divergence(_))));
        assert!(lc_norm(&TestFunction::smooth(SmoothKind::Atan2x), 1.0).unwrap().is_finite());
    }

    #[test]
    fn sobolev_closed_forms() {
        let (a, b) = sobolev_norms(&TestFunction::smooth(SmoothKind::Gauss)).unwrap();
        let s = (PI / 2.0).sqrt();
        assert!((a - s).abs() < 1e-9 && (b - 3.0 * s).abs() < 1e-8, "{a} {b}");
        let bump = TestFunction::smooth(SmoothKind::Bump);
        let (a1, b1) = sobolev_norms(&bump).unwrap();
        let (a2, b2) = sobolev_norms(&bump.scaled(2.0)).unwrap();
        assert!((a2 - 4.0 * a1).abs() < 1e-12 * a2 && (b2 - 4.0 * b1).abs() < 1e-10 * b2);
        assert!(sobolev_norms(&TestFunction::smooth(SmoothKind::Atan2x)).is_err());
    }

    #[test]
    fn spectrum_csv() {
        let mut buf = Vec::new();
        eigenvalues(&triangle()).unwrap().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 5);
    }
}
