//! Library quantities against independent numerical references.

mod common;

use spatial_spectra::graphs::{build_graph, GraphModel};
use spatial_spectra::mcclt::{fit_slope, rgg_square_variance_1d};
use spatial_spectra::paths::expected_walk_bound;
use spatial_spectra::pointproc::{sample_poisson, Window};
use spatial_spectra::spectral::{closed_walk_traces, eigenvalues, sobolev_norms, SmoothKind, TestFunction};
use spatial_spectra::stabilization::{KNN_SECTORS, RNG_EPSILON, RNG_SECTORS, STANDARD_BETA};

#[test]
fn exact_square_variance_matches_quadrature() {
    for (n, r) in [(1024.0, 0.5), (64.0, 0.5), (30.0, 2.0), (10.0, 5.0)] {
        let closed = rgg_square_variance_1d(n, r).unwrap();
        let quad = common::rgg_square_variance_quadrature(n, r, 1 << 20);
        assert!((closed - quad).abs() <= 1e-8 * quad, "n={n} r={r}: {closed} vs {quad}");
    }
    assert!((rgg_square_variance_1d(1024.0, 0.5).unwrap() / 1024.0 - 5.9979).abs() < 1e-4);
    assert!((rgg_square_variance_1d(1e9, 0.5).unwrap() / 1e9 - 6.0).abs() < 1e-6);
    assert!(rgg_square_variance_1d(0.5, 0.5).is_err());
}

#[test]
fn closed_walks_match_dense_powers() {
    for (model, seed) in [(GraphModel::Rgg { radius: 1.2 }, 1), (GraphModel::Knn { k: 3 }, 2), (GraphModel::Rng, 3)] {
        let c = sample_poisson(&Window::new(2, 120.0).unwrap(), seed, 0);
        let adj = build_graph(&c, model);
        let fast = closed_walk_traces(&adj, 7).unwrap();
        let dense = common::dense_traces(&adj, 7);
        assert_eq!(fast, dense, "{}", model.name());
        let spec = eigenvalues(&adj).unwrap();
        for q in 1..=7 {
            let s: f64 = spec.eigenvalues.iter().map(|l| l.powi(q as i32)).sum();
            assert!((s - dense[q]).abs() <= 1e-8 * (1.0 + dense[q]), "q={q}: {s} vs {}", dense[q]);
        }
    }
}

#[test]
fn sobolev_norms_of_the_gaussian() {
    // f = e^{-x²}: ∫ e^{-2x²} = √(π/2) and ∫ (4x² - 2)² e^{-2x²} = 3√(π/2)
    let (l2, second) = sobolev_norms(&TestFunction::smooth(SmoothKind::Gauss)).unwrap();
    let base = (std::f64::consts::PI / 2.0).sqrt();
    assert!((l2 - base).abs() < 1e-6, "{l2}");
    assert!((second - 3.0 * base).abs() < 1e-6, "{second}");
}

#[test]
fn expected_walk_bound_values() {
    // m = 1: n / log 2 whatever the radius and dimension
    assert!((expected_walk_bound(256.0, 1.0, 2, 1) - 256.0 / 2f64.ln()).abs() < 1e-9);
    // m = 2, d = 1, r = 1: n · 3 · (2 / log 3)²
    let want = 256.0 * 3.0 * (2.0 / 3f64.ln()).powi(2);
    assert!((expected_walk_bound(256.0, 1.0, 1, 2) - want).abs() < 1e-9 * want);
}

#[test]
fn synthetic_rate_slope() {
    let ns = [64.0, 256.0, 1024.0, 4096.0];
    let (slope, _) = fit_slope(&ns, &ns.map(|n: f64| 3.0 * n.powf(-0.5))).unwrap();
    assert!((slope + 0.5).abs() < 1e-12, "{slope}");
}

#[test]
fn shield_constants() {
    assert_eq!(KNN_SECTORS, 6);
    assert_eq!(RNG_SECTORS, 13);
    assert_eq!(RNG_EPSILON, 1e-5);
    assert_eq!(STANDARD_BETA, 100.0);
}
