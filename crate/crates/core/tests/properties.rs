//! Randomized checks of the structural properties, against brute-force references.

mod common;

use proptest::prelude::*;
use spatial_spectra::graphs::{build_graph, max_degree, GraphModel};
use spatial_spectra::mcclt::{run_replicates, ExperimentConfig};
use spatial_spectra::paths::{box_bound, count_walks, count_walks_at};
use spatial_spectra::pointproc::{sample_poisson, stream, GridIndex, PointConfig, Window};
use spatial_spectra::scores::{add_one_cost, restrict_to_ball, score_diagonal, score_enumerated, sum_scores};
use spatial_spectra::spectral::{closed_walk_traces, eigenvalues, lc_norm, trace_function, trace_poly_walks, SmoothKind, TestFunction};
use spatial_spectra::stabilization::{r1, r1_knn, r1_knn_window, SectorFan};
use spatial_spectra::Error;

fn config(dim: usize, volume: f64, seed: u64) -> PointConfig {
    sample_poisson(&Window::new(dim, volume).unwrap(), seed, 0)
}

fn model_strategy() -> impl Strategy<Value = GraphModel> {
    prop_oneof![
        (0.3f64..1.6).prop_map(|r| GraphModel::Rgg { radius: r }),
        (1usize..4).prop_map(|k| GraphModel::Knn { k }),
        Just(GraphModel::Rng),
    ]
}

fn poly_strategy(max_degree: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-6i32..=6).prop_map(|c| c as f64 * 0.5), 1..=max_degree + 1)
}

fn brute_edges(config: &PointConfig, model: GraphModel) -> Vec<(u32, u32)> {
    let (c, d) = (config.coords(), config.dim());
    match model {
        GraphModel::Rgg { radius } => common::rgg_pairs(c, d, radius),
        GraphModel::Knn { k } => common::knn_pairs(c, d, k),
        GraphModel::Rng => common::rng_pairs(c, d),
    }
}

fn sorted(mut e: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
    e.sort_unstable();
    e
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn builders_match_brute_force(model in model_strategy(), dim in 1usize..=3, volume in 5.0f64..120.0, seed in any::<u64>()) {
        let c = config(dim, volume, seed);
        prop_assert_eq!(sorted(build_graph(&c, model).edges()), brute_edges(&c, model));
    }

    #[test]
    fn grid_queries_match_scans(dim in 1usize..=3, volume in 5.0f64..200.0, cell in 0.2f64..3.0, rho in 0.0f64..4.0, seed in any::<u64>()) {
        let c = config(dim, volume, seed);
        let grid = GridIndex::build(&c, cell);
        let mut rng = stream(seed, 1);
        let x = c.window().uniform_point(&mut rng);
        let brute: Vec<usize> = (0..c.len()).filter(|&i| common::d2(c.point(i), &x) <= rho * rho).collect();
        prop_assert_eq!(grid.within(c.coords(), &x, rho), brute);
    }

    #[test]
    fn rgg_insertion_keeps_edges(dim in 1usize..=3, r in 0.3f64..1.5, seed in any::<u64>()) {
        let c = config(dim, 60.0, seed);
        let mut rng = stream(seed, 2);
        let x = c.window().uniform_point(&mut rng);
        let model = GraphModel::Rgg { radius: r };
        let after = build_graph(&c.insert_point(&x).unwrap(), model);
        for (i, j) in build_graph(&c, model).edges() {
            prop_assert!(after.has_edge(i as usize, j as usize));
        }
    }

    #[test]
    fn knn_has_no_isolated_vertices(k in 1usize..4, dim in 1usize..=3, seed in any::<u64>()) {
        let c = config(dim, 80.0, seed);
        prop_assume!(c.len() >= 2);
        let adj = build_graph(&c, GraphModel::Knn { k });
        prop_assert!((0..c.len()).all(|v| adj.degree(v) >= 1));
    }

    #[test]
    fn rng_removal_keeps_other_edges(dim in 1usize..=3, seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let c = config(dim, 60.0, seed);
        prop_assume!(c.len() >= 3);
        let p = pick.index(c.len());
        let gone = c.point(p).to_vec();
        let smaller = c.filter(|q| q != gone.as_slice());
        let after = build_graph(&smaller, GraphModel::Rng);
        let shift = |v: u32| if (v as usize) > p { v as usize - 1 } else { v as usize };
        for (i, j) in build_graph(&c, GraphModel::Rng).edges() {
            if i as usize != p && j as usize != p {
                prop_assert!(after.has_edge(shift(i), shift(j)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn walk_and_spectral_routes_agree(model in model_strategy(), volume in 10.0f64..400.0, a in poly_strategy(6), seed in any::<u64>()) {
        let c = config(2, volume, seed);
        let adj = build_graph(&c, model);
        let f = TestFunction::polynomial(a.clone());
        let walks = trace_poly_walks(&adj, &f).unwrap();
        let spectral = trace_function(&adj, &f).unwrap();
        prop_assert!((walks - spectral).abs() <= 1e-8 * (1.0 + walks.abs()), "{walks} vs {spectral}");
        if c.len() <= 150 {
            prop_assert_eq!(walks, common::dense_poly_trace(&adj, &a));
        }
    }

    #[test]
    fn trace_invariants_and_spectral_bound(model in model_strategy(), dim in 1usize..=3, volume in 5.0f64..300.0, seed in any::<u64>()) {
        let c = config(dim, volume, seed);
        let adj = build_graph(&c, model);
        let t = closed_walk_traces(&adj, 3).unwrap();
        prop_assert_eq!(t[1], 0.0);
        prop_assert_eq!(t[2], 2.0 * adj.edge_count() as f64);
        prop_assert_eq!(t[3], 6.0 * adj.triangle_count() as f64);
        let rho = eigenvalues(&adj).unwrap().spectral_radius();
        prop_assert!(rho <= max_degree(&adj) as f64 + 1e-9);
    }

    #[test]
    fn sum_of_scores_is_the_trace(model in model_strategy(), volume in 4.0f64..14.0, a in poly_strategy(5), seed in any::<u64>()) {
        let c = config(2, volume, seed);
        let f = TestFunction::polynomial(a.clone());
        match sum_scores(&c, model, &f) {
            Err(Error::EnumerationGuard { .. }) => {}
            other => {
                let total = other.unwrap();
                let exact = common::dense_poly_trace(&build_graph(&c, model), &a);
                let scale: f64 = common::dense_traces(&build_graph(&c, model), a.len() - 1).iter().zip(&a).map(|(t, q)| (t * q).abs()).sum();
                prop_assert!((total - exact).abs() <= 1e-9 * scale.max(1.0), "{total} vs {exact}");
            }
        }
    }

    #[test]
    fn diagonal_and_enumerated_scores_agree(model in model_strategy(), a in poly_strategy(5), seed in any::<u64>()) {
        let c = config(2, 10.0, seed);
        let f = TestFunction::polynomial(a);
        let adj = build_graph(&c, model);
        for z in 0..c.len() {
            match score_enumerated(z, &c, model, &f) {
                Err(Error::EnumerationGuard { .. }) => {}
                other => {
                    let e = other.unwrap().value;
                    let d = score_diagonal(z, &adj, &f).unwrap().value;
                    prop_assert!((e - d).abs() <= 1e-9 * (1.0 + d.abs()), "{e} vs {d}");
                }
            }
        }
    }

    #[test]
    fn rgg_add_one_cost_is_local_and_bounded(m in 1usize..=4, r in 0.4f64..1.2, seed in any::<u64>(), positive in any::<bool>()) {
        let c = config(2, 80.0, seed);
        let model = GraphModel::Rgg { radius: r };
        let mut rng = stream(seed, 3);
        let x = c.window().uniform_point(&mut rng);
        let f = TestFunction::monomial(m);
        let cost = add_one_cost(&c, model, &f, &x).unwrap();
        let local = add_one_cost(&restrict_to_ball(&c, &x, m as f64 * r), model, &f, &x).unwrap();
        prop_assert_eq!(cost, local);
        // points of the ball counting the inserted one
        let in_ball = c.points().filter(|p| common::d2(p, &x) <= (m as f64 * r).powi(2)).count() + 1;
        prop_assert!(cost.abs() <= (in_ball as f64).powi(m as i32));
        if positive {
            let g = TestFunction::polynomial((0..=m).map(|q| (q % 3) as f64).collect());
            prop_assert!(add_one_cost(&c, model, &g, &x).unwrap() >= 0.0);
        }
    }

    #[test]
    fn neighbors_lie_within_the_first_radius(k in 1usize..3, rng_model in any::<bool>(), seed in any::<u64>()) {
        let c = config(2, 400.0, seed);
        let model = if rng_model { GraphModel::Rng } else { GraphModel::Knn { k } };
        let adj = build_graph(&c, model);
        let mut checked = 0;
        for v in 0..c.len() {
            let Ok(rho) = r1(c.point(v), &c, model) else { continue };
            checked += 1;
            for &u in adj.neighbors(v) {
                prop_assert!(common::d2(c.point(v), c.point(u as usize)) <= (rho * rho) as f64);
            }
            if let GraphModel::Knn { k } = model {
                prop_assert!(r1_knn_window(c.point(v), &c, k).unwrap() <= r1_knn(c.point(v), &c, k).unwrap());
            }
        }
        prop_assert!(checked > c.len() / 2, "{checked} of {}", c.len());
    }

    #[test]
    fn sectors_partition_and_rotate(sectors in 3usize..20, ax in -3.0f64..3.0, ay in -3.0f64..3.0, angle in 0.0f64..std::f64::consts::TAU, dist in 0.01f64..5.0) {
        let fan = SectorFan::new([ax, ay], sectors, 10.0).unwrap();
        let w = fan.width();
        let on_ray = ((angle / w) - (angle / w).round()).abs() < 1e-9;
        prop_assume!(!on_ray);
        let at = |theta: f64| [ax + dist * theta.cos(), ay + dist * theta.sin()];
        let j = fan.sector_of(&at(angle)).unwrap().unwrap();
        prop_assert!((1..=sectors).contains(&j));
        prop_assert_eq!((0..=sectors).filter(|&i| fan.contains(i, &at(angle)).unwrap()).count(), 1);
        let turned = fan.sector_of(&at(angle + w)).unwrap().unwrap();
        prop_assert_eq!(turned, j % sectors + 1);
        prop_assert_eq!(fan.sector_of(&[ax, ay]).unwrap(), None);
    }

    #[test]
    fn walk_counts_decompose_and_obey_the_box_bound(dim in 1usize..=2, r in 0.5f64..1.5, m in 1usize..=6, seed in any::<u64>()) {
        let c = config(dim, 40.0, seed);
        let adj = build_graph(&c, GraphModel::Rgg { radius: r });
        let total = count_walks(&adj, m).unwrap().value;
        let rooted: f64 = (0..c.len()).map(|v| count_walks_at(&adj, v, m, 1).unwrap().value).sum();
        prop_assert_eq!(total, rooted);
        prop_assert_eq!(total, common::walks_by_dfs(&adj, m) as f64);
        prop_assert!(total <= box_bound(&c, r, m).unwrap());
    }
}

#[test]
fn point_counts_are_poisson() {
    let window = Window::new(2, 30.0).unwrap();
    let m = 10_000;
    let counts: Vec<f64> = (0..m).map(|j| sample_poisson(&window, 77, j).len() as f64).collect();
    let mean = counts.iter().sum::<f64>() / m as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    let tol = 4.0 * (30.0 / m as f64).sqrt();
    assert!((mean - 30.0).abs() <= tol, "mean {mean}");
    assert!((var - 30.0).abs() <= 4.0 * tol, "variance {var}");
}

#[test]
fn coordinates_are_uniform() {
    let window = Window::from_half_side(2, 3.0).unwrap();
    let mut xs: Vec<f64> = (0..2000u64).flat_map(|j| sample_poisson(&window, 5, j).coords().to_vec()).step_by(2).take(10_000).collect();
    assert_eq!(xs.len(), 10_000);
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let ks = xs.iter().enumerate().map(|(i, x)| {
        let cdf = (x + 3.0) / 6.0;
        (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
    });
    let d = ks.fold(0.0, f64::max);
    assert!(d < 1.628 / n.sqrt(), "KS distance {d}");
}

#[test]
fn weighted_norm_admissibility() {
    for kind in [SmoothKind::Bump, SmoothKind::XGauss, SmoothKind::SinGauss, SmoothKind::Atan2x, SmoothKind::Rational] {
        let f = TestFunction::smooth(kind);
        if f.vanishes_at_zero() {
            assert!(lc_norm(&f, 1.0).unwrap().is_finite(), "{f}");
        }
    }
    assert!(lc_norm(&TestFunction::smooth(SmoothKind::Exp2Abs), 1.0).is_err());
}

#[test]
fn square_statistic_is_twice_the_edge_count() {
    let model = GraphModel::Rgg { radius: 0.7 };
    let cfg = ExperimentConfig::new(2, model, TestFunction::monomial(2), vec![20.0, 40.0], 100, 13);
    let sets = run_replicates(&cfg).unwrap();
    for (k, set) in sets.iter().enumerate() {
        let window = Window::new(2, set.n).unwrap();
        for (j, &v) in set.values.iter().enumerate() {
            let c = sample_poisson(&window, 13, ((k as u64) << 32) | j as u64);
            assert_eq!(v, 2.0 * build_graph(&c, model).edge_count() as f64);
        }
    }
}
