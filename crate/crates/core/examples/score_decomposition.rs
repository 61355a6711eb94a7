//! Split Tr f(A) into per-vertex scores and look at add-one costs.

use spatial_spectra::graphs::{build_graph, GraphModel};
use spatial_spectra::pointproc::{sample_poisson, Window};
use spatial_spectra::scores::{add_one_cost, diff_first, diff_second, score_enumerated, sum_scores, Functional};
use spatial_spectra::spectral::{trace_poly_walks, TestFunction};

fn main() -> spatial_spectra::Result<()> {
    let model = GraphModel::rgg(1.0)?;
    let config = sample_poisson(&Window::new(2, 30.0)?, 11, 0);
    let f = TestFunction::parse("x^3")?;

    let total = sum_scores(&config, model, &f)?;
    let trace = trace_poly_walks(&build_graph(&config, model), &f)?;
    println!("{} points: sum of scores {total}, Tr A^3 {trace}", config.len());
    for z in 0..3.min(config.len()) {
        println!("  score of point {z}: {}", score_enumerated(z, &config, model, &f)?.value);
    }

    let anchor = config.point(0);
    let x = [anchor[0] + 0.3, anchor[1] - 0.2];
    let y = [anchor[0] - 0.4, anchor[1] + 0.3];
    let far = [5.0, 5.0];
    let stat = Functional::Trace(f.clone());
    println!("add-one cost at x: {}", add_one_cost(&config, model, &f, &x)?);
    println!("D_x Tr f(A) = {}", diff_first(&stat, &config, model, &x)?);
    println!("D_x D_y Tr f(A) = {} for |x - y| = {:.2}", diff_second(&stat, &config, model, &x, &y)?, ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt());
    println!("D_x D_y Tr f(A) = {} for a far y", diff_second(&stat, &config, model, &x, &far)?);
    Ok(())
}
