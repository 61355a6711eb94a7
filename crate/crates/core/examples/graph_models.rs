//! Build the three graph models on one configuration and check the trace identities.

use spatial_spectra::graphs::{build_graph, max_degree, GraphModel};
use spatial_spectra::pointproc::{sample_poisson, Window};
use spatial_spectra::spectral::{closed_walk_traces, eigenvalues};

fn main() -> spatial_spectra::Result<()> {
    let config = sample_poisson(&Window::new(2, 300.0)?, 7, 0);
    println!("{} points", config.len());
    for model in [GraphModel::rgg(1.0)?, GraphModel::knn(2)?, GraphModel::Rng] {
        let adj = build_graph(&config, model);
        let t = closed_walk_traces(&adj, 3)?;
        let spectrum = eigenvalues(&adj)?;
        println!(
            "{:<10} edges {:>4}  triangles {:>4}  components {:>3}  max degree {}",
            model.name(),
            adj.edge_count(),
            adj.triangle_count(),
            adj.components().len(),
            max_degree(&adj)
        );
        println!("           Tr A = {}, Tr A^2 = {} (2|E| = {}), Tr A^3 = {} (6T = {})", t[1], t[2], 2 * adj.edge_count(), t[3], 6 * adj.triangle_count());
        println!("           spectral radius {:.4}", spectrum.spectral_radius());
    }
    Ok(())
}
