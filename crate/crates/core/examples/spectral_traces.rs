//! Linear eigenvalue statistics by walks, by the spectrum and with an exponential weight.

use spatial_spectra::graphs::{build_graph, GraphModel};
use spatial_spectra::pointproc::{sample_poisson, Window};
use spatial_spectra::spectral::{eigenvalues, lc_norm, sobolev_norms, trace_function, trace_poly_walks, trace_weighted, SmoothKind, TestFunction};

fn main() -> spatial_spectra::Result<()> {
    let config = sample_poisson(&Window::new(2, 200.0)?, 3, 0);
    let adj = build_graph(&config, GraphModel::rgg(1.0)?);

    let f = TestFunction::parse("poly:1,-2,0.5,0,0.25")?;
    let walks = trace_poly_walks(&adj, &f)?;
    let spectral = eigenvalues(&adj)?.trace_of(&f);
    println!("Tr f(A) for f = {f}: walks {walks:.6}, spectrum {spectral:.6}");

    for kind in [SmoothKind::Bump, SmoothKind::Gauss, SmoothKind::XGauss, SmoothKind::SinGauss] {
        let g = TestFunction::smooth(kind);
        let (l2, second) = sobolev_norms(&g)?;
        println!("{:<10} Tr g(A) {:>10.4}  ||g||^2 {l2:.4}  ||g''||^2 {second:.4}", g.to_string(), trace_function(&adj, &g)?);
        // the exponential weight is only defined for g(0) = 0
        if g.vanishes_at_zero() {
            println!("{:<10} Tr g(A) e^A {:>10.4}  weighted norm {:.4}", "", trace_weighted(&adj, &g, 1.0)?, lc_norm(&g, 1.0)?);
        }
    }
    Ok(())
}
