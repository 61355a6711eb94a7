//! Variance of Tr f(A) e^{A} normalized by the Sobolev norms of f.

use spatial_spectra::graphs::GraphModel;
use spatial_spectra::mcclt::{weighted_variance_check, ExperimentConfig};
use spatial_spectra::spectral::{SmoothKind, TestFunction};

fn main() -> spatial_spectra::Result<()> {
    let base = ExperimentConfig::new(1, GraphModel::rgg(0.5)?, TestFunction::zero(), vec![64.0, 256.0], 200, 10);
    let functions = [SmoothKind::Bump, SmoothKind::XGauss, SmoothKind::SinGauss].map(TestFunction::smooth);
    let report = weighted_variance_check(&base, &functions, 1.0)?;
    for row in &report.rows {
        println!("{:<10} n = {:>5}: Var/n {:.4e} ± {:.1e}, ratio {:.4e}", row.function, row.n, row.var_over_n, row.se, row.ratio);
    }
    for s in &report.summaries {
        println!("{}: growth {}", s.function, s.growth);
    }
    Ok(())
}
