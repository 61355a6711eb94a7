//! Poincaré check and the second-order error terms at two window sizes.

use spatial_spectra::graphs::GraphModel;
use spatial_spectra::mcclt::{gamma_estimates, poincare_check, ratio_with_se, ExperimentConfig};
use spatial_spectra::spectral::TestFunction;

fn main() -> spatial_spectra::Result<()> {
    let mut cfg = ExperimentConfig::new(1, GraphModel::rgg(0.5)?, TestFunction::monomial(2), vec![64.0, 256.0], 400, 9);
    for row in poincare_check(&cfg, 500)? {
        println!("n = {}: Var {:.2} ± {:.2} <= E|Df|^2 {:.2} ± {:.2}", row.n, row.lhs, row.lhs_se, row.rhs, row.rhs_se);
    }

    cfg.options.probes = 500;
    cfg.options.inner = 32;
    let rows = gamma_estimates(&cfg)?;
    for r in &rows {
        println!("n = {}: gamma1 {:.3e}  gamma2 {:.3e}  gamma3 {:.3e}  bound*sqrt(n) {:.3}", r.n, r.gamma1, r.gamma2, r.gamma3, r.bound_times_sqrt_n);
    }
    let (ratio, se) = ratio_with_se(rows[0].gamma3, rows[0].gamma3_se, rows[1].gamma3, rows[1].gamma3_se);
    println!("gamma3 grows by {ratio:.3} ± {se:.3} when n grows by 4");
    println!("{} far probes, {} nonzero", rows.iter().map(|r| r.beyond_support_probes).sum::<usize>(), rows.iter().map(|r| r.beyond_support_nonzero).sum::<usize>());
    Ok(())
}
