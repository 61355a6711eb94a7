//! Monte Carlo CLT report for Tr A^2 on a one-dimensional geometric graph.

use spatial_spectra::graphs::GraphModel;
use spatial_spectra::mcclt::{clt_report, rgg_square_variance_1d, ExperimentConfig};
use spatial_spectra::spectral::TestFunction;

fn main() -> spatial_spectra::Result<()> {
    let cfg = ExperimentConfig::new(1, GraphModel::rgg(0.5)?, TestFunction::monomial(2), vec![64.0, 256.0, 1024.0], 400, 1);
    let (report, _samples) = clt_report(&cfg)?;
    println!("{:>6} {:>10} {:>8} {:>8} {:>8}", "n", "Var/n", "se", "KS p", "W1");
    for row in &report.rows {
        println!(
            "{:>6} {:>10.4} {:>8.4} {:>8.3} {:>8.4}",
            row.n,
            row.var_over_n,
            row.var_se,
            row.ks_p_value.unwrap_or(f64::NAN),
            row.w_hat.unwrap_or(f64::NAN)
        );
    }
    println!("sigma^2 = {:.4} ± {:.4}, exact at n = 1024: {:.4}", report.sigma2, report.sigma2_se, rgg_square_variance_1d(1024.0, 0.5)? / 1024.0);
    if let Some(rate) = report.rate {
        println!("log-log slope of W1 in n: {:.3} [{:.3}, {:.3}]", rate.slope, rate.ci_low, rate.ci_high);
    }
    Ok(())
}
