//! Closed-walk counts against the box and expectation bounds.

use spatial_spectra::paths::bounds_table;

fn main() -> spatial_spectra::Result<()> {
    for d in [1, 2] {
        println!("d = {d}");
        println!("{:>3} {:>14} {:>10} {:>14} {:>8}", "m", "mean L_m", "se", "bound", "ratio");
        for row in bounds_table(d, 1.0, 128.0, 5, 300, 2)? {
            println!("{:>3} {:>14.2} {:>10.2} {:>14.2} {:>8.4}", row.m, row.empirical_mean, row.std_error, row.bound, row.ratio);
        }
    }
    Ok(())
}
