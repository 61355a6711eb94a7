//! Sector, lens and positivity-event checks behind the planar stabilization argument.

use spatial_spectra::stabilization::{lens_angle_check, positivity_event_check, rng_lens_sector_check, PositivityModel};

fn main() -> spatial_spectra::Result<()> {
    let sector = rng_lens_sector_check(5000, 1);
    println!("sector in lens: {} samples, {} outside, {} without a sector", sector.samples, sector.outside_lens, sector.no_fitting_sector);
    println!("  widened sectors leave the lens: {}", sector.negative_control_outside);

    let angle = lens_angle_check(5000, 1);
    println!("lens angles: min {:.5} against 4pi/13 = {:.5}", angle.min_alpha, 4.0 * std::f64::consts::PI / 13.0);

    for model in [PositivityModel::Knn1, PositivityModel::Rng] {
        let rep = positivity_event_check(model, 100, 1)?;
        println!("{model:?} positivity event: {} edge removals in {} trials", rep.edge_removals, rep.trials);
    }
    Ok(())
}
