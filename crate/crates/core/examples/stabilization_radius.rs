//! Stabilization radii and exterior resampling for the three models.

use spatial_spectra::graphs::GraphModel;
use spatial_spectra::stabilization::{rgg_chain_witness, stabilization_suite, RadiusFloor};

fn main() -> spatial_spectra::Result<()> {
    for m in 1..=3 {
        let rep = stabilization_suite(GraphModel::rgg(1.0)?, 2, m, RadiusFloor::Standard, 100, 5)?;
        println!("rgg m={m}: R = {}, {} changes in {} resamplings", rep.radius.value, rep.check.violations, rep.check.trials);
    }
    let witness = rgg_chain_witness(2, 1.0, 4, 1.0)?;
    println!("undersized radius on a chain: cost {} without the exterior, {} with it", witness.cost_interior, witness.cost_with_exterior);

    // smaller floor so the example runs in seconds
    let floor = RadiusFloor::Scaled { beta: 10.0 };
    for model in [GraphModel::knn(1)?, GraphModel::Rng] {
        let rep = stabilization_suite(model, 2, 1, floor, 20, 5)?;
        println!(
            "{} m=1: R = {} over {} points, {} changes in {} resamplings",
            model.name(),
            rep.radius.value,
            rep.check.interior_points,
            rep.check.violations,
            rep.check.trials
        );
    }
    Ok(())
}
