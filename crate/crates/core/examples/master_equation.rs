//! Exact evolution of the finite two-species chain by uniformization.

use second_class::algebra::ModelParams;
use second_class::dist::InitialConfig;
use second_class::oracle::{evolve, second_class_marginal, Species};

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.6)?;
    let y = InitialConfig::step(3);
    let ev = evolve(&params, &y, 1.0, 1e-12, Species::TwoSpecies)?;
    println!(
        "{} states on {:?}, {} terms, escaped {:.1e}, total {:.15}",
        ev.space.len(),
        ev.space.window(),
        ev.truncation_order,
        ev.escaped,
        ev.total()
    );
    for row in second_class_marginal(&ev).rows.iter().filter(|r| r.probability > 1e-6) {
        println!("{:>3} {:.15e}", row.x, row.probability);
    }
    Ok(())
}
