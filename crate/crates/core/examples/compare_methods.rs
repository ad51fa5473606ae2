//! Contour formula, master equation and Monte Carlo side by side.

use second_class::algebra::ModelParams;
use second_class::dist::{second_class_table, InitialConfig};
use second_class::oracle::{evolve, second_class_marginal, Species};
use second_class::quadrature::ContourSettings;
use second_class::sim::estimate_pmf;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    let y = InitialConfig::step(3);
    let t = 1.0;
    let formula = second_class_table(&params, &y, t, -6, 5, &ContourSettings::default())?;
    let exact = second_class_marginal(&evolve(&params, &y, t, 1e-12, Species::TwoSpecies)?);
    let replicas = 400_000;
    let mc = estimate_pmf(&params, &y, t, replicas, 1)?;

    println!("{:>3} {:>18} {:>10} {:>10} {:>7}", "x", "formula", "f - exact", "mc", "z");
    for r in &formula.rows {
        let f = r.probability;
        let z = (mc.estimate(r.x) - f) / (f * (1.0 - f) / replicas as f64).sqrt();
        println!(
            "{:>3} {:>18.12e} {:>10.1e} {:>10.6} {:>7.2}",
            r.x,
            f,
            f - exact.get(r.x).unwrap_or(0.0),
            mc.estimate(r.x),
            z
        );
    }
    Ok(())
}
