//! Per-slot terms of the three-particle law. Each column mixes the + and −
//! amplitude components, so single entries can be negative; the columns add
//! up to the law.

use second_class::algebra::ModelParams;
use second_class::dist::{second_class_table, slot_decomposition_table, InitialConfig};
use second_class::quadrature::ContourSettings;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    let y = InitialConfig::step(3);
    let (t, lo, hi) = (0.7, -5, 4);
    let slots = slot_decomposition_table(&params, &y, t, lo, hi, &ContourSettings::default())?;
    let law = second_class_table(&params, &y, t, lo, hi, &ContourSettings::default())?;
    println!("{:>3} {:>12} {:>12} {:>12} {:>12}", "x", "slot 1", "slot 2", "slot 3", "law");
    for (k, row) in law.rows.iter().enumerate() {
        println!(
            "{:>3} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            row.x, slots[0][k].value.re, slots[1][k].value.re, slots[2][k].value.re, row.probability
        );
    }
    Ok(())
}
