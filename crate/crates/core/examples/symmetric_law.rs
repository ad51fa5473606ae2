//! At p = 1/2 the second-class particle moves like a lone symmetric walker,
//! whatever is in front of it.

use second_class::algebra::ModelParams;
use second_class::dist::{second_class_table, symmetric_table, InitialConfig};
use second_class::quadrature::ContourSettings;

fn main() -> second_class::Result<()> {
    let t = 1.5;
    let walker = symmetric_table(0, t, -6, 6, &ContourSettings::default())?;
    for n in 1..=4 {
        let y = InitialConfig::step(n);
        let law = second_class_table(&ModelParams::new(0.5)?, &y, t, -6, 6, &ContourSettings::default())?;
        let worst =
            law.rows.iter().zip(&walker.rows).map(|(a, b)| (a.probability - b.probability).abs()).fold(0.0, f64::max);
        println!("N = {n}: max |difference from the walker| = {worst:.2e}");
    }
    for r in &walker.rows {
        println!("{:>3} {:.12}", r.x, r.probability);
    }
    Ok(())
}
