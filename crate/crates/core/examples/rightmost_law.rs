//! Law of the rightmost particle when every particle is first class, from the
//! closed subset formula and from summing transition probabilities.

use second_class::algebra::ModelParams;
use second_class::dist::{rightmost_configuration_check, InitialConfig};
use second_class::quadrature::ContourSettings;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    let check =
        rightmost_configuration_check(&params, &InitialConfig::step(2), 0.5, 1e-9, &ContourSettings::default())?;
    for (i, (a, b)) in check.lhs.iter().zip(&check.rhs).enumerate() {
        println!("{:>3} {:.15e} {:.15e}", check.x_lo + i as i64, a, b);
    }
    println!("max |difference| {:.2e}, truncation tail {:.2e}", check.max_abs_diff, check.truncation_tail);
    Ok(())
}
