//! The three-particle law as seven explicit integrals, against the subset
//! form.

use second_class::algebra::ModelParams;
use second_class::dist::{n3_expanded_pmf, second_class_pmf, InitialConfig};
use second_class::quadrature::ContourSettings;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.8)?;
    let y = InitialConfig::new(vec![-3, -1, 0])?;
    let settings = ContourSettings::new(None, Some(48));
    for x in -2..=2 {
        let a = second_class_pmf(&params, &y, 0.6, x, &settings)?;
        let b = n3_expanded_pmf(&params, &y, 0.6, x, &settings)?;
        println!("{x:>3} {:.15e} {:.15e} {:.1e}", a.value.re, b.value.re, (a.value - b.value).norm());
    }
    Ok(())
}
