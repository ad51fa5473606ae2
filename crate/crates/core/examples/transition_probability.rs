//! Individual transition probabilities P_Y(X, ν_n; t) for two particles,
//! including which particle ends up carrying the second-class label.

use second_class::algebra::ModelParams;
use second_class::dist::{InitialConfig, TargetConfig, TransitionKernel};
use second_class::quadrature::ContourSettings;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    let y = InitialConfig::new(vec![-1, 0])?;
    let t = 0.8;
    // one kernel per final slot; each evaluates any X cheaply
    let kernels = [
        TransitionKernel::new(&params, &y, 1, t, &ContourSettings::default())?,
        TransitionKernel::new(&params, &y, 2, t, &ContourSettings::default())?,
    ];
    let mut total = 0.0;
    for x1 in -8..=6 {
        for x2 in (x1 + 1)..=7 {
            let x = TargetConfig::new(vec![x1, x2])?;
            for k in &kernels {
                total += k.eval(&x)?.value.re;
            }
        }
    }
    for (xs, n) in [(vec![-1, 0], 2), (vec![-1, 0], 1), (vec![0, 1], 2), (vec![-2, 1], 1)] {
        let p = kernels[n - 1].eval(&TargetConfig::new(xs.clone())?)?;
        println!("X = {xs:?}, second class in slot {n}: {:.15e}", p.value.re);
    }
    println!("sum over a 15-site window: {total:.12}");
    Ok(())
}
