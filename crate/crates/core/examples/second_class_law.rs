//! Law of the second-class particle behind two first-class particles.
//!
//! cargo run --release --example second_class_law

use second_class::algebra::ModelParams;
use second_class::dist::{second_class_table, second_class_window, InitialConfig};
use second_class::quadrature::ContourSettings;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    let y = InitialConfig::new(vec![-2, -1, 0])?;
    let t = 1.0;
    let (lo, hi) = second_class_window(&y, t, 1e-10);
    let table = second_class_table(&params, &y, t, lo, hi, &ContourSettings::default())?;

    println!("{:>4}  {:>22}  {:>10}", "x", "P(second class at x)", "half-grid");
    for row in &table.rows {
        println!("{:>4}  {:>22.15e}  {:>10.1e}", row.x, row.probability, row.quad_error);
    }
    let mean: f64 = table.rows.iter().map(|r| r.x as f64 * r.probability).sum();
    println!("total {:.15}  mean {:.6}", table.total(), mean);
    Ok(())
}
