//! Runs the algebraic identity suite and the amplitude structure checks at
//! random spectral points.

use second_class::algebra::{verify_structure, ModelParams};
use second_class::qcomb::verify_identities;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.65)?;
    let ids = verify_identities(&params, 6, 50, 2024)?;
    let st = verify_structure(&params, 20, 2024)?;
    for c in ids.checks.iter().chain(&st.checks) {
        println!("{:<45} {:>9.2e} {}", c.name, c.max_rel_error, if c.passed { "ok" } else { "FAILED" });
    }
    println!("all passed: {}", ids.all_passed() && st.all_passed());
    Ok(())
}
