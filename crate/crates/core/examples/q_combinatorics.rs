//! q-deformed binomials and the subset coefficients of the second-class law.

use second_class::algebra::ModelParams;
use second_class::qcomb::{coefficient_c_s, q_binomial, SubsetIndex};

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    for n in 0..=5 {
        let row: Vec<String> = (0..=n).map(|k| format!("{:.4}", q_binomial(&params, n, k))).collect();
        println!("n = {n}: {}", row.join(" "));
    }
    let n = 4;
    for s in SubsetIndex::all_nonempty(n) {
        println!("S = {:?}: c_S = {:+.6}", s.members(), coefficient_c_s(&params, n, &s));
    }
    Ok(())
}
