//! Two-species Bethe amplitudes from reduced words, and the three-particle
//! table they reproduce.

use num_complex::Complex64;
use second_class::algebra::{reduced_word, sector_column, table_one_entry, ModelParams, Permutation};

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    let xi = [Complex64::from_polar(0.3, 0.4), Complex64::from_polar(0.2, 2.1), Complex64::from_polar(0.25, -1.3)];
    for sigma in Permutation::all(3) {
        let word = reduced_word(&sigma);
        let col = sector_column(&params, &word, &xi)?;
        for n in 1..=3 {
            let table = table_one_entry(&params, &sigma, &xi, n)?;
            println!("σ = {:?} n = {n}: {:>24.12} (table {:.12})", sigma.images(), col.get(n), table);
        }
    }
    Ok(())
}
