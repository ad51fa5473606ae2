//! Monte Carlo estimate of the second-class law. Results depend only on the
//! seed and the replica count.

use second_class::algebra::ModelParams;
use second_class::dist::InitialConfig;
use second_class::sim::estimate_pmf;

fn main() -> second_class::Result<()> {
    let params = ModelParams::new(0.7)?;
    let y = InitialConfig::step(5);
    let est = estimate_pmf(&params, &y, 2.0, 200_000, 7)?;
    println!("mean position {:.4}", est.mean());
    for r in est.observed_rows() {
        println!("{:>3} {:.6} ± {:.6}", r.x, r.estimate, r.stderr);
    }
    Ok(())
}
