#![allow(dead_code)]

use std::io::Write;

use second_class::algebra::ModelParams;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mp(p: f64) -> ModelParams {
    ModelParams::new(p).unwrap()
}

/// `I_ν(z)` from its power series, `ν ≥ 0`.
pub fn bessel_i(nu: u32, z: f64) -> f64 {
    let mut term = (z / 2.0).powi(nu as i32) / (1..=nu).map(f64::from).product::<f64>();
    let mut sum = term;
    for k in 1..300 {
        term *= (z / 2.0).powi(2) / (k as f64 * (k + nu) as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

/// Law of a continuous-time symmetric walk at `t` with unit jump rate:
/// `e^{−t} I_{|d|}(t)`.
pub fn symmetric_walk(d: i64, t: f64) -> f64 {
    (-t).exp() * bessel_i(d.unsigned_abs() as u32, t)
}

/// Pearson χ² of observed counts against expected probabilities, merging
/// neighbouring bins until each expected count reaches 5. Returns
/// `(statistic, degrees of freedom, p-value)`.
pub fn chi_square(counts: &[u64], probs: &[f64], replicas: u64) -> (f64, usize, f64) {
    let r = replicas as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p.max(0.0) * r;
        if e >= 5.0 {
            bins.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    // leftover mass, plus whatever lies outside the window, joins the last bin
    let outside_o = r - counts.iter().map(|&c| c as f64).sum::<f64>();
    let outside_e = r - probs.iter().map(|p| p.max(0.0) * r).sum::<f64>();
    if let Some(last) = bins.last_mut() {
        last.0 += o + outside_o;
        last.1 += e + outside_e.max(0.0);
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = bins.len() - 1;
    let pval = 1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat);
    (stat, df, pval)
}

/// Writes one line straight to the process stdout, bypassing the test
/// harness capture.
pub fn report(line: &str) {
    let out = std::io::stdout();
    let mut lock = out.lock();
    let _ = writeln!(lock, "{line}");
    let _ = lock.flush();
}

pub fn verdict(criterion: u32, title: &str, passed: bool, detail: &str) {
    report(&format!("criterion {criterion} {}: {title} ({detail})", if passed { "PASS" } else { "FAIL" }));
}
