//! Monte Carlo sampling of the two-species process.
//!
//! Every replica owns a ChaCha stream selected by its index, so estimates
//! depend only on `(seed, replicas)` and never on how replicas are spread
//! over threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::ModelParams;
use crate::dist::InitialConfig;
use crate::error::{Error, Result};

/// Species label of a first-class particle.
pub const FIRST_CLASS: u8 = 2;
/// Species label of the second-class particle.
pub const SECOND_CLASS: u8 = 1;

const CHUNK: u64 = 4096;

/// Positions in increasing order and the species at each position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticleState {
    positions: Vec<i64>,
    species: Vec<u8>,
}

impl ParticleState {
    /// Species word `2⋯21` on `Y`.
    pub fn two_species(y: &InitialConfig) -> Self {
        let mut species = vec![FIRST_CLASS; y.len()];
        *species.last_mut().unwrap() = SECOND_CLASS;
        Self { positions: y.ys().to_vec(), species }
    }

    /// All particles first class.
    pub fn single_species(y: &InitialConfig) -> Self {
        Self { positions: y.ys().to_vec(), species: vec![FIRST_CLASS; y.len()] }
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn species(&self) -> &[u8] {
        &self.species
    }

    /// Position of the second-class particle, if there is one.
    pub fn second_class_position(&self) -> Option<i64> {
        self.species.iter().position(|&s| s == SECOND_CLASS).map(|i| self.positions[i])
    }

    pub fn rightmost(&self) -> i64 {
        *self.positions.last().unwrap()
    }

    /// Particle `i` tries one step in direction `dir` (±1): it moves onto an
    /// empty site, exchanges with a lower species, and is blocked otherwise.
    pub fn attempt(&mut self, i: usize, dir: i64) {
        let target = self.positions[i] + dir;
        let nb = if dir > 0 { i + 1 } else { i.wrapping_sub(1) };
        if nb < self.positions.len() && self.positions[nb] == target {
            if self.species[i] > self.species[nb] {
                self.species.swap(i, nb);
            }
        } else {
            self.positions[i] = target;
        }
        debug_assert!(self.positions.windows(2).all(|w| w[0] < w[1]));
    }

    /// Runs the dynamics for time `t`.
    pub fn evolve<R: Rng>(&mut self, params: &ModelParams, t: f64, rng: &mut R) {
        let n = self.positions.len();
        let clock = Exp::new(n as f64).expect("positive rate");
        let mut now = clock.sample(rng);
        while now <= t {
            let i = rng.random_range(0..n);
            let dir = if rng.random::<f64>() < params.p() { 1 } else { -1 };
            self.attempt(i, dir);
            now += clock.sample(rng);
        }
    }
}

/// The stream used by replica `index`.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One sample of the second-class particle's position at time `t`.
pub fn simulate_once<R: Rng>(params: &ModelParams, y: &InitialConfig, t: f64, rng: &mut R) -> i64 {
    let mut s = ParticleState::two_species(y);
    s.evolve(params, t, rng);
    s.second_class_position().expect("the second-class particle is conserved")
}

/// One sample of the rightmost particle's position in the single-species
/// process.
pub fn simulate_rightmost_once<R: Rng>(params: &ModelParams, y: &InitialConfig, t: f64, rng: &mut R) -> i64 {
    let mut s = ParticleState::single_species(y);
    s.evolve(params, t, rng);
    s.rightmost()
}

/// One row of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub x: i64,
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: u64,
}

/// Empirical law from independent replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub seed: u64,
    pub replicas: u64,
    pub counts: BTreeMap<i64, u64>,
}

impl MCEstimate {
    pub fn from_counts(seed: u64, replicas: u64, counts: BTreeMap<i64, u64>) -> Self {
        Self { seed, replicas, counts }
    }

    pub fn estimate(&self, x: i64) -> f64 {
        self.count(x) as f64 / self.replicas as f64
    }

    pub fn count(&self, x: i64) -> u64 {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    /// `√(p̂(1 − p̂)/R)`.
    pub fn stderr(&self, x: i64) -> f64 {
        let p = self.estimate(x);
        (p * (1.0 - p) / self.replicas as f64).sqrt()
    }

    pub fn support(&self) -> Option<(i64, i64)> {
        Some((*self.counts.keys().next()?, *self.counts.keys().next_back()?))
    }

    /// Rows over `[lo, hi]`, including empty sites.
    pub fn rows(&self, lo: i64, hi: i64) -> Vec<McRow> {
        (lo..=hi)
            .map(|x| McRow { x, estimate: self.estimate(x), stderr: self.stderr(x), replicas: self.replicas })
            .collect()
    }

    /// Rows over the observed support.
    pub fn observed_rows(&self) -> Vec<McRow> {
        match self.support() {
            Some((lo, hi)) => self.rows(lo, hi),
            None => Vec::new(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.counts.iter().map(|(&x, &c)| x as f64 * c as f64).sum::<f64>() / self.replicas as f64
    }
}

fn estimate_with<F>(replicas: u64, seed: u64, t: f64, sample: F) -> Result<MCEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> i64 + Sync,
{
    if replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be >= 1".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be finite and >= 0, got {t}")));
    }
    let chunks = replicas.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = BTreeMap::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(replicas) {
                let mut rng = replica_rng(seed, i);
                *local.entry(sample(&mut rng)).or_insert(0u64) += 1;
            }
            local
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (x, c) in b {
                *a.entry(x).or_insert(0) += c;
            }
            a
        });
    Ok(MCEstimate::from_counts(seed, replicas, counts))
}

/// Empirical law of the second-class particle at time `t`.
pub fn estimate_pmf(params: &ModelParams, y: &InitialConfig, t: f64, replicas: u64, seed: u64) -> Result<MCEstimate> {
    estimate_with(replicas, seed, t, |rng| simulate_once(params, y, t, rng))
}

/// Empirical law of the rightmost particle in the single-species process.
pub fn estimate_rightmost_pmf(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    replicas: u64,
    seed: u64,
) -> Result<MCEstimate> {
    estimate_with(replicas, seed, t, |rng| simulate_rightmost_once(params, y, t, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mp(p: f64) -> ModelParams {
        ModelParams::new(p).unwrap()
    }

    #[test]
    fn exchange_and_blocking() {
        let y = InitialConfig::new(vec![0, 1, 3]).unwrap();
        let mut s = ParticleState::two_species(&y);
        // second class cannot push a first-class particle
        s.attempt(2, -1);
        assert_eq!(s.positions(), &[0, 1, 2]);
        s.attempt(2, -1);
        assert_eq!(s.positions(), &[0, 1, 2]);
        assert_eq!(s.second_class_position(), Some(2));
        // first class jumps onto it and they trade places
        s.attempt(1, 1);
        assert_eq!(s.positions(), &[0, 1, 2]);
        assert_eq!(s.species(), &[2, 1, 2]);
        assert_eq!(s.second_class_position(), Some(1));
        // equal species block each other
        s.attempt(0, 1);
        assert_eq!(s.species(), &[1, 2, 2]);
        s.attempt(1, 1);
        assert_eq!(s.positions(), &[0, 1, 2]);
    }

    #[test]
    fn time_zero_stays_put() {
        let y = InitialConfig::step(3);
        let e = estimate_pmf(&mp(0.7), &y, 0.0, 100, 5).unwrap();
        assert_eq!(e.count(0), 100);
    }

    #[test]
    fn one_replica_is_an_atom() {
        let e = estimate_pmf(&mp(0.7), &InitialConfig::step(2), 1.0, 1, 9).unwrap();
        assert_eq!(e.counts.len(), 1);
        assert_eq!(e.counts.values().sum::<u64>(), 1);
    }

    #[test]
    fn estimates_are_reproducible() {
        let y = InitialConfig::step(3);
        let a = estimate_pmf(&mp(0.7), &y, 1.0, 10_000, 42).unwrap();
        let b = estimate_pmf(&mp(0.7), &y, 1.0, 10_000, 42).unwrap();
        assert_eq!(a, b);
        let c = estimate_pmf(&mp(0.7), &y, 1.0, 10_000, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.counts.values().sum::<u64>(), 10_000);
    }

    #[test]
    fn merge_does_not_depend_on_thread_count() {
        let y = InitialConfig::step(2);
        let a = estimate_pmf(&mp(0.6), &y, 1.0, 20_000, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| estimate_pmf(&mp(0.6), &y, 1.0, 20_000, 3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn single_particle_drift() {
        let y = InitialConfig::new(vec![0]).unwrap();
        let e = estimate_pmf(&mp(0.7), &y, 2.0, 200_000, 11).unwrap();
        // mean (p − q)t, variance t
        let se = (2.0f64 / 200_000.0).sqrt();
        assert!((e.mean() - 0.8).abs() < 4.0 * se, "{}", e.mean());
    }

    #[test]
    fn stderr_is_binomial() {
        let mut counts = BTreeMap::new();
        counts.insert(0, 25);
        counts.insert(1, 75);
        let e = MCEstimate::from_counts(0, 100, counts);
        assert!((e.stderr(0) - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.rows(-1, 1).len(), 3);
        assert_eq!(e.support(), Some((0, 1)));
    }
}
