//! Master-equation solver on a finite window, by uniformization.
//!
//! Mass that would leave the window is collected in a sink and reported; if
//! it exceeds the tolerance the solve fails instead of silently reflecting.

use std::collections::HashMap;

use serde::Serialize;

use crate::algebra::ModelParams;
use crate::dist::{poisson_window, DistRow, DistributionTable, InitialConfig, TargetConfig};
use crate::error::{Error, Result};

/// Whether the rightmost particle of the initial block is second class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Species {
    /// First-class particles plus one second-class particle.
    TwoSpecies,
    /// All particles first class.
    SingleSpecies,
}

/// States `(X, ν_k)` with `X` inside `[a, b]`. In single-species mode the
/// slot is always `0`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    a: i64,
    b: i64,
    n: usize,
    species: Species,
    states: Vec<(Vec<i64>, usize)>,
    index: HashMap<(Vec<i64>, usize), usize>,
}

impl StateSpace {
    pub fn new(a: i64, b: i64, n: usize, species: Species) -> Result<Self> {
        if n == 0 || b < a || ((b - a + 1) as usize) < n {
            return Err(Error::InvalidParameter(format!("window [{a}, {b}] cannot hold {n} particles")));
        }
        let slots: Vec<usize> = match species {
            Species::TwoSpecies => (1..=n).collect(),
            Species::SingleSpecies => vec![0],
        };
        let mut states = Vec::new();
        let mut xs: Vec<i64> = (a..a + n as i64).collect();
        loop {
            for &k in &slots {
                states.push((xs.clone(), k));
            }
            // next combination in lexicographic order
            let mut i = n;
            loop {
                if i == 0 {
                    let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
                    return Ok(Self { a, b, n, species, states, index });
                }
                i -= 1;
                if xs[i] < b - (n - 1 - i) as i64 {
                    xs[i] += 1;
                    for j in i + 1..n {
                        xs[j] = xs[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    pub fn window(&self) -> (i64, i64) {
        (self.a, self.b)
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn species(&self) -> Species {
        self.species
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> (&[i64], usize) {
        (&self.states[i].0, self.states[i].1)
    }

    pub fn index_of(&self, xs: &[i64], slot: usize) -> Option<usize> {
        self.index.get(&(xs.to_vec(), slot)).copied()
    }
}

/// Sparse generator. Each row lists its off-diagonal targets; the rate of
/// leaving the window is kept separately.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
    diag: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn new(params: &ModelParams, space: &StateSpace) -> Self {
        let (p, q) = (params.p(), params.q());
        let n = space.n;
        let mut rows = Vec::with_capacity(space.len());
        let mut exit = Vec::with_capacity(space.len());
        for (xs, slot) in &space.states {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut out = 0.0;
            for i in 0..n {
                for (dir, rate) in [(1i64, p), (-1i64, q)] {
                    let target = xs[i] + dir;
                    if target < space.a || target > space.b {
                        out += rate;
                        continue;
                    }
                    let nb = if dir == 1 { i + 1 } else { i.wrapping_sub(1) };
                    let occupied = nb < n && xs[nb] == target;
                    let next = if !occupied {
                        let mut ys = xs.clone();
                        ys[i] = target;
                        Some((ys, *slot))
                    } else if space.species == Species::TwoSpecies && nb + 1 == *slot && i + 1 != *slot {
                        // first class onto the second-class particle: swap
                        Some((xs.clone(), i + 1))
                    } else {
                        None
                    };
                    if let Some(s) = next {
                        let j = space.index[&s];
                        match row.iter_mut().find(|e| e.0 == j) {
                            Some(e) => e.1 += rate,
                            None => row.push((j, rate)),
                        }
                    }
                }
            }
            rows.push(row);
            exit.push(out);
        }
        let diag = rows.iter().zip(&exit).map(|(r, e)| -(r.iter().map(|x| x.1).sum::<f64>() + e)).collect();
        Self { rows, exit, diag }
    }

    pub fn off_diagonal(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Row sum including the exit rate; zero up to rounding.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.diag[i] + self.exit[i] + self.rows[i].iter().map(|x| x.1).sum::<f64>()
    }

    /// `v ↦ v(I + Q/Λ)`; returns the mass sent out of the window.
    fn step(&self, v: &[f64], out: &mut [f64], lambda: f64) -> f64 {
        for (o, (x, d)) in out.iter_mut().zip(v.iter().zip(&self.diag)) {
            *o = x * (1.0 + d / lambda);
        }
        let mut escaped = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let x = v[i];
            if x == 0.0 {
                continue;
            }
            for &(j, r) in row {
                out[j] += x * r / lambda;
            }
            escaped += x * self.exit[i] / lambda;
        }
        escaped
    }
}

/// Probability vector at time `t` with bookkeeping.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub space: StateSpace,
    pub probabilities: Vec<f64>,
    /// Number of uniformization terms summed.
    pub truncation_order: usize,
    /// Mass that reached outside the window.
    pub escaped: f64,
    /// Poisson weight not summed.
    pub series_tail: f64,
}

impl Evolution {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn probability(&self, x: &TargetConfig, slot: usize) -> Option<f64> {
        self.space.index_of(x.xs(), slot).map(|i| self.probabilities[i])
    }
}

/// Evolves the point mass at `(Y, ν_N)` (or `Y` in single-species mode) on
/// the Poisson window for `eps`.
pub fn evolve(params: &ModelParams, y: &InitialConfig, t: f64, eps: f64, species: Species) -> Result<Evolution> {
    let (a, b) = poisson_window(y, t, eps);
    evolve_on(params, y, t, eps, species, a, b)
}

/// [`evolve`] on an explicit window `[a, b]`.
pub fn evolve_on(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    eps: f64,
    species: Species,
    a: i64,
    b: i64,
) -> Result<Evolution> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be finite and >= 0, got {t}")));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    let n = y.len();
    if y.first() < a || y.last() > b {
        return Err(Error::InvalidConfig("Y lies outside the window".into()));
    }
    let space = StateSpace::new(a, b, n, species)?;
    let gen = GeneratorMatrix::new(params, &space);
    let slot = match species {
        Species::TwoSpecies => n,
        Species::SingleSpecies => 0,
    };
    let mut v = vec![0.0; space.len()];
    v[space.index_of(y.ys(), slot).expect("initial state is in the window")] = 1.0;
    let lambda = n as f64;
    let lt = lambda * t;
    let mut acc = vec![0.0; space.len()];
    let mut next = vec![0.0; space.len()];
    // Poisson weights by recursion in log space
    let mut log_w = -lt;
    let mut summed = 0.0;
    let mut escaped_v = 0.0;
    let mut escaped = 0.0;
    let mut k = 0usize;
    loop {
        let w = log_w.exp();
        for (s, x) in acc.iter_mut().zip(&v) {
            *s += w * x;
        }
        escaped += w * escaped_v;
        summed += w;
        let tail = (1.0 - summed).max(0.0);
        if lt == 0.0 || (k as f64 > lt && tail < eps * 1e-3) {
            break;
        }
        escaped_v += gen.step(&v, &mut next, lambda);
        std::mem::swap(&mut v, &mut next);
        k += 1;
        log_w += lt.ln() - (k as f64).ln();
    }
    let series_tail = (1.0 - summed).max(0.0);
    if escaped > eps {
        return Err(Error::WindowTooSmall { escaped, budget: eps });
    }
    Ok(Evolution { space, probabilities: acc, truncation_order: k, escaped, series_tail })
}

/// Law of the second-class particle: the state vector summed by the position
/// of the species-1 particle.
pub fn second_class_marginal(ev: &Evolution) -> DistributionTable {
    marginal(ev, |xs, slot| xs[slot - 1])
}

/// Law of the rightmost particle.
pub fn rightmost_marginal(ev: &Evolution) -> DistributionTable {
    marginal(ev, |xs, _| *xs.last().unwrap())
}

fn marginal(ev: &Evolution, pick: impl Fn(&[i64], usize) -> i64) -> DistributionTable {
    let (a, b) = ev.space.window();
    let mut probs = vec![0.0; (b - a + 1) as usize];
    for (i, p) in ev.probabilities.iter().enumerate() {
        let (xs, slot) = ev.space.state(i);
        if ev.space.species() == Species::SingleSpecies || slot > 0 {
            probs[(pick(xs, slot) - a) as usize] += p;
        }
    }
    let rows = probs
        .into_iter()
        .enumerate()
        .map(|(i, p)| DistRow { x: a + i as i64, probability: p, quad_error: 0.0, imag_residual: 0.0 })
        .collect();
    DistributionTable::from_rows(rows, Vec::new())
}
