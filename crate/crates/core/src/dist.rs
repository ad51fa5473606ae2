//! Probability formulas: transition probabilities, the law of the
//! second-class particle and its relatives.
//!
//! Everything here is computed relative to `y_N`, the initial position of the
//! second-class particle, so shifting the initial configuration shifts the
//! tables without changing a single bit.

use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    amplitude_single_species, component_amplitude_n3, factor_t, reduced_word, sector_column, ModelParams, Permutation,
    Sign,
};
use crate::error::{Error, Result};
use crate::prec::{to_c64, Cdd, Dd, Real};
use crate::qcomb::{coefficient_c_s_t, coefficient_c_tilde_t, coefficient_rightmost_t, SubsetIndex};
use crate::quadrature::{ClassSums, Contour, ContourSettings, QuadratureResult};

/// Largest particle number handled by the subset formulas.
pub const MAX_PARTICLES: usize = 5;
/// Largest time inside the documented accuracy envelope.
pub const ENVELOPE_T: f64 = 5.0;
/// Largest `|x − y_i|` inside the documented accuracy envelope.
pub const ENVELOPE_DISTANCE: i64 = 30;
/// Node count for configuration sums over `k` variables when none is given.
/// These integrands carry a full permutation sum per node, so the counts are
/// smaller than the subset-integral defaults.
pub fn configuration_sum_nodes(k: usize) -> usize {
    if k <= 2 {
        128
    } else {
        64
    }
}

/// Quadrature error estimates above this trigger a warning.
pub const ERROR_ALARM: f64 = 1e-8;

/// Initial positions `y_1 < ⋯ < y_N`; species word `2⋯21`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialConfig {
    ys: Vec<i64>,
}

impl InitialConfig {
    pub fn new(ys: Vec<i64>) -> Result<Self> {
        check_increasing(&ys, "Y")?;
        Ok(Self { ys })
    }

    pub fn ys(&self) -> &[i64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// `y_N`, the second-class particle.
    pub fn last(&self) -> i64 {
        *self.ys.last().unwrap()
    }

    pub fn first(&self) -> i64 {
        self.ys[0]
    }

    pub fn shifted(&self, k: i64) -> Self {
        Self { ys: self.ys.iter().map(|y| y + k).collect() }
    }

    /// The packed block `(−N+1, …, 0)`.
    pub fn step(n: usize) -> Self {
        Self { ys: (0..n as i64).map(|i| i + 1 - n as i64).collect() }
    }

    /// Offsets `y_i − y_N` (all `≤ 0`).
    fn offsets(&self) -> Vec<i64> {
        let b = self.last();
        self.ys.iter().map(|y| y - b).collect()
    }
}

/// Target positions `x_1 < ⋯ < x_N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetConfig {
    xs: Vec<i64>,
}

impl TargetConfig {
    pub fn new(xs: Vec<i64>) -> Result<Self> {
        check_increasing(&xs, "X")?;
        Ok(Self { xs })
    }

    pub fn xs(&self) -> &[i64] {
        &self.xs
    }
}

fn check_increasing(v: &[i64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} is empty")));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!("{what} = {v:?} is not strictly increasing")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `P(Poisson(t) ≥ k)`, summed upward so small tails keep their precision.
pub fn poisson_tail(t: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if t == 0.0 {
        return 0.0;
    }
    let ln_pmf = |j: u64| -t + j as f64 * t.ln() - ln_factorial(j);
    let mut sum = 0.0;
    let mut j = k;
    loop {
        let term = ln_pmf(j).exp();
        sum += term;
        if (j as f64) > t && term < sum * 1e-18 {
            break;
        }
        j += 1;
    }
    sum.min(1.0)
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Smallest `K` with `n·P(Poisson(t) > K) < eps`. Each particle's jump count
/// up to time `t` is Poisson(t), so no particle travels more than `K` sites
/// except on an event of probability below `eps`.
pub fn poisson_halfwidth(n: usize, t: f64, eps: f64) -> i64 {
    let mut k = 0u64;
    while n as f64 * poisson_tail(t, k + 1) >= eps {
        k += 1;
    }
    k as i64
}

/// `n·P(Poisson(t) > K)` for the `K` of [`poisson_halfwidth`].
pub fn poisson_window_tail(n: usize, t: f64, eps: f64) -> f64 {
    n as f64 * poisson_tail(t, poisson_halfwidth(n, t, eps) as u64 + 1)
}

/// `[y_1 − K, y_N + K]` with `K` from [`poisson_halfwidth`]: holds every
/// particle up to probability `eps`.
pub fn poisson_window(y: &InitialConfig, t: f64, eps: f64) -> (i64, i64) {
    let k = poisson_halfwidth(y.len(), t, eps);
    (y.first() - k, y.last() + k)
}

/// Window for the second-class particle alone. Besides [`poisson_window`],
/// it moves at most once per event of the whole system, which is
/// Poisson(Nt); the tighter of the two bounds is used.
pub fn second_class_window(y: &InitialConfig, t: f64, eps: f64) -> (i64, i64) {
    let (lo, hi) = poisson_window(y, t, eps);
    let k = poisson_halfwidth(1, y.len() as f64 * t, eps);
    (lo.max(y.last() - k), hi.min(y.last() + k))
}

/// Warnings for inputs outside the range where the default contour is known
/// to be accurate.
pub fn envelope_warnings(n: usize, t: f64, y: &InitialConfig, x_lo: i64, x_hi: i64) -> Vec<String> {
    let mut w = Vec::new();
    if t > ENVELOPE_T {
        w.push(format!("t = {t} exceeds the validated envelope t <= {ENVELOPE_T}"));
    }
    if n > MAX_PARTICLES {
        w.push(format!("N = {n} exceeds the validated envelope N <= {MAX_PARTICLES}"));
    }
    let far = y.ys().iter().map(|yi| (x_lo - yi).abs().max((x_hi - yi).abs())).max().unwrap_or(0);
    if far > ENVELOPE_DISTANCE {
        w.push(format!("|x - y_i| reaches {far}, beyond the validated envelope {ENVELOPE_DISTANCE}"));
    }
    w
}

/// The building blocks `W`, `I`, `J` of the subset integrands, as plain
/// functions of the spectral variables.
#[derive(Debug, Clone, Copy)]
pub struct KernelFunctions {
    pub params: ModelParams,
    pub t: f64,
}

impl KernelFunctions {
    pub fn new(params: ModelParams, t: f64) -> Self {
        Self { params, t }
    }

    /// `e^{(p/ξ + qξ − 1)t}`.
    pub fn time_factor<T: Real>(&self, xi: Complex<T>) -> Complex<T> {
        let (p, q) = self.params.pq::<T>();
        let one = Complex::new(T::one(), T::zero());
        let arg = (one * p / xi + xi * q - one) * T::of(self.t);
        T::cexp(arg)
    }

    /// `W_{t,x,Y_U}(ξ_U) = ∏_i ξ_i^{x − y_i − 1} e^{(p/ξ_i + qξ_i − 1)t}`.
    pub fn w<T: Real>(&self, x: i64, ys: &[i64], xi: &[Complex<T>]) -> Complex<T> {
        let mut acc = Complex::new(T::one(), T::zero());
        for (y, z) in ys.iter().zip(xi) {
            acc = acc * crate::prec::cpowi(*z, x - y - 1) * self.time_factor(*z);
        }
        acc
    }

    /// `J(ξ_U) = 1/∏(ξ_u − 1)`.
    pub fn j<T: Real>(&self, xi: &[Complex<T>]) -> Complex<T> {
        let one = Complex::new(T::one(), T::zero());
        one / xi.iter().fold(one, |acc, z| acc * (*z - one))
    }

    /// `I(ξ_U) = (∏ξ_u − 1)·J(ξ_U)`.
    pub fn i<T: Real>(&self, xi: &[Complex<T>]) -> Complex<T> {
        let one = Complex::new(T::one(), T::zero());
        (xi.iter().fold(one, |acc, z| acc * *z) - one) * self.j(xi)
    }
}

/// One row of a distribution table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistRow {
    pub x: i64,
    pub probability: f64,
    pub quad_error: f64,
    pub imag_residual: f64,
}

/// `x ↦ P(η(t) = x)` on a window, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub x_lo: i64,
    pub x_hi: i64,
    pub rows: Vec<DistRow>,
    pub max_imag_residual: f64,
    pub max_quad_error: f64,
    pub warnings: Vec<String>,
}

impl DistributionTable {
    pub fn from_rows(rows: Vec<DistRow>, warnings: Vec<String>) -> Self {
        let x_lo = rows.first().map_or(0, |r| r.x);
        let x_hi = rows.last().map_or(-1, |r| r.x);
        let max_imag_residual = rows.iter().map(|r| r.imag_residual).fold(0.0, f64::max);
        let max_quad_error = rows.iter().map(|r| r.quad_error).fold(0.0, f64::max);
        let mut warnings = warnings;
        if max_quad_error > ERROR_ALARM {
            warnings.push(format!("largest quadrature error estimate {max_quad_error:e} exceeds {ERROR_ALARM:e}"));
        }
        Self { x_lo, x_hi, rows, max_imag_residual, max_quad_error, warnings }
    }

    pub fn get(&self, x: i64) -> Option<f64> {
        if x < self.x_lo || x > self.x_hi {
            return None;
        }
        self.rows.get((x - self.x_lo) as usize).map(|r| r.probability)
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.probability).sum()
    }

    pub fn as_map(&self) -> BTreeMap<i64, f64> {
        self.rows.iter().map(|r| (r.x, r.probability)).collect()
    }
}

fn row_from(x: i64, q: &QuadratureResult) -> DistRow {
    DistRow { x, probability: q.value.re, quad_error: q.error_estimate, imag_residual: q.value.im.abs() }
}

/// Contour, per-node `e(ξ)/(ξ − 1)` and the pair table of `T`.
type NodeTables = (Contour, Vec<Cdd>, Vec<Vec<Cdd>>);

/// The subset integrals
/// `∮⋯∮ (∏_{α<β∈S} T_{βα}) I(ξ_S) W_{t,x,Y_S}(ξ_S) dξ_S`
/// for a fixed initial configuration, available for every `x`.
pub struct SubsetIntegrals {
    big_n: usize,
    y_last: i64,
    sums: Vec<(SubsetIndex, ClassSums<Dd>)>,
}

impl SubsetIntegrals {
    /// Builds the integrals for the subsets accepted by `keep`.
    pub fn new(
        params: &ModelParams,
        y: &InitialConfig,
        t: f64,
        settings: &ContourSettings,
        keep: impl Fn(&SubsetIndex) -> bool,
    ) -> Result<Self> {
        check_time(t)?;
        let n = y.len();
        if n > MAX_PARTICLES {
            return Err(Error::UnsupportedSize { n, reason: "subset formulas are limited to N <= 5" });
        }
        let kern = KernelFunctions::new(*params, t);
        let offs = y.offsets();
        let mut sums = Vec::new();
        let mut cache: BTreeMap<(usize, u64), NodeTables> = BTreeMap::new();
        for s in SubsetIndex::all_nonempty(n) {
            if !keep(&s) {
                continue;
            }
            let k = s.len();
            let contour = settings.resolve(params, k)?;
            let key = (contour.nodes(), contour.radius().to_bits());
            if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(key) {
                let pts = contour.points::<Dd>();
                let one = Complex::new(Dd::from(1.0), Dd::from(0.0));
                // e(ξ)/(ξ − 1); the ξ^{-1} of W cancels the Jacobian
                let base: Vec<Cdd> = pts.iter().map(|&z| kern.time_factor(z) / (z - one)).collect();
                let mut tt = Vec::with_capacity(pts.len());
                for &a in &pts {
                    let mut row = Vec::with_capacity(pts.len());
                    for &b in &pts {
                        row.push(factor_t(params, a, b)?);
                    }
                    tt.push(row);
                }
                slot.insert((contour, base, tt));
            }
            let (contour, base, tt) = &cache[&key];
            let single: Vec<Vec<Cdd>> = s
                .members()
                .iter()
                .map(|&u| {
                    let pw = crate::quadrature::node_powers::<Dd>(contour, -offs[u - 1]);
                    base.iter().zip(&pw).map(|(b, w)| *b * *w).collect()
                })
                .collect();
            let pair = if k > 1 { Some(tt.as_slice()) } else { None };
            sums.push((s, ClassSums::build(contour, &single, pair)?));
        }
        Ok(Self { big_n: n, y_last: y.last(), sums })
    }

    pub fn particles(&self) -> usize {
        self.big_n
    }

    pub fn subsets(&self) -> impl Iterator<Item = &SubsetIndex> {
        self.sums.iter().map(|(s, _)| s)
    }

    /// Full- and half-grid value of the `I` integral for subset number `i` at `x`.
    fn integral_pair(&self, i: usize, x: i64) -> (Cdd, Cdd) {
        let z = x - self.y_last;
        let cs = &self.sums[i].1;
        let (f1, h1) = cs.eval(z + 1);
        let (f0, h0) = cs.eval(z);
        (f1 - f0, h1 - h0)
    }

    /// The integral for one subset.
    pub fn integral(&self, s: &SubsetIndex, x: i64) -> Option<QuadratureResult> {
        let i = self.sums.iter().position(|(u, _)| u == s)?;
        let (f, h) = self.integral_pair(i, x);
        Some(QuadratureResult::from_pair(f, h, self.sums[i].1.contour().nodes()))
    }

    /// `Σ_S coef(S) · integral(S, x)`; subsets not built count as zero.
    pub fn combine(&self, x: i64, coef: impl Fn(&SubsetIndex) -> Dd) -> QuadratureResult {
        let zero = Complex::new(Dd::from(0.0), Dd::from(0.0));
        let mut val = zero;
        let mut err = 0.0;
        let mut nodes = 0;
        for (i, (s, cs)) in self.sums.iter().enumerate() {
            let c = coef(s);
            if c.hi() == 0.0 {
                continue;
            }
            let (f, h) = self.integral_pair(i, x);
            val = val + f * c;
            err += to_c64((f - h) * c).norm();
            nodes = nodes.max(cs.contour().nodes());
        }
        QuadratureResult { value: to_c64(val), error_estimate: err, nodes_used: nodes }
    }
}

/// Builds the subset integrals needed by the second-class law (all subsets
/// whose coefficient is non-zero).
pub fn second_class_kernel(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    settings: &ContourSettings,
) -> Result<SubsetIntegrals> {
    let n = y.len();
    SubsetIntegrals::new(params, y, t, settings, |s| coefficient_c_s_t::<Dd>(params, n, s).hi() != 0.0)
}

/// `P(η(t) = x)` for the second-class particle started at `y_N` behind
/// first-class particles at `y_1 < ⋯ < y_{N−1}`.
pub fn second_class_pmf(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    x: i64,
    settings: &ContourSettings,
) -> Result<QuadratureResult> {
    let k = second_class_kernel(params, y, t, settings)?;
    let n = y.len();
    Ok(k.combine(x, |s| coefficient_c_s_t::<Dd>(params, n, s)))
}

/// [`second_class_pmf`] on `[x_lo, x_hi]`, sharing the node sums across `x`.
pub fn second_class_table(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    x_lo: i64,
    x_hi: i64,
    settings: &ContourSettings,
) -> Result<DistributionTable> {
    let k = second_class_kernel(params, y, t, settings)?;
    let n = y.len();
    let rows = (x_lo..=x_hi).map(|x| row_from(x, &k.combine(x, |s| coefficient_c_s_t::<Dd>(params, n, s)))).collect();
    Ok(DistributionTable::from_rows(rows, envelope_warnings(n, t, y, x_lo, x_hi)))
}

/// `∮ ξ^{x−y_N−1} e^{(1/(2ξ) + ξ/2 − 1)t} dξ`, the law of a rate-1 symmetric
/// walk started at `y_N`.
pub fn symmetric_pmf(y_last: i64, t: f64, x: i64, settings: &ContourSettings) -> Result<QuadratureResult> {
    Ok(symmetric_kernel(t, settings)?.result(x - y_last))
}

fn symmetric_kernel(t: f64, settings: &ContourSettings) -> Result<ClassSums<Dd>> {
    check_time(t)?;
    let half = ModelParams::new(0.5)?;
    let kern = KernelFunctions::new(half, t);
    let contour = settings.resolve(&half, 1)?;
    let single = vec![contour.points::<Dd>().into_iter().map(|z| kern.time_factor(z)).collect()];
    ClassSums::build(&contour, &single, None)
}

pub fn symmetric_table(
    y_last: i64,
    t: f64,
    x_lo: i64,
    x_hi: i64,
    settings: &ContourSettings,
) -> Result<DistributionTable> {
    let k = symmetric_kernel(t, settings)?;
    let rows = (x_lo..=x_hi).map(|x| row_from(x, &k.result(x - y_last))).collect();
    Ok(DistributionTable::from_rows(rows, Vec::new()))
}

/// The three-particle law written out term by term, each subset integral
/// evaluated by a direct tensor rule. Shares no code with the class-sum path
/// beyond the scalar factors; used as a regression reference.
pub fn n3_expanded_pmf(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    x: i64,
    settings: &ContourSettings,
) -> Result<QuadratureResult> {
    if y.len() != 3 {
        return Err(Error::UnsupportedSize { n: y.len(), reason: "the expanded formula is for N = 3" });
    }
    check_time(t)?;
    let (p, q) = params.pq::<Dd>();
    let d = q - p;
    let terms: [(&[usize], Dd); 7] = [
        (&[1, 2, 3], d * d),
        (&[1, 2], d * d / (p * p)),
        (&[1, 3], q / p * d),
        (&[2, 3], d),
        (&[1], q / (p * p) * d),
        (&[2], d / p),
        (&[3], Dd::from(1.0)),
    ];
    let kern = KernelFunctions::new(*params, t);
    let ys = y.offsets();
    let z = x - y.last();
    let mut total = QuadratureResult::zero(0);
    for (set, c) in terms {
        if c.hi() == 0.0 {
            continue;
        }
        let k = set.len();
        let contour = settings.resolve(params, k)?;
        let m = contour.nodes();
        let pts = contour.points::<Dd>();
        // W_i·ξ_i per node (the extra ξ is the Jacobian of the circle)
        let w: Vec<Vec<Cdd>> =
            set.iter().map(|&u| pts.iter().map(|&xi| kern.w(z, &[ys[u - 1]], &[xi]) * xi).collect()).collect();
        let tt: Vec<Vec<Cdd>> = pts
            .iter()
            .map(|&a| pts.iter().map(|&b| factor_t(params, a, b)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let zero = Complex::new(Dd::from(0.0), Dd::from(0.0));
        let chunk = m.pow(k as u32 - 1);
        // ordered merge of per-chunk sums keeps the result bitwise reproducible
        let parts: Vec<(Cdd, Cdd)> = (0..m)
            .into_par_iter()
            .map(|j0| {
                let mut acc = (zero, zero);
                for flat in j0 * chunk..(j0 + 1) * chunk {
                    let idx = unflatten(flat, m, k);
                    let xi: Vec<Cdd> = idx.iter().map(|&j| pts[j]).collect();
                    let mut v = kern.i(&xi) * c;
                    for (a, &ja) in idx.iter().enumerate() {
                        v = v * w[a][ja];
                        for &jb in &idx[a + 1..] {
                            v = v * tt[ja][jb];
                        }
                    }
                    acc.0 = acc.0 + v;
                    if idx.iter().all(|j| j % 2 == 0) {
                        acc.1 = acc.1 + v;
                    }
                }
                acc
            })
            .collect();
        let (full, half) = parts.into_iter().fold((zero, zero), |a, b| (a.0 + b.0, a.1 + b.1));
        let sf = Dd::of(m as f64).powi(k as i32);
        let sh = Dd::of((m / 2) as f64).powi(k as i32);
        total = total + QuadratureResult::from_pair(full / sf, half / sh, m);
    }
    Ok(total)
}

/// Law of the rightmost particle in the single-species process started from
/// `Y` (all particles first class).
pub fn rightmost_single_species_pmf(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    x: i64,
    settings: &ContourSettings,
) -> Result<QuadratureResult> {
    Ok(rightmost_single_species_table(params, y, t, x, x, settings)?.1[0])
}

/// [`rightmost_single_species_pmf`] on a window; returns the table and the
/// raw quadrature results.
pub fn rightmost_single_species_table(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    x_lo: i64,
    x_hi: i64,
    settings: &ContourSettings,
) -> Result<(DistributionTable, Vec<QuadratureResult>)> {
    let n = y.len();
    let k = SubsetIntegrals::new(params, y, t, settings, |_| true)?;
    let res: Vec<QuadratureResult> =
        (x_lo..=x_hi).map(|x| k.combine(x, |s| coefficient_rightmost_t::<Dd>(params, n, s))).collect();
    let rows = (x_lo..=x_hi).zip(&res).map(|(x, r)| row_from(x, r)).collect();
    Ok((DistributionTable::from_rows(rows, envelope_warnings(n, t, y, x_lo, x_hi)), res))
}

/// Right-hand side of the per-slot identity at three particles:
/// `Σ_S c̃_S(n) ∮⋯∮ (∏T) I W` for `n = 1..=N`, indexed `[n-1][x - x_lo]`.
pub fn slot_decomposition_table(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    x_lo: i64,
    x_hi: i64,
    settings: &ContourSettings,
) -> Result<Vec<Vec<QuadratureResult>>> {
    let n = y.len();
    let k = SubsetIntegrals::new(params, y, t, settings, |_| true)?;
    Ok((1..=n)
        .map(|slot| (x_lo..=x_hi).map(|x| k.combine(x, |s| coefficient_c_tilde_t::<Dd>(params, n, s, slot))).collect())
        .collect())
}

/// Precomputed node values of the transition-probability integrand for one
/// `(Y, n, t)`; evaluates `P_Y(X, ν_n; t)` for any `X`.
pub struct TransitionKernel {
    n_particles: usize,
    slot: usize,
    y_last: i64,
    contour: Contour,
    /// per permutation: `σ^{-1}` (0-based) and node values over the grid
    tables: Vec<(Vec<usize>, Vec<Cdd>)>,
    roots: Vec<Cdd>,
}

impl TransitionKernel {
    pub fn new(
        params: &ModelParams,
        y: &InitialConfig,
        slot: usize,
        t: f64,
        settings: &ContourSettings,
    ) -> Result<Self> {
        check_time(t)?;
        let n = y.len();
        if slot == 0 || slot > n {
            return Err(Error::InvalidParameter(format!("n = {slot} outside 1..={n}")));
        }
        if n > 4 {
            return Err(Error::UnsupportedSize { n, reason: "the permutation sum is limited to N <= 4" });
        }
        let contour = settings.resolve(params, n)?;
        let m = contour.nodes();
        let pts = contour.points::<Dd>();
        let kern = KernelFunctions::new(*params, t);
        let offs = y.offsets();
        // per node: e(ξ)·ξ (Jacobian)
        let e: Vec<Cdd> = pts.iter().map(|&z| kern.time_factor(z) * z).collect();
        // per variable v: ξ^{−(y_v − y_N) − 1}
        let ypow: Vec<Vec<Cdd>> = offs.iter().map(|o| crate::quadrature::node_powers::<Dd>(&contour, -o - 1)).collect();
        let total = m.pow(n as u32);
        let mut tables = Vec::new();
        for sigma in Permutation::all(n) {
            if sigma.inverse_of(n) > slot {
                continue;
            }
            let word = reduced_word(&sigma);
            let vals: Vec<Cdd> = (0..total)
                .into_par_iter()
                .map(|flat| {
                    let idx = unflatten(flat, m, n);
                    let xi: Vec<Cdd> = idx.iter().map(|&j| pts[j]).collect();
                    let a = sector_column(params, &word, &xi)?.get(slot);
                    let mut v = a;
                    for (var, &j) in idx.iter().enumerate() {
                        v = v * e[j] * ypow[var][j];
                    }
                    Ok(v)
                })
                .collect::<Result<_>>()?;
            let inv: Vec<usize> = (1..=n).map(|v| sigma.inverse_of(v) - 1).collect();
            tables.push((inv, vals));
        }
        Ok(Self { n_particles: n, slot, y_last: y.last(), contour, tables, roots: contour.roots::<Dd>() })
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn contour(&self) -> &Contour {
        &self.contour
    }

    pub fn eval(&self, x: &TargetConfig) -> Result<QuadratureResult> {
        let n = self.n_particles;
        if x.xs().len() != n {
            return Err(Error::InvalidConfig(format!("X has {} entries, expected {n}", x.xs().len())));
        }
        let m = self.contour.nodes();
        let zs: Vec<i64> = x.xs().iter().map(|v| v - self.y_last).collect();
        let zero = Complex::new(Dd::from(0.0), Dd::from(0.0));
        let mut full = zero;
        let mut half = zero;
        for (inv, vals) in &self.tables {
            // exponent carried by variable v is x_{σ^{-1}(v)}
            let ex: Vec<usize> = inv.iter().map(|&i| zs[i].rem_euclid(m as i64) as usize).collect();
            let mut f = zero;
            let mut h = zero;
            let mut idx = vec![0usize; n];
            for v in vals {
                let mut ph = 0usize;
                let mut even = true;
                for d in 0..n {
                    ph += idx[d] * ex[d];
                    even &= idx[d].is_multiple_of(2);
                }
                let term = *v * self.roots[ph % m];
                f = f + term;
                if even {
                    h = h + term;
                }
                // odometer, last variable fastest (matches unflatten)
                let mut d = n;
                while d > 0 {
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < m {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            full = full + f;
            half = half + h;
        }
        let sum_z: i64 = zs.iter().sum();
        let rz = Dd::of(self.contour.radius()).powi(sum_z as i32);
        let sf = Dd::of(m as f64).powi(n as i32);
        let sh = Dd::of((m / 2) as f64).powi(n as i32);
        Ok(QuadratureResult::from_pair(full * (rz / sf), half * (rz / sh), m))
    }
}

fn unflatten(mut flat: usize, m: usize, n: usize) -> Vec<usize> {
    let mut idx = vec![0; n];
    for d in (0..n).rev() {
        idx[d] = flat % m;
        flat /= m;
    }
    idx
}

/// `P_Y(X, ν_n; t)`: probability of configuration `X` with the second-class
/// particle in slot `n` at time `t`.
pub fn transition_probability(
    params: &ModelParams,
    y: &InitialConfig,
    x: &TargetConfig,
    slot: usize,
    t: f64,
    settings: &ContourSettings,
) -> Result<QuadratureResult> {
    if x.xs().len() != y.len() {
        return Err(Error::InvalidConfig("X and Y have different lengths".into()));
    }
    TransitionKernel::new(params, y, slot, t, settings)?.eval(x)
}

/// Full- and half-grid partial sums, indexed `[channel][x − lo]`.
type FullHalf = (Vec<Vec<Cdd>>, Vec<Vec<Cdd>>);

/// Configuration sums `Σ_{X in window, x_m = x} ∫ a_σ(ξ) ∏ ξ_{σ(i)}^{x_i − y_{σ(i)} − 1} e(ξ_i) dξ`
/// for all `x` in the window at once.
///
/// `amp(σ, ξ)` returns `(m, out, a)` triples: slot `m` (one-based) whose
/// position is pinned to `x`, output channel `out`, amplitude `a`. The
/// result is indexed `[out][x − lo]`.
fn configuration_sums<F>(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    window: (i64, i64),
    contour: &Contour,
    channels: usize,
    amp: F,
) -> Result<Vec<Vec<QuadratureResult>>>
where
    F: Fn(&Permutation, &[Cdd]) -> Result<Vec<(usize, usize, Cdd)>> + Sync,
{
    let n = y.len();
    let (lo, hi) = window;
    let w = (hi - lo + 1) as usize;
    let m = contour.nodes();
    let pts = contour.points::<Dd>();
    let kern = KernelFunctions::new(*params, t);
    let offs = y.offsets();
    let b = y.last();
    let e: Vec<Cdd> = pts.iter().map(|&z| kern.time_factor(z) * z).collect();
    let ypow: Vec<Vec<Cdd>> = offs.iter().map(|o| crate::quadrature::node_powers::<Dd>(contour, -o - 1)).collect();
    // position powers per node: ξ_j^{x − y_N}
    let xpow: Vec<Vec<Cdd>> = (0..m)
        .map(|j| {
            (lo..=hi)
                .map(|x| Dd::root_of_unity(j as i64 * (x - b), m) * Dd::of(contour.radius()).powi((x - b) as i32))
                .collect()
        })
        .collect();
    let perms: Vec<(Permutation, Vec<usize>)> = Permutation::all(n)
        .into_iter()
        .map(|s| {
            let img = s.images().iter().map(|v| v - 1).collect();
            (s, img)
        })
        .collect();
    let zero = Complex::new(Dd::from(0.0), Dd::from(0.0));
    let one = Complex::new(Dd::from(1.0), Dd::from(0.0));
    let total = m.pow(n as u32);
    let chunk = m.pow(n.saturating_sub(1) as u32);
    let parts: Vec<Result<FullHalf>> = (0..m)
        .into_par_iter()
        .map(|j0| {
            let mut full = vec![vec![zero; w]; channels];
            let mut half = vec![vec![zero; w]; channels];
            let mut pre = vec![vec![zero; w]; n + 1];
            let mut suf = vec![vec![zero; w]; n + 2];
            let mut weight = vec![zero; w];
            for flat in j0 * chunk..((j0 + 1) * chunk).min(total) {
                let idx = unflatten(flat, m, n);
                let even = idx.iter().all(|j| j % 2 == 0);
                let xi: Vec<Cdd> = idx.iter().map(|&j| pts[j]).collect();
                let mut g_common = one;
                for &j in &idx {
                    g_common = g_common * e[j];
                }
                for (sigma, img) in &perms {
                    let coeffs = amp(sigma, &xi)?;
                    if coeffs.is_empty() {
                        continue;
                    }
                    // node index carried by slot i is j_{σ(i)}
                    let node: Vec<usize> = img.iter().map(|&v| idx[v]).collect();
                    let mut g = g_common;
                    for (i, &v) in img.iter().enumerate() {
                        let _ = i;
                        g = g * ypow[v][idx[v]];
                    }
                    // prefix sums: pre[c][x] = Σ_{x_1<…<x_c<x} ∏_{i≤c} u_i^{x_i}
                    for v in pre[0].iter_mut() {
                        *v = one;
                    }
                    for c in 1..n {
                        pre[c][0] = zero;
                        for xi_ in 1..w {
                            pre[c][xi_] = pre[c][xi_ - 1] + pre[c - 1][xi_ - 1] * xpow[node[c - 1]][xi_ - 1];
                        }
                    }
                    // suffix sums: suf[c][x] = Σ_{x<x_c<…<x_N} ∏_{i≥c} u_i^{x_i} (c one-based)
                    for v in suf[n + 1].iter_mut() {
                        *v = one;
                    }
                    for c in (2..=n).rev() {
                        suf[c][w - 1] = zero;
                        for xi_ in (0..w - 1).rev() {
                            suf[c][xi_] = suf[c][xi_ + 1] + suf[c + 1][xi_ + 1] * xpow[node[c - 1]][xi_ + 1];
                        }
                    }
                    for (slot, out, a) in coeffs {
                        let ga = g * a;
                        let u = &xpow[node[slot - 1]];
                        for xi_ in 0..w {
                            weight[xi_] = pre[slot - 1][xi_] * u[xi_] * suf[slot + 1][xi_];
                        }
                        for xi_ in 0..w {
                            let v = ga * weight[xi_];
                            full[out][xi_] = full[out][xi_] + v;
                            if even {
                                half[out][xi_] = half[out][xi_] + v;
                            }
                        }
                    }
                }
            }
            Ok((full, half))
        })
        .collect();
    let mut full = vec![vec![zero; w]; channels];
    let mut half = vec![vec![zero; w]; channels];
    for part in parts {
        let (f, h) = part?;
        for c in 0..channels {
            for i in 0..w {
                full[c][i] = full[c][i] + f[c][i];
                half[c][i] = half[c][i] + h[c][i];
            }
        }
    }
    let sf = Dd::of(m as f64).powi(n as i32);
    let sh = Dd::of((m / 2) as f64).powi(n as i32);
    Ok((0..channels)
        .map(|c| (0..w).map(|i| QuadratureResult::from_pair(full[c][i] / sf, half[c][i] / sh, m)).collect())
        .collect())
}

/// Result of a configuration-sum check on a window.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigurationSumCheck {
    pub x_lo: i64,
    pub x_hi: i64,
    /// Truncated configuration sums (left-hand sides).
    pub lhs: Vec<f64>,
    /// Closed forms (right-hand sides).
    pub rhs: Vec<f64>,
    pub max_abs_diff: f64,
    /// Bound on the probability of any particle leaving the window.
    pub truncation_tail: f64,
}

fn finish_check(x_lo: i64, x_hi: i64, lhs: Vec<f64>, rhs: Vec<f64>, tail: f64) -> ConfigurationSumCheck {
    let max_abs_diff = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ConfigurationSumCheck { x_lo, x_hi, lhs, rhs, max_abs_diff, truncation_tail: tail }
}

/// Rightmost-particle law of the single-species process two ways: summing
/// single-species transition probabilities over configurations in the window
/// `[y_1 − K, y_N + K]`, and the closed subset formula.
pub fn rightmost_configuration_check(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    eps: f64,
    settings: &ContourSettings,
) -> Result<ConfigurationSumCheck> {
    check_time(t)?;
    let n = y.len();
    let (lo, hi) = poisson_window(y, t, eps);
    let cs = ContourSettings { nodes: settings.nodes.or(Some(configuration_sum_nodes(n))), ..*settings };
    let contour = cs.resolve(params, n)?;
    let lhs = configuration_sums(params, y, t, (lo, hi), &contour, 1, |sigma, xi| {
        Ok(vec![(n, 0, amplitude_single_species(params, sigma, xi)?)])
    })?;
    let (_, rhs) = rightmost_single_species_table(params, y, t, lo, hi, settings)?;
    let tail = poisson_window_tail(n, t, eps);
    Ok(finish_check(
        lo,
        hi,
        lhs[0].iter().map(|r| r.value.re).collect(),
        rhs.iter().map(|r| r.value.re).collect(),
        tail,
    ))
}

/// Per-slot identity at three particles for every `n` at once.
#[derive(Debug, Clone, Serialize)]
pub struct SlotIdentityCheck {
    /// One check per `n = 1, 2, 3`.
    pub per_slot: Vec<ConfigurationSumCheck>,
    /// `max_x |Σ_n RHS(n, x) − P(η(t) = x)|`.
    pub sum_vs_theorem: f64,
}

/// The per-slot decomposition of the second-class law at N = 3. The
/// left-hand side for slot `n` adds the `−` components of configurations with
/// the second-class particle in slot `n+1` and at `x`, and the `+`
/// components with it in slot `n` and at `x`, summed over the Poisson window.
pub fn proposition41_check_n3(
    params: &ModelParams,
    y: &InitialConfig,
    t: f64,
    eps: f64,
    settings: &ContourSettings,
) -> Result<SlotIdentityCheck> {
    if y.len() != 3 {
        return Err(Error::UnsupportedSize { n: y.len(), reason: "the ± split is tabulated for N = 3 only" });
    }
    check_time(t)?;
    let (lo, hi) = poisson_window(y, t, eps);
    let cs = ContourSettings { nodes: settings.nodes.or(Some(configuration_sum_nodes(3))), ..*settings };
    let contour = cs.resolve(params, 3)?;
    let lhs = configuration_sums(params, y, t, (lo, hi), &contour, 3, |sigma, xi| {
        let mut out = Vec::new();
        for slot in 1..=3 {
            if sigma.inverse_of(3) > slot {
                continue;
            }
            let plus = component_amplitude_n3(params, sigma, xi, slot, Sign::Plus)?;
            out.push((slot, slot - 1, plus));
            if slot >= 2 {
                let minus = component_amplitude_n3(params, sigma, xi, slot, Sign::Minus)?;
                out.push((slot, slot - 2, minus));
            }
        }
        Ok(out)
    })?;
    let rhs = slot_decomposition_table(params, y, t, lo, hi, settings)?;
    let theorem = second_class_table(params, y, t, lo, hi, settings)?;
    let tail = poisson_window_tail(3, t, eps);
    let per_slot: Vec<ConfigurationSumCheck> = (0..3)
        .map(|i| {
            finish_check(
                lo,
                hi,
                lhs[i].iter().map(|r| r.value.re).collect(),
                rhs[i].iter().map(|r| r.value.re).collect(),
                tail,
            )
        })
        .collect();
    let sum_vs_theorem = (0..(hi - lo + 1) as usize)
        .map(|k| {
            let s: f64 = (0..3).map(|i| rhs[i][k].value.re).sum();
            (s - theorem.rows[k].probability).abs()
        })
        .fold(0.0, f64::max);
    Ok(SlotIdentityCheck { per_slot, sum_vs_theorem })
}

/// `max |Im|` over a set of results, for diagnostics.
pub fn max_imag(rs: &[QuadratureResult]) -> f64 {
    rs.iter().map(|r| r.value.im.abs()).fold(0.0, f64::max)
}

/// Converts a complex quadrature value to its real part after checking the
/// imaginary residue is below `tol`.
pub fn real_part(r: &QuadratureResult, tol: f64) -> Option<f64> {
    (r.value.im.abs() <= tol).then_some(r.value.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use statrs::distribution::{DiscreteCDF, Poisson};

    fn mp(p: f64) -> ModelParams {
        ModelParams::new(p).unwrap()
    }

    /// `I_ν(z)` by its power series.
    fn bessel_i(nu: u32, z: f64) -> f64 {
        let mut term = (z / 2.0).powi(nu as i32) / (1..=nu).map(f64::from).product::<f64>();
        let mut sum = term;
        for k in 1..200 {
            term *= (z / 2.0).powi(2) / (k as f64 * (k + nu) as f64);
            sum += term;
            if term < sum * 1e-18 {
                break;
            }
        }
        sum
    }

    /// Law of a continuous-time walk stepping right at rate p, left at rate q.
    fn biased_walk(p: f64, t: f64, x: i64) -> f64 {
        let q = 1.0 - p;
        (-t).exp() * (p / q).powf(x as f64 / 2.0) * bessel_i(x.unsigned_abs() as u32, 2.0 * t * (p * q).sqrt())
    }

    #[test]
    fn configs_reject_bad_input() {
        assert!(InitialConfig::new(vec![0, 0]).is_err());
        assert!(InitialConfig::new(vec![1, 0]).is_err());
        assert!(InitialConfig::new(vec![]).is_err());
        assert_eq!(InitialConfig::step(3).ys(), &[-2, -1, 0]);
        assert!(TargetConfig::new(vec![3, 2]).is_err());
    }

    #[test]
    fn poisson_tail_matches_survival_function() {
        for &t in &[0.5, 1.0, 3.0] {
            let d = Poisson::new(t).unwrap();
            for k in 1..25u64 {
                let want = d.sf(k - 1);
                let got = poisson_tail(t, k);
                assert!((got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-300, "t={t} k={k}: {got} vs {want}");
            }
        }
        assert_eq!(poisson_tail(1.0, 0), 1.0);
    }

    #[test]
    fn halfwidth_is_minimal() {
        let k = poisson_halfwidth(3, 1.0, 1e-10);
        assert!(3.0 * poisson_tail(1.0, k as u64 + 1) < 1e-10);
        assert!(3.0 * poisson_tail(1.0, k as u64) >= 1e-10);
        let y = InitialConfig::step(3);
        assert_eq!(poisson_window(&y, 1.0, 1e-10), (-2 - k, k));
        assert_eq!(poisson_halfwidth(3, 0.0, 1e-12), 0);
        assert_eq!(second_class_window(&y, 0.0, 1e-12), (0, 0));
        let (lo, hi) = second_class_window(&y, 1.0, 1e-10);
        assert!(lo >= -2 - k && hi <= k);
    }

    #[test]
    fn kernel_functions_agree_with_definitions() {
        let k = KernelFunctions::new(mp(0.7), 0.4);
        let a = Complex64::new(0.2, 0.1);
        let b = Complex64::new(-0.1, 0.25);
        let w = k.w(2, &[0, -1], &[a, b]);
        let e = |z: Complex64| ((0.7 / z + 0.3 * z - 1.0) * 0.4).exp();
        let want = a.powi(1) * e(a) * b.powi(2) * e(b);
        assert!((w - want).norm() < 1e-14);
        let i = k.i(&[a, b]);
        assert!((i - (a * b - 1.0) / ((a - 1.0) * (b - 1.0))).norm() < 1e-14);
    }

    #[test]
    fn single_particle_is_a_biased_walk() {
        let y = InitialConfig::new(vec![3]).unwrap();
        let tab = second_class_table(&mp(0.7), &y, 1.5, -7, 13, &ContourSettings::default()).unwrap();
        for r in &tab.rows {
            let want = biased_walk(0.7, 1.5, r.x - 3);
            assert!((r.probability - want).abs() < 1e-14, "x={}: {} vs {want}", r.x, r.probability);
        }
    }

    #[test]
    fn symmetric_law_is_a_bessel_weight() {
        let tab = symmetric_table(0, 1.0, -10, 10, &ContourSettings::default()).unwrap();
        for r in &tab.rows {
            let want = (-1.0f64).exp() * bessel_i(r.x.unsigned_abs() as u32, 1.0);
            assert!((r.probability - want).abs() < 1e-15);
        }
    }

    #[test]
    fn time_zero_is_a_point_mass() {
        let y = InitialConfig::step(3);
        let tab = second_class_table(&mp(0.7), &y, 0.0, -4, 3, &ContourSettings::default()).unwrap();
        for r in &tab.rows {
            let want = if r.x == 0 { 1.0 } else { 0.0 };
            assert!((r.probability - want).abs() < 1e-14, "x={} p={}", r.x, r.probability);
        }
    }

    #[test]
    fn two_particle_law_sums_to_one() {
        let y = InitialConfig::new(vec![-3, 0]).unwrap();
        let (lo, hi) = poisson_window(&y, 1.0, 1e-12);
        let tab = second_class_table(&mp(0.6), &y, 1.0, lo, hi, &ContourSettings::default()).unwrap();
        assert!((tab.total() - 1.0).abs() < 1e-11);
        assert!(tab.rows.iter().all(|r| r.probability > -1e-14));
        assert!(tab.max_imag_residual < 1e-14);
    }

    #[test]
    fn translation_is_exact() {
        let m = mp(0.7);
        let s = ContourSettings::new(None, Some(32));
        let y = InitialConfig::new(vec![-4, -1, 0]).unwrap();
        let a = second_class_table(&m, &y, 0.7, -6, 4, &s).unwrap();
        let b = second_class_table(&m, &y.shifted(17), 0.7, 11, 21, &s).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.probability.to_bits(), rb.probability.to_bits());
        }
    }

    #[test]
    fn expanded_three_particle_formula_agrees() {
        let m = mp(0.63);
        let y = InitialConfig::new(vec![-3, -1, 0]).unwrap();
        let s = ContourSettings::new(None, Some(24));
        for x in [-4, 0, 2] {
            let a = n3_expanded_pmf(&m, &y, 0.8, x, &s).unwrap();
            let b = second_class_pmf(&m, &y, 0.8, x, &s).unwrap();
            assert!((a.value.re - b.value.re).abs() < 1e-14, "x={x}");
        }
        assert!(n3_expanded_pmf(&m, &InitialConfig::step(2), 0.8, 0, &s).is_err());
    }

    #[test]
    fn transition_kernel_single_particle() {
        let y = InitialConfig::new(vec![0]).unwrap();
        let k = TransitionKernel::new(&mp(0.8), &y, 1, 1.0, &ContourSettings::default()).unwrap();
        for x in -5..8 {
            let v = k.eval(&TargetConfig::new(vec![x]).unwrap()).unwrap();
            assert!((v.value.re - biased_walk(0.8, 1.0, x)).abs() < 1e-15);
        }
    }

    #[test]
    fn transition_slots_add_up_to_the_two_particle_law() {
        let m = mp(0.7);
        let y = InitialConfig::step(2);
        let s = ContourSettings::default();
        let k1 = TransitionKernel::new(&m, &y, 1, 0.6, &s).unwrap();
        let k2 = TransitionKernel::new(&m, &y, 2, 0.6, &s).unwrap();
        let tab = second_class_table(&m, &y, 0.6, -5, 5, &s).unwrap();
        for x in -5..=5 {
            let mut total = 0.0;
            for other in -12..=12 {
                if other < x {
                    total += k2.eval(&TargetConfig::new(vec![other, x]).unwrap()).unwrap().value.re;
                } else if other > x {
                    total += k1.eval(&TargetConfig::new(vec![x, other]).unwrap()).unwrap().value.re;
                }
            }
            assert!((total - tab.get(x).unwrap()).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn rightmost_two_particle_configuration_sum() {
        let c = rightmost_configuration_check(
            &mp(0.7),
            &InitialConfig::step(2),
            0.5,
            1e-9,
            &ContourSettings::new(None, Some(64)),
        )
        .unwrap();
        assert!(c.truncation_tail < 1e-8);
        assert!(c.max_abs_diff < 1e-10, "{}", c.max_abs_diff);
    }

    #[test]
    fn envelope_warnings_fire() {
        let y = InitialConfig::step(2);
        assert!(envelope_warnings(2, 1.0, &y, -5, 5).is_empty());
        assert_eq!(envelope_warnings(2, 6.0, &y, -5, 5).len(), 1);
        assert_eq!(envelope_warnings(2, 1.0, &y, -40, 5).len(), 1);
    }
}
