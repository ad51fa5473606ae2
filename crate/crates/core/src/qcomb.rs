//! q-integers, q-binomials, the subset coefficients of the second-class
//! particle law, and a numeric check of the algebraic identities they rest on.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{factor_pt, factor_q, factor_s, factor_t, ModelParams};
use crate::error::{Error, Result};
use crate::prec::{Dd, Real};

/// A subset of `{1..n}` kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubsetIndex {
    n: usize,
    members: Vec<usize>,
}

impl SubsetIndex {
    pub fn new(n: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.iter().any(|&u| u == 0 || u > n) {
            return Err(Error::InvalidParameter(format!("{members:?} is not a subset of 1..={n}")));
        }
        Ok(Self { n, members })
    }

    /// Subset whose members are the set bits of `mask` (bit 0 is element 1).
    pub fn from_mask(n: usize, mask: u32) -> Self {
        let members = (1..=n).filter(|&u| mask & (1 << (u - 1)) != 0).collect();
        Self { n, members }
    }

    pub fn mask(&self) -> u32 {
        self.members.iter().map(|&u| 1u32 << (u - 1)).sum()
    }

    /// All non-empty subsets of `{1..n}` in mask order.
    pub fn all_nonempty(n: usize) -> Vec<SubsetIndex> {
        (1..(1u32 << n)).map(|m| Self::from_mask(n, m)).collect()
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, u: usize) -> bool {
        self.members.binary_search(&u).is_ok()
    }

    pub fn complement(&self) -> SubsetIndex {
        let members = (1..=self.n).filter(|u| !self.contains(*u)).collect();
        SubsetIndex { n: self.n, members }
    }

    /// Sum of the elements.
    pub fn sum(&self) -> usize {
        self.members.iter().sum()
    }

    /// Rank of `u` within this set, one-based.
    pub fn g(&self, u: usize) -> Option<usize> {
        self.members.binary_search(&u).ok().map(|i| i + 1)
    }

    /// `Σ_U(sub)` with `self` playing the role of `U`: the sum of the ranks of
    /// the elements of `sub` inside `self`. Zero for the empty set.
    pub fn rank_sum(&self, sub: &[usize]) -> Option<usize> {
        sub.iter().map(|&u| self.g(u)).sum()
    }
}

/// `[n] = (p^n − q^n)/(p − q)`, summed as `Σ p^k q^{n−1−k}` so that `p = q` is
/// covered without a special case.
pub fn q_bracket_t<T: Real>(m: &ModelParams, n: usize) -> T {
    let (p, q) = m.pq::<T>();
    let mut acc = T::zero();
    let mut pk = T::one();
    for k in 0..n {
        acc = acc + pk * q.powi((n - 1 - k) as i32);
        pk = pk * p;
    }
    acc
}

pub fn q_bracket(m: &ModelParams, n: usize) -> f64 {
    q_bracket_t::<f64>(m, n)
}

pub fn q_factorial_t<T: Real>(m: &ModelParams, n: usize) -> T {
    (1..=n).fold(T::one(), |acc, k| acc * q_bracket_t::<T>(m, k))
}

pub fn q_factorial(m: &ModelParams, n: usize) -> f64 {
    q_factorial_t::<f64>(m, n)
}

/// `[n]!/([n−k]![k]!)`, zero when `k > n`.
pub fn q_binomial_t<T: Real>(m: &ModelParams, n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    // product form keeps the numbers small
    let mut acc = T::one();
    for i in 0..k.min(n - k) {
        acc = acc * q_bracket_t::<T>(m, n - i) / q_bracket_t::<T>(m, i + 1);
    }
    acc
}

pub fn q_binomial(m: &ModelParams, n: usize, k: usize) -> f64 {
    q_binomial_t::<f64>(m, n, k)
}

/// Ordinary Gaussian binomial in the variable `tau`.
pub fn gaussian_binomial(tau: f64, n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    // Pascal recurrence: [n,k] = [n-1,k-1] + τ^k [n-1,k]
    let mut row = vec![1.0f64];
    for r in 1..=n {
        let mut next = vec![1.0f64; r + 1];
        for j in 1..r {
            next[j] = row[j - 1] + tau.powi(j as i32) * row[j];
        }
        row = next;
    }
    row[k]
}

fn prod_q_minus_p<T: Real>(p: T, q: T, upto: usize) -> T {
    (1..=upto).fold(T::one(), |acc, i| acc * (q.powi(i as i32) - p.powi(i as i32)))
}

/// `a^e` for a signed exponent.
fn pow_signed<T: Real>(a: T, e: i64) -> T {
    a.powi(e as i32)
}

/// Coefficient `c_S` of the subset integral in the second-class particle law
/// for N particles.
pub fn coefficient_c_s_t<T: Real>(m: &ModelParams, big_n: usize, s: &SubsetIndex) -> T {
    let (p, q) = m.pq::<T>();
    let sc = s.complement();
    let k = s.len();
    let kc = sc.len() as i64;
    let sum_c = sc.sum() as i64;
    let qp = q / p;
    if s.contains(big_n) {
        prod_q_minus_p(p, q, k - 1) * pow_signed(qp, sum_c - kc * (kc + 1) / 2)
    } else {
        prod_q_minus_p(p, q, k) / p.powi(k as i32) * pow_signed(qp, sum_c - kc * (kc - 1) / 2 - big_n as i64)
    }
}

pub fn coefficient_c_s(m: &ModelParams, big_n: usize, s: &SubsetIndex) -> f64 {
    coefficient_c_s_t::<f64>(m, big_n, s)
}

/// Coefficient of the subset integral in the law of the rightmost particle of
/// the single-species process with `n` particles:
/// `q^{n(n−1)/2} q^{Σ(S^c) − n|S^c|} / p^{Σ(S^c) − |S^c|(|S^c|+1)/2}`.
pub fn coefficient_rightmost_t<T: Real>(m: &ModelParams, n: usize, s: &SubsetIndex) -> T {
    let (p, q) = m.pq::<T>();
    let sc = s.complement();
    let kc = sc.len() as i64;
    let sum_c = sc.sum() as i64;
    let n = n as i64;
    pow_signed(q, n * (n - 1) / 2 + sum_c - n * kc) / pow_signed(p, sum_c - kc * (kc + 1) / 2)
}

pub fn coefficient_rightmost(m: &ModelParams, n: usize, s: &SubsetIndex) -> f64 {
    coefficient_rightmost_t::<f64>(m, n, s)
}

/// Per-slot coefficient `c̃_S` (slot `n` of the second-class particle) whose
/// sum over `n = 1..=N` is `c_S`. Zero when `|S| < N − n`.
pub fn coefficient_c_tilde_t<T: Real>(m: &ModelParams, big_n: usize, s: &SubsetIndex, n: usize) -> T {
    let (p, q) = m.pq::<T>();
    if s.len() + n < big_n {
        return T::zero();
    }
    let sc = s.complement();
    let kc = sc.len() as i64;
    let sum_c = sc.sum() as i64;
    let (nn, ni) = (big_n as i64, n as i64);
    let d = nn - ni;
    let sign = if d % 2 == 0 { T::one() } else { -T::one() };
    let base = sign * pow_signed(q, ni * (ni - 1) / 2);
    if s.contains(big_n) {
        base * pow_signed(p, d * (d + 1) / 2) * pow_signed(q, sum_c - ni * kc)
            / pow_signed(p, sum_c - kc * (kc + 1) / 2)
            * q_binomial_t::<T>(m, s.len() - 1, d as usize)
    } else {
        base * pow_signed(p, d * (d - 1) / 2) * pow_signed(q, sum_c - ni * kc - d)
            / pow_signed(p, sum_c - kc * (kc + 1) / 2 - d)
            * q_binomial_t::<T>(m, s.len(), d as usize)
    }
}

pub fn coefficient_c_tilde(m: &ModelParams, big_n: usize, s: &SubsetIndex, n: usize) -> f64 {
    coefficient_c_tilde_t::<f64>(m, big_n, s, n)
}

/// One line of an identity report.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub evaluations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub tolerance: f64,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Worst error over every check whose name starts with `prefix`.
    pub fn worst(&self, prefix: &str) -> Option<f64> {
        self.checks.iter().filter(|c| c.name.starts_with(prefix)).map(|c| c.max_rel_error).reduce(f64::max)
    }
}

pub const IDENTITY_TOLERANCE: f64 = 1e-10;

type C = Complex<Dd>;

fn rel(lhs: C, rhs: C, scale: f64) -> f64 {
    let d = (lhs - rhs).norm_sqr().as_f64().sqrt();
    let s = lhs.norm_sqr().as_f64().sqrt().max(rhs.norm_sqr().as_f64().sqrt()).max(scale);
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

fn c_one() -> C {
    Complex::new(Dd::from(1.0), Dd::from(0.0))
}

fn random_on_circle(rng: &mut ChaCha8Rng, r: f64, k: usize) -> Vec<C> {
    (0..k)
        .map(|_| {
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            Complex::new(Dd::from(r * th.cos()), Dd::from(r * th.sin()))
        })
        .collect()
}

fn subsets_of_size(n: usize, m: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|mask| mask.count_ones() as usize == m)
        .map(|mask| (1..=n).filter(|u| mask & (1 << (u - 1)) != 0).collect())
        .collect()
}

fn t_product(mp: &ModelParams, x: &[C], set: &[usize]) -> Result<C> {
    let mut acc = c_one();
    for (i, &a) in set.iter().enumerate() {
        for &b in &set[i + 1..] {
            acc = acc * factor_t(mp, x[a - 1], x[b - 1])?;
        }
    }
    Ok(acc)
}

/// Both sides of the subset-sum identity for `∏T` (m-subsets of `{1..n}`).
pub fn lemma_t_sum(mp: &ModelParams, x: &[C], m: usize) -> Result<(C, C, f64)> {
    let n = x.len();
    let all: Vec<usize> = (1..=n).collect();
    let mut lhs = Complex::new(Dd::from(0.0), Dd::from(0.0));
    let mut scale = 0.0;
    for s in subsets_of_size(n, m) {
        let sc: Vec<usize> = all.iter().copied().filter(|u| !s.contains(u)).collect();
        let mut term = t_product(mp, x, &sc)? * t_product(mp, x, &s)?;
        for &a in &s {
            for &b in &sc {
                if a < b {
                    term = term * factor_s(mp, x[a - 1], x[b - 1])?;
                }
            }
        }
        scale += term.norm_sqr().as_f64().sqrt();
        lhs = lhs + term;
    }
    let rhs = t_product(mp, x, &all)? * q_binomial_t::<Dd>(mp, n, m);
    Ok((lhs, rhs, scale))
}

fn tw_product(mp: &ModelParams, x: &[C], a: &[usize]) -> C {
    let (p, q) = mp.pq::<Dd>();
    let n = x.len();
    let mut acc = c_one();
    for &i in a {
        for j in 1..=n {
            if !a.contains(&j) {
                let (xi, xj) = (x[i - 1], x[j - 1]);
                acc = acc * ((xi * xj * q + p - xi) / (xj - xi));
            }
        }
    }
    acc
}

/// Both sides of `Σ_{|A|=m} ∏_{i∈A, j∉A} (p+qξ_iξ_j−ξ_i)/(ξ_j−ξ_i) = [N, m]`.
pub fn tw_binomial_sum(mp: &ModelParams, x: &[C], m: usize) -> (C, C, f64) {
    let n = x.len();
    let mut lhs = Complex::new(Dd::from(0.0), Dd::from(0.0));
    let mut scale = 0.0;
    for a in subsets_of_size(n, m) {
        let t = tw_product(mp, x, &a);
        scale += t.norm_sqr().as_f64().sqrt();
        lhs = lhs + t;
    }
    let rhs = Complex::new(q_binomial_t::<Dd>(mp, n, m), Dd::from(0.0));
    (lhs, rhs, scale)
}

/// Both sides of
/// `Σ_{|A|=m} ∏ (p+qξ_iξ_j−ξ_i)/(ξ_j−ξ_i) (1 − ∏_{A^c} ξ) = q^m [N−1, m] (1 − ∏ ξ)`.
pub fn tw_weighted_sum(mp: &ModelParams, x: &[C], m: usize) -> (C, C, f64) {
    let n = x.len();
    let q = mp.pq::<Dd>().1;
    let mut lhs = Complex::new(Dd::from(0.0), Dd::from(0.0));
    let mut scale = 0.0;
    for a in subsets_of_size(n, m) {
        let prod_c = (1..=n).filter(|j| !a.contains(j)).fold(c_one(), |acc, j| acc * x[j - 1]);
        let t = tw_product(mp, x, &a) * (c_one() - prod_c);
        scale += t.norm_sqr().as_f64().sqrt();
        lhs = lhs + t;
    }
    let all = x.iter().fold(c_one(), |acc, v| acc * *v);
    let rhs = (c_one() - all) * (q.powi(m as i32) * q_binomial_t::<Dd>(mp, n - 1, m));
    (lhs, rhs, scale)
}

/// Both sides of `∏_{i=1}^{l−1}(q^i − p^i) = Σ_k (−1)^k [l−1, k] p^{k(k+1)/2} q^{(l−k)(l−k−1)/2}`.
pub fn alternating_product(mp: &ModelParams, l: usize) -> (Dd, Dd, f64) {
    let (p, q) = mp.pq::<Dd>();
    let lhs = prod_q_minus_p(p, q, l - 1);
    let mut rhs = Dd::from(0.0);
    let mut scale = 0.0;
    for k in 0..l {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = q_binomial_t::<Dd>(mp, l - 1, k)
            * p.powi((k * (k + 1) / 2) as i32)
            * q.powi(((l - k) * (l - k - 1) / 2) as i32)
            * sign;
        scale += term.hi().abs();
        rhs += term;
    }
    (lhs, rhs, scale)
}

/// Both sides of `∏_{k=1}^n (1 + yτ^k) = Σ_k y^k τ^{k(k+1)/2} [n, k]_τ`.
pub fn cauchy_binomial(y: f64, tau: f64, n: usize) -> (f64, f64, f64) {
    let lhs = (1..=n).fold(1.0, |acc, k| acc * (1.0 + y * tau.powi(k as i32)));
    let mut rhs = 0.0;
    let mut scale = 0.0;
    for k in 0..=n {
        let term = y.powi(k as i32) * tau.powi((k * (k + 1) / 2) as i32) * gaussian_binomial(tau, n, k);
        scale += term.abs();
        rhs += term;
    }
    (lhs, rhs, scale)
}

struct Acc {
    name: String,
    worst: f64,
    count: usize,
}

impl Acc {
    fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), worst: 0.0, count: 0 }
    }
    fn push(&mut self, e: f64) {
        self.worst = self.worst.max(if e.is_nan() { f64::INFINITY } else { e });
        self.count += 1;
    }
    fn finish(self, tol: f64) -> IdentityCheck {
        IdentityCheck { name: self.name, max_rel_error: self.worst, evaluations: self.count, passed: self.worst <= tol }
    }
}

/// Evaluates each algebraic identity at `trials` random points per case and
/// reports the worst relative error. Spectral points are drawn uniformly on
/// the circle of radius `p/2`; identities in `(p, q)` alone are evaluated
/// directly. Failures are reported, not raised.
pub fn verify_identities(mp: &ModelParams, n_max: usize, trials: usize, seed: u64) -> Result<IdentityReport> {
    if !(2..=6).contains(&n_max) {
        return Err(Error::InvalidParameter(format!("n_max must be in 2..=6, got {n_max}")));
    }
    let tol = IDENTITY_TOLERANCE;
    let r = mp.p() / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut fq = Acc::new("factor Q = S - pT");
    let mut ft = Acc::new("factor 1 + S = T");
    for _ in 0..trials {
        let x = random_on_circle(&mut rng, r, 2);
        let s = factor_s(mp, x[0], x[1])?;
        let q = factor_q(mp, x[0], x[1])?;
        let pt = factor_pt(mp, x[0], x[1])?;
        let t = factor_t(mp, x[0], x[1])?;
        fq.push(rel(q, s - pt, 0.0));
        ft.push(rel(c_one() + s, t, 0.0));
    }
    checks.push(fq.finish(tol));
    checks.push(ft.finish(tol));

    for n in 2..=n_max {
        let mut lt = Acc::new(format!("T-product subset sum n={n}"));
        let mut tw63 = Acc::new(format!("TW binomial sum N={n}"));
        let mut tw19 = Acc::new(format!("TW weighted sum N={n}"));
        for _ in 0..trials {
            let x = random_on_circle(&mut rng, r, n);
            for m in 0..=n {
                let (a, b, sc) = lemma_t_sum(mp, &x, m)?;
                lt.push(rel(a, b, sc));
                let (a, b, sc) = tw_binomial_sum(mp, &x, m);
                tw63.push(rel(a, b, sc));
                if m < n {
                    let (a, b, sc) = tw_weighted_sum(mp, &x, m);
                    tw19.push(rel(a, b, sc));
                }
            }
        }
        checks.push(lt.finish(tol));
        checks.push(tw63.finish(tol));
        checks.push(tw19.finish(tol));
    }

    let mut ap = Acc::new("alternating product");
    for l in 1..=n_max + 1 {
        let (a, b, sc) = alternating_product(mp, l);
        let d = (a - b).hi().abs();
        let s = a.hi().abs().max(b.hi().abs()).max(sc);
        ap.push(if s == 0.0 { 0.0 } else { d / s });
    }
    checks.push(ap.finish(tol));

    let mut cb = Acc::new("Cauchy binomial");
    for _ in 0..trials {
        let y = rng.random_range(-2.0..2.0);
        let tau = rng.random_range(0.05..2.0);
        for n in 0..=n_max {
            let (a, b, sc) = cauchy_binomial(y, tau, n);
            let s = a.abs().max(b.abs()).max(sc);
            cb.push(if s == 0.0 { 0.0 } else { (a - b).abs() / s });
        }
    }
    checks.push(cb.finish(tol));

    let mut tele = Acc::new("slot coefficients sum to c_S");
    for big_n in 1..=n_max.min(5) {
        for s in SubsetIndex::all_nonempty(big_n) {
            let total = (1..=big_n).fold(Dd::from(0.0), |acc, n| acc + coefficient_c_tilde_t::<Dd>(mp, big_n, &s, n));
            let c = coefficient_c_s_t::<Dd>(mp, big_n, &s);
            let d = (total - c).hi().abs();
            tele.push(if c.hi() == 0.0 { d } else { d / c.hi().abs() });
        }
    }
    checks.push(tele.finish(tol));

    Ok(IdentityReport { tolerance: tol, checks })
}
