//! Scattering factors, reduced words and the matrix elements `[A_σ]_{ν_n,ν_N}`
//! of the two-species model with a single second-class particle.
//!
//! Amplitudes are computed on the sector of species words with exactly one
//! `1`: a length-N vector whose entry `k` is the coefficient of the word with
//! the `1` in slot `k` (0-based here, `ν_{k+1}` in one-based notation).

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::prec::{to_c64, Cdd, Dd, Real};
use crate::qcomb::{IdentityCheck, IdentityReport};

/// Smallest admissible `|p + q ξ_α ξ_β − ξ_α|`.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// Jump bias. `q` is always `1 − p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    p: f64,
    q: f64,
}

impl ModelParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0,1), got {p}")));
        }
        Ok(Self { p, q: 1.0 - p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `(p, q)` in the requested precision, with `q = 1 − p` formed in that
    /// precision.
    pub fn pq<T: Real>(&self) -> (T, T) {
        let p = T::of(self.p);
        (p, T::one() - p)
    }

    pub fn is_symmetric(&self) -> bool {
        self.p == 0.5
    }
}

#[inline]
fn denominator<T: Real>(p: T, q: T, xa: Complex<T>, xb: Complex<T>) -> Result<Complex<T>> {
    let d = xa * xb * q + p - xa;
    if d.norm_sqr().as_f64().sqrt() < DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateDenominator { magnitude: d.norm_sqr().as_f64().sqrt() });
    }
    Ok(d)
}

/// `S_{βα} = −(p + qξ_αξ_β − ξ_β)/(p + qξ_αξ_β − ξ_α)`, with `xa = ξ_α`, `xb = ξ_β`.
pub fn factor_s<T: Real>(m: &ModelParams, xa: Complex<T>, xb: Complex<T>) -> Result<Complex<T>> {
    let (p, q) = m.pq::<T>();
    let d = denominator(p, q, xa, xb)?;
    Ok(-(xa * xb * q + p - xb) / d)
}

/// `T_{βα} = (ξ_β − ξ_α)/(p + qξ_αξ_β − ξ_α)`.
pub fn factor_t<T: Real>(m: &ModelParams, xa: Complex<T>, xb: Complex<T>) -> Result<Complex<T>> {
    let (p, q) = m.pq::<T>();
    let d = denominator(p, q, xa, xb)?;
    Ok((xb - xa) / d)
}

/// `p·T_{βα}`.
pub fn factor_pt<T: Real>(m: &ModelParams, xa: Complex<T>, xb: Complex<T>) -> Result<Complex<T>> {
    Ok(factor_t(m, xa, xb)? * m.pq::<T>().0)
}

/// `q·T_{βα}`.
pub fn factor_qt<T: Real>(m: &ModelParams, xa: Complex<T>, xb: Complex<T>) -> Result<Complex<T>> {
    Ok(factor_t(m, xa, xb)? * m.pq::<T>().1)
}

/// `Q_{βα} = (p − qξ_β)(ξ_α − 1)/(p + qξ_αξ_β − ξ_α)`.
pub fn factor_q<T: Real>(m: &ModelParams, xa: Complex<T>, xb: Complex<T>) -> Result<Complex<T>> {
    let (p, q) = m.pq::<T>();
    let d = denominator(p, q, xa, xb)?;
    let one = T::one();
    Ok((-(xb * q) + p) * (xa - one) / d)
}

/// `P_{βα} = (p − qξ_α)(ξ_β − 1)/(p + qξ_αξ_β − ξ_α)`.
pub fn factor_p<T: Real>(m: &ModelParams, xa: Complex<T>, xb: Complex<T>) -> Result<Complex<T>> {
    let (p, q) = m.pq::<T>();
    let d = denominator(p, q, xa, xb)?;
    let one = T::one();
    Ok((-(xa * q) + p) * (xb - one) / d)
}

/// All five R-matrix entries for one ordered pair, sharing the denominator.
#[derive(Debug, Clone, Copy)]
pub struct Scattering<T> {
    pub s: Complex<T>,
    pub p: Complex<T>,
    pub q: Complex<T>,
    pub pt: Complex<T>,
    pub qt: Complex<T>,
}

impl<T: Real> Scattering<T> {
    pub fn new(m: &ModelParams, xa: Complex<T>, xb: Complex<T>) -> Result<Self> {
        let (p, q) = m.pq::<T>();
        let d = denominator(p, q, xa, xb)?;
        let inv = Complex::new(T::one(), T::zero()) / d;
        let one = T::one();
        let t = (xb - xa) * inv;
        Ok(Self {
            s: -(xa * xb * q + p - xb) * inv,
            p: (-(xa * q) + p) * (xb - one) * inv,
            q: (-(xb * q) + p) * (xa - one) * inv,
            pt: t * p,
            qt: t * q,
        })
    }
}

/// An adjacent transposition acting on slots `slot, slot+1` (0-based) that
/// interchanges the values `alpha < beta`, leaving `beta` in front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transposition {
    pub slot: usize,
    pub beta: usize,
    pub alpha: usize,
}

/// A permutation in one-line notation over `1..=N`: `images[i] = σ(i+1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            if v == 0 || v > n || seen[v - 1] {
                return Err(Error::InvalidParameter(format!("{images:?} is not a permutation of 1..={n}")));
            }
            seen[v - 1] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(n: usize) -> Self {
        Self { images: (1..=n).collect() }
    }

    /// Parses one-line notation such as `"312"` (single digits only).
    pub fn parse(s: &str) -> Result<Self> {
        let images = s
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidParameter(format!("bad permutation {s:?}")))?;
        Self::new(images)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `σ(i)` for one-based `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.images[i - 1]
    }

    /// `σ^{-1}(v)` for one-based `v`.
    pub fn inverse_of(&self, v: usize) -> usize {
        self.images.iter().position(|&x| x == v).unwrap() + 1
    }

    /// Pairs `(β, α)` with `β > α` and `β` left of `α`.
    pub fn inversions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.images.len() {
            for j in i + 1..self.images.len() {
                if self.images[i] > self.images[j] {
                    out.push((self.images[i], self.images[j]));
                }
            }
        }
        out
    }

    pub fn all(n: usize) -> Vec<Permutation> {
        fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
            let n = used.len();
            if cur.len() == n {
                out.push(Permutation { images: cur.clone() });
                return;
            }
            for v in 1..=n {
                if !used[v - 1] {
                    used[v - 1] = true;
                    cur.push(v);
                    rec(cur, used, out);
                    cur.pop();
                    used[v - 1] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], &mut out);
        out
    }
}

impl std::fmt::Display for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.images {
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A permutation together with a reduced factorization into labelled
/// adjacent transpositions. `steps` is in application order: starting from
/// the identity arrangement, applying `steps[0]`, then `steps[1]`, ... yields
/// the one-line word of `sigma`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationWord {
    pub sigma: Permutation,
    pub steps: Vec<Transposition>,
}

impl PermutationWord {
    /// Replays the word on `1..=N` and checks it ends at `sigma` with every
    /// step swapping an ascending pair.
    pub fn is_valid(&self) -> bool {
        let mut arr: Vec<usize> = (1..=self.sigma.len()).collect();
        for st in &self.steps {
            if st.slot + 1 >= arr.len() || arr[st.slot] != st.alpha || arr[st.slot + 1] != st.beta {
                return false;
            }
            arr.swap(st.slot, st.slot + 1);
        }
        arr == self.sigma.images && self.steps.len() == self.sigma.inversions().len()
    }
}

/// Reduced word by bubble sort: repeatedly undo the leftmost descent of σ
/// until the identity is reached, then read the undo steps backwards.
pub fn reduced_word(sigma: &Permutation) -> PermutationWord {
    let mut arr = sigma.images.clone();
    let mut undo = Vec::new();
    while let Some(i) = (0..arr.len().saturating_sub(1)).find(|&i| arr[i] > arr[i + 1]) {
        undo.push(Transposition { slot: i, beta: arr[i], alpha: arr[i + 1] });
        arr.swap(i, i + 1);
    }
    undo.reverse();
    PermutationWord { sigma: sigma.clone(), steps: undo }
}

/// Every reduced word of σ, by exhaustive descent removal. Exponential; meant
/// for small N.
pub fn all_reduced_words(sigma: &Permutation) -> Vec<PermutationWord> {
    fn rec(arr: &mut Vec<usize>, undo: &mut Vec<Transposition>, sigma: &Permutation, out: &mut Vec<PermutationWord>) {
        let descents: Vec<usize> = (0..arr.len().saturating_sub(1)).filter(|&i| arr[i] > arr[i + 1]).collect();
        if descents.is_empty() {
            let mut steps = undo.clone();
            steps.reverse();
            out.push(PermutationWord { sigma: sigma.clone(), steps });
            return;
        }
        for i in descents {
            undo.push(Transposition { slot: i, beta: arr[i], alpha: arr[i + 1] });
            arr.swap(i, i + 1);
            rec(arr, undo, sigma, out);
            arr.swap(i, i + 1);
            undo.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut sigma.images.clone(), &mut Vec::new(), sigma, &mut out);
    out
}

/// Column `A_σ e_{ν_N}` restricted to the one-second-class-particle sector.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorState<T> {
    amps: Vec<Complex<T>>,
}

impl<T: Real> SectorState<T> {
    /// The basis vector `e_{ν_N}` (the `1` in the last slot).
    pub fn initial(n: usize) -> Self {
        let mut amps = vec![Complex::new(T::zero(), T::zero()); n];
        amps[n - 1] = Complex::new(T::one(), T::zero());
        Self { amps }
    }

    pub fn amps(&self) -> &[Complex<T>] {
        &self.amps
    }

    /// Coefficient of `ν_n` (one-based `n`).
    pub fn get(&self, n: usize) -> Complex<T> {
        self.amps[n - 1]
    }

    /// Applies `R_{βα}` at slots `(slot, slot+1)`. Words with the `1`
    /// elsewhere pick up `S`; the two words with the `1` inside the pair mix
    /// through the 2×2 block.
    pub fn apply(&mut self, slot: usize, f: &Scattering<T>) {
        let a = self.amps[slot];
        let b = self.amps[slot + 1];
        for (k, v) in self.amps.iter_mut().enumerate() {
            if k != slot && k != slot + 1 {
                *v = *v * f.s;
            }
        }
        self.amps[slot] = f.p * a + f.pt * b;
        self.amps[slot + 1] = f.qt * a + f.q * b;
    }
}

fn check_spectral<T: Real>(spectral: &[Complex<T>], n: usize) -> Result<()> {
    if spectral.len() != n {
        return Err(Error::InvalidParameter(format!("expected {n} spectral variables, got {}", spectral.len())));
    }
    Ok(())
}

/// The full sector column `A_σ e_{ν_N}` for a reduced word.
pub fn sector_column<T: Real>(
    m: &ModelParams,
    word: &PermutationWord,
    spectral: &[Complex<T>],
) -> Result<SectorState<T>> {
    let n = word.sigma.len();
    check_spectral(spectral, n)?;
    let mut st = SectorState::initial(n);
    for step in &word.steps {
        let f = Scattering::new(m, spectral[step.alpha - 1], spectral[step.beta - 1])?;
        st.apply(step.slot, &f);
    }
    Ok(st)
}

/// `[A_σ]_{ν_n, ν_N}` at the spectral point `spectral[i] = ξ_{i+1}`.
pub fn amplitude<T: Real>(
    m: &ModelParams,
    word: &PermutationWord,
    spectral: &[Complex<T>],
    n: usize,
) -> Result<Complex<T>> {
    let len = word.sigma.len();
    if n == 0 || n > len {
        return Err(Error::InvalidParameter(format!("n = {n} outside 1..={len}")));
    }
    if word.sigma.inverse_of(len) > n {
        check_spectral(spectral, len)?;
        return Ok(Complex::new(T::zero(), T::zero()));
    }
    Ok(sector_column(m, word, spectral)?.get(n))
}

/// Single-species amplitude: the product of `S_{βα}` over the inversions of σ.
pub fn amplitude_single_species<T: Real>(
    m: &ModelParams,
    sigma: &Permutation,
    spectral: &[Complex<T>],
) -> Result<Complex<T>> {
    check_spectral(spectral, sigma.len())?;
    let mut acc = Complex::new(T::one(), T::zero());
    for (b, a) in sigma.inversions() {
        acc = acc * factor_s(m, spectral[a - 1], spectral[b - 1])?;
    }
    Ok(acc)
}

/// Sign of a component in the split `[A_σ] = [A_σ]^+ + [A_σ]^-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// `[A_σ]^±_{ν_n, 221}` for three particles.
///
/// The `+` part replaces the `Q` factor of an entry by `S`, the `−` part by
/// `−pT`. Entries with no `Q` are entirely `+`. Only N = 3 is tabulated.
pub fn component_amplitude_n3<T: Real>(
    m: &ModelParams,
    sigma: &Permutation,
    spectral: &[Complex<T>],
    n: usize,
    sign: Sign,
) -> Result<Complex<T>> {
    if sigma.len() != 3 {
        return Err(Error::UnsupportedSize { n: sigma.len(), reason: "the ± split is tabulated for N = 3 only" });
    }
    check_spectral(spectral, 3)?;
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!("n = {n} outside 1..=3")));
    }
    let x = |i: usize| spectral[i - 1];
    let s = |b: usize, a: usize| factor_s(m, x(a), x(b));
    let pt = |b: usize, a: usize| factor_pt(m, x(a), x(b));
    let one = Complex::new(T::one(), T::zero());
    let zero = Complex::new(T::zero(), T::zero());
    use Sign::*;
    let v = match (sigma.images(), n, sign) {
        ([1, 2, 3], 3, Plus) => one,
        ([2, 1, 3], 3, Plus) => s(2, 1)?,
        ([1, 3, 2], 3, Plus) => s(3, 2)?,
        ([1, 3, 2], 3, Minus) => -pt(3, 2)?,
        ([1, 3, 2], 2, Plus) => pt(3, 2)?,
        ([2, 3, 1], 3, Plus) => s(2, 1)? * s(3, 1)?,
        ([2, 3, 1], 3, Minus) => -pt(3, 1)? * s(2, 1)?,
        ([2, 3, 1], 2, Plus) => pt(3, 1)? * s(2, 1)?,
        ([3, 1, 2], 3, Plus) => s(3, 1)? * s(3, 2)?,
        ([3, 1, 2], 3, Minus) => -pt(3, 2)? * s(3, 1)?,
        ([3, 1, 2], 2, Plus) => pt(3, 2)? * s(3, 1)?,
        ([3, 1, 2], 2, Minus) => -pt(3, 1)? * pt(3, 2)?,
        ([3, 1, 2], 1, Plus) => pt(3, 1)? * pt(3, 2)?,
        ([3, 2, 1], 3, Plus) => s(2, 1)? * s(3, 2)? * s(3, 1)?,
        ([3, 2, 1], 3, Minus) => -pt(3, 1)? * s(2, 1)? * s(3, 2)?,
        ([3, 2, 1], 2, Plus) => pt(3, 1)? * s(2, 1)? * s(3, 2)?,
        ([3, 2, 1], 2, Minus) => -pt(3, 2)? * pt(3, 1)? * s(2, 1)?,
        ([3, 2, 1], 1, Plus) => pt(3, 2)? * pt(3, 1)? * s(2, 1)?,
        _ => zero,
    };
    Ok(v)
}

/// `[A_σ]_{ν_n, 221}` at three particles, written out entry by entry from
/// the factors (the closed-form table the recursion must reproduce).
pub fn table_one_entry<T: Real>(
    m: &ModelParams,
    sigma: &Permutation,
    spectral: &[Complex<T>],
    n: usize,
) -> Result<Complex<T>> {
    if sigma.len() != 3 {
        return Err(Error::UnsupportedSize { n: sigma.len(), reason: "the closed-form table is for N = 3" });
    }
    check_spectral(spectral, 3)?;
    let x = |i: usize| spectral[i - 1];
    let s = |b: usize, a: usize| factor_s(m, x(a), x(b));
    let q = |b: usize, a: usize| factor_q(m, x(a), x(b));
    let pt = |b: usize, a: usize| factor_pt(m, x(a), x(b));
    let zero = Complex::new(T::zero(), T::zero());
    Ok(match (sigma.images(), n) {
        ([1, 2, 3], 3) => Complex::new(T::one(), T::zero()),
        ([2, 1, 3], 3) => s(2, 1)?,
        ([1, 3, 2], 3) => q(3, 2)?,
        ([1, 3, 2], 2) => pt(3, 2)?,
        ([2, 3, 1], 3) => s(2, 1)? * q(3, 1)?,
        ([2, 3, 1], 2) => pt(3, 1)? * s(2, 1)?,
        ([3, 1, 2], 3) => s(3, 1)? * q(3, 2)?,
        ([3, 1, 2], 2) => pt(3, 2)? * q(3, 1)?,
        ([3, 1, 2], 1) => pt(3, 1)? * pt(3, 2)?,
        ([3, 2, 1], 3) => s(2, 1)? * s(3, 2)? * q(3, 1)?,
        ([3, 2, 1], 2) => pt(3, 1)? * s(2, 1)? * q(3, 2)?,
        ([3, 2, 1], 1) => pt(3, 2)? * pt(3, 1)? * s(2, 1)?,
        (_, 1..=3) => zero,
        _ => return Err(Error::InvalidParameter(format!("n = {n} outside 1..=3"))),
    })
}

/// Tolerance of [`verify_structure`].
pub const STRUCTURE_TOLERANCE: f64 = 1e-12;

/// Checks the amplitude recursion at random points on the circle of radius
/// `p/2`: the three-particle table, the `±` split, independence of the
/// reduced word (N ≤ 4), and the exact vanishing of `[A_σ]_{ν_n,ν_N}` when
/// `σ^{-1}(N) > n` (N ≤ 4).
pub fn verify_structure(m: &ModelParams, trials: usize, seed: u64) -> Result<IdentityReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = m.p() / 2.0;
    let mut point = |k: usize| -> Vec<Cdd> {
        (0..k)
            .map(|_| {
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                Complex::new(Dd::from(r * th.cos()), Dd::from(r * th.sin()))
            })
            .collect()
    };
    let rel = |a: Cdd, b: Cdd| {
        let d = to_c64(a - b).norm();
        let s = to_c64(a).norm().max(to_c64(b).norm());
        if s == 0.0 {
            d
        } else {
            d / s
        }
    };
    let tol = STRUCTURE_TOLERANCE;
    let mut checks = Vec::new();
    let mut push = |name: &str, worst: f64, count: usize| {
        checks.push(IdentityCheck {
            name: name.to_string(),
            max_rel_error: worst,
            evaluations: count,
            passed: worst <= tol,
        });
    };

    let (mut t1, mut t2, mut c1, mut c2) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..trials {
        let x = point(3);
        for sigma in Permutation::all(3) {
            let col = sector_column(m, &reduced_word(&sigma), &x)?;
            for n in 1..=3 {
                let want = table_one_entry(m, &sigma, &x, n)?;
                t1 = t1.max(rel(col.get(n), want));
                c1 += 1;
                let plus = component_amplitude_n3(m, &sigma, &x, n, Sign::Plus)?;
                let minus = component_amplitude_n3(m, &sigma, &x, n, Sign::Minus)?;
                t2 = t2.max(rel(plus + minus, want));
                c2 += 1;
            }
        }
    }
    push("three-particle amplitude table", t1, c1);
    push("plus/minus split sums to the amplitude", t2, c2);

    for n in 2..=4 {
        let (mut braid, mut vanish, mut cb, mut cv) = (0.0f64, 0.0f64, 0, 0);
        for _ in 0..trials.min(10) {
            let x = point(n);
            for sigma in Permutation::all(n) {
                let words = all_reduced_words(&sigma);
                let base = sector_column(m, &words[0], &x)?;
                for w in &words[1..] {
                    let col = sector_column(m, w, &x)?;
                    for k in 1..=n {
                        braid = braid.max(rel(col.get(k), base.get(k)));
                        cb += 1;
                    }
                }
                for k in 1..sigma.inverse_of(n) {
                    vanish = vanish.max(to_c64(base.get(k)).norm());
                    cv += 1;
                }
            }
        }
        push(&format!("braid consistency N={n}"), braid, cb);
        push(&format!("vanishing rule N={n}"), vanish, cv);
    }
    Ok(IdentityReport { tolerance: tol, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn random_point(rng: &mut ChaCha8Rng, r: f64) -> C {
        C::from_polar(r * rng.random_range(0.2..1.0), rng.random_range(0.0..std::f64::consts::TAU))
    }

    fn params() -> ModelParams {
        ModelParams::new(0.7).unwrap()
    }

    #[test]
    fn model_params_rejects_endpoints() {
        assert!(ModelParams::new(0.0).is_err());
        assert!(ModelParams::new(1.0).is_err());
        assert!(ModelParams::new(f64::NAN).is_err());
        let m = ModelParams::new(0.3).unwrap();
        let (p, q) = m.pq::<crate::prec::Dd>();
        assert_eq!(p + q, crate::prec::Dd::from(1.0));
    }

    #[test]
    fn factor_special_values() {
        let m = params();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = C::new(1.0, 0.0);
        for _ in 0..20 {
            let a = random_point(&mut rng, 0.35);
            let s = factor_s(&m, a, one).unwrap();
            assert!((s - C::new(m.q() / m.p(), 0.0)).norm() < 1e-13);
            assert!((factor_pt(&m, a, one).unwrap() - one).norm() < 1e-13);
        }
    }

    #[test]
    fn factor_relations() {
        let m = params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a = random_point(&mut rng, 0.35);
            let b = random_point(&mut rng, 0.35);
            let s = factor_s(&m, a, b).unwrap();
            let q = factor_q(&m, a, b).unwrap();
            let pt = factor_pt(&m, a, b).unwrap();
            let t = factor_t(&m, a, b).unwrap();
            assert!((q - (s - pt)).norm() < 1e-13);
            assert!((C::new(1.0, 0.0) + s - t).norm() < 1e-13);
            let sc = Scattering::new(&m, a, b).unwrap();
            assert!((sc.p - factor_p(&m, a, b).unwrap()).norm() < 1e-13);
            assert!((sc.qt - factor_qt(&m, a, b).unwrap()).norm() < 1e-13);
        }
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        let m = params();
        // p + qξ_αξ_β − ξ_α = 0 at ξ_β = 0, ξ_α = p
        let err = factor_s(&m, C::new(0.7, 0.0), C::new(0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateDenominator { .. }));
    }

    #[test]
    fn reduced_word_examples() {
        let id = Permutation::identity(4);
        assert!(reduced_word(&id).steps.is_empty());
        let w = reduced_word(&Permutation::parse("321").unwrap());
        let expect = vec![
            Transposition { slot: 0, beta: 2, alpha: 1 },
            Transposition { slot: 1, beta: 3, alpha: 1 },
            Transposition { slot: 0, beta: 3, alpha: 2 },
        ];
        assert_eq!(w.steps, expect);
        for s in Permutation::all(4) {
            let w = reduced_word(&s);
            assert!(w.is_valid(), "{s}");
            for w in all_reduced_words(&s) {
                assert!(w.is_valid(), "{s}");
            }
        }
        assert_eq!(all_reduced_words(&Permutation::parse("321").unwrap()).len(), 2);
        assert_eq!(all_reduced_words(&Permutation::parse("4321").unwrap()).len(), 16);
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![1, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
        assert!(Permutation::parse("1a").is_err());
        let s = Permutation::parse("312").unwrap();
        assert_eq!(s.apply(1), 3);
        assert_eq!(s.inverse_of(3), 1);
        assert_eq!(s.inversions(), vec![(3, 1), (3, 2)]);
        assert_eq!(Permutation::all(4).len(), 24);
    }

    #[test]
    fn table_one_entries() {
        let m = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<C> = (0..3).map(|_| random_point(&mut rng, 0.35)).collect();
            for sigma in ["123", "213", "132", "231", "312", "321"] {
                let w = reduced_word(&Permutation::parse(sigma).unwrap());
                for n in 1..=3 {
                    let got = amplitude(&m, &w, &x, n).unwrap();
                    let want = table_one_entry(&m, &Permutation::parse(sigma).unwrap(), &x, n).unwrap();
                    assert!((got - want).norm() <= 1e-12 * want.norm().max(1e-300), "{sigma} n={n}");
                }
            }
        }
    }

    #[test]
    fn components_sum_to_amplitude() {
        let m = params();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<C> = (0..3).map(|_| random_point(&mut rng, 0.35)).collect();
            for sigma in Permutation::all(3) {
                let w = reduced_word(&sigma);
                for n in 1..=3 {
                    let plus = component_amplitude_n3(&m, &sigma, &x, n, Sign::Plus).unwrap();
                    let minus = component_amplitude_n3(&m, &sigma, &x, n, Sign::Minus).unwrap();
                    let full = amplitude(&m, &w, &x, n).unwrap();
                    assert!((plus + minus - full).norm() < 1e-12 * (1.0 + full.norm()));
                }
            }
        }
        let s = Permutation::parse("132").unwrap();
        let x = [C::new(0.1, 0.2), C::new(-0.2, 0.1), C::new(0.3, -0.05)];
        let v = component_amplitude_n3(&m, &s, &x, 3, Sign::Minus).unwrap();
        assert!((v + factor_pt(&m, x[1], x[2]).unwrap()).norm() < 1e-15);
        assert!(component_amplitude_n3(&m, &Permutation::identity(4), &[x[0]; 4], 4, Sign::Plus).is_err());
    }

    #[test]
    fn vanishing_rule_is_exact() {
        let m = params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for big_n in 2..=4 {
            let x: Vec<C> = (0..big_n).map(|_| random_point(&mut rng, 0.35)).collect();
            for sigma in Permutation::all(big_n) {
                // evaluate the column directly, bypassing the shortcut
                let col = sector_column(&m, &reduced_word(&sigma), &x).unwrap();
                for n in 1..=big_n {
                    if sigma.inverse_of(big_n) > n {
                        assert_eq!(col.get(n), C::new(0.0, 0.0), "{sigma} n={n}");
                    }
                }
            }
        }
    }

    #[test]
    fn structure_report_passes() {
        let rep = verify_structure(&params(), 20, 7).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
        assert_eq!(rep.checks.len(), 8);
    }

    #[test]
    fn single_species_matches_plus_part() {
        let m = params();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let x: Vec<C> = (0..3).map(|_| random_point(&mut rng, 0.35)).collect();
            for sigma in Permutation::all(3) {
                let single = amplitude_single_species(&m, &sigma, &x).unwrap();
                let plus = component_amplitude_n3(&m, &sigma, &x, 3, Sign::Plus).unwrap();
                assert!((single - plus).norm() < 1e-12 * (1.0 + single.norm()));
                if sigma.apply(3) == 3 {
                    let full = amplitude(&m, &reduced_word(&sigma), &x, 3).unwrap();
                    assert!((single - full).norm() < 1e-12 * (1.0 + single.norm()));
                }
            }
        }
        let x = [C::new(0.1, 0.0), C::new(0.2, 0.1)];
        let s21 = amplitude_single_species(&m, &Permutation::parse("21").unwrap(), &x).unwrap();
        assert_eq!(s21, factor_s(&m, x[0], x[1]).unwrap());
    }
}
