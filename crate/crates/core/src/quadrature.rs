//! Trapezoid rule on products of circles centred at the origin.
//!
//! A contour integral `(1/2πi)∮ f(ξ) dξ` over `|ξ| = r` becomes
//! `(1/M) Σ_j f(ξ_j) ξ_j` with `ξ_j = r·ω^j`, `ω = e^{2πi/M}`, which converges
//! geometrically for integrands analytic on an annulus around the circle.
//! Every result also carries the value on the half grid (even nodes only) so
//! the caller can see how settled the rule is.

use num_complex::{Complex, Complex64};
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::ModelParams;
use crate::error::{Error, Result};
use crate::prec::{cpowi, to_c64, Real};

/// Largest number of simultaneous contour variables.
pub const MAX_DIM: usize = 5;

/// A circle of radius `radius` sampled at `nodes` equally spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contour {
    radius: f64,
    nodes: usize,
}

impl Contour {
    /// `nodes` must be even (the half grid reuses the even nodes) and at
    /// least 2; `radius` must lie in (0, 1).
    pub fn new(radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::InvalidContour(format!("radius {radius} outside (0,1)")));
        }
        if nodes < 2 || !nodes.is_multiple_of(2) {
            return Err(Error::InvalidContour(format!("node count {nodes} must be even and >= 2")));
        }
        Ok(Self { radius, nodes })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// `r(1 + q r) < p`: keeps every `p + qξξ' − ξ` away from zero when both
    /// variables lie on the circle.
    pub fn is_admissible(&self, m: &ModelParams) -> bool {
        self.radius * (1.0 + m.q() * self.radius) < m.p()
    }

    pub fn check_admissible(&self, m: &ModelParams) -> Result<()> {
        if self.is_admissible(m) {
            Ok(())
        } else {
            Err(Error::InvalidContour(format!("radius {} violates r(1+qr) < p for p = {}", self.radius, m.p())))
        }
    }

    /// The nodes `ξ_j`, `j = 0..M`.
    pub fn points<T: Real>(&self) -> Vec<Complex<T>> {
        let r = T::of(self.radius);
        (0..self.nodes).map(|j| T::root_of_unity(j as i64, self.nodes) * r).collect()
    }

    /// `ω^j` for `j = 0..M`.
    pub fn roots<T: Real>(&self) -> Vec<Complex<T>> {
        (0..self.nodes).map(|j| T::root_of_unity(j as i64, self.nodes)).collect()
    }
}

/// Default node count per dimension. The far left tail (large negative
/// `x − y`) is what sets the counts; at five variables `M^5` caps it and the
/// far tail is not resolved.
pub fn default_nodes(dim: usize) -> usize {
    match dim {
        0..=2 => 128,
        3 => 96,
        4 => 80,
        _ => 40,
    }
}

/// Default radius: `p/2`, pulled in to `0.43·p` at five variables where the
/// coarser grid is limited by the pole side rather than by roundoff.
pub fn default_radius(m: &ModelParams, dim: usize) -> f64 {
    if dim >= 5 {
        0.43 * m.p()
    } else {
        m.p() / 2.0
    }
}

/// Optional overrides of radius and node count; unset fields take the
/// defaults for the dimension at hand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ContourSettings {
    pub radius: Option<f64>,
    pub nodes: Option<usize>,
}

impl ContourSettings {
    pub fn new(radius: Option<f64>, nodes: Option<usize>) -> Self {
        Self { radius, nodes }
    }

    pub fn fixed(c: Contour) -> Self {
        Self { radius: Some(c.radius), nodes: Some(c.nodes) }
    }

    pub fn resolve(&self, m: &ModelParams, dim: usize) -> Result<Contour> {
        let c = Contour::new(
            self.radius.unwrap_or_else(|| default_radius(m, dim)),
            self.nodes.unwrap_or_else(|| default_nodes(dim)),
        )?;
        c.check_admissible(m)?;
        Ok(c)
    }
}

/// Value of a contour integral with its half-grid discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: Complex64,
    /// `|value_M − value_{M/2}|`.
    pub error_estimate: f64,
    /// Nodes per variable.
    pub nodes_used: usize,
}

impl QuadratureResult {
    pub fn zero(nodes: usize) -> Self {
        Self { value: Complex64::new(0.0, 0.0), error_estimate: 0.0, nodes_used: nodes }
    }

    pub(crate) fn from_pair<T: Real>(full: Complex<T>, half: Complex<T>, nodes: usize) -> Self {
        let value = to_c64(full);
        let error_estimate = to_c64(full - half).norm();
        Self { value, error_estimate, nodes_used: nodes }
    }
}

impl std::ops::Add for QuadratureResult {
    type Output = QuadratureResult;
    fn add(self, o: Self) -> Self {
        Self {
            value: self.value + o.value,
            error_estimate: self.error_estimate + o.error_estimate,
            nodes_used: self.nodes_used.max(o.nodes_used),
        }
    }
}

fn check_finite<T: Real>(z: Complex<T>) -> Result<()> {
    let f = to_c64(z);
    if f.re.is_finite() && f.im.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteIntegrand)
    }
}

fn check_dim(k: usize) -> Result<()> {
    if k > MAX_DIM {
        Err(Error::DimensionTooLarge { dim: k, max: MAX_DIM })
    } else {
        Ok(())
    }
}

/// Full and half-grid sums for a generic integrand. The outermost variable
/// is split across threads; partial sums are merged in index order.
fn tensor_sum<T, F>(f: &F, k: usize, contour: &Contour) -> Result<(Complex<T>, Complex<T>)>
where
    T: Real,
    F: Fn(&[Complex<T>]) -> Complex<T> + Sync,
{
    check_dim(k)?;
    let m = contour.nodes;
    let pts = contour.points::<T>();
    let zero = Complex::new(T::zero(), T::zero());
    if k == 0 {
        let v = f(&[]);
        check_finite(v)?;
        return Ok((v, v));
    }
    let partial: Vec<Result<(Complex<T>, Complex<T>)>> = (0..m)
        .into_par_iter()
        .map(|j0| {
            let mut idx = vec![0usize; k];
            idx[0] = j0;
            let mut xi = vec![zero; k];
            let mut full = zero;
            let mut half = zero;
            loop {
                for (d, &j) in idx.iter().enumerate() {
                    xi[d] = pts[j];
                }
                let jac = xi.iter().fold(Complex::new(T::one(), T::zero()), |a, b| a * *b);
                let v = f(&xi) * jac;
                check_finite(v)?;
                full = full + v;
                if idx.iter().all(|j| j % 2 == 0) {
                    half = half + v;
                }
                // odometer over dimensions 1..k
                let mut d = k;
                loop {
                    if d == 1 {
                        return Ok((full, half));
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < m {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        })
        .collect();
    let mut full = zero;
    let mut half = zero;
    for p in partial {
        let (a, b) = p?;
        full = full + a;
        half = half + b;
    }
    let scale_full = T::of(m as f64).powi(k as i32);
    let scale_half = T::of((m / 2) as f64).powi(k as i32);
    Ok((full / scale_full, half / scale_half))
}

/// `(1/2πi)^k ∮⋯∮ f(ξ_1..ξ_k) dξ` over `|ξ_i| = r` in double precision.
pub fn integrate_polydisc<F>(f: F, k: usize, contour: &Contour) -> Result<QuadratureResult>
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    let (full, half) = tensor_sum::<f64, _>(&f, k, contour)?;
    Ok(QuadratureResult::from_pair(full, half, contour.nodes))
}

/// Same as [`integrate_polydisc`] in a caller-chosen precision.
pub fn integrate_polydisc_t<T, F>(f: F, k: usize, contour: &Contour) -> Result<QuadratureResult>
where
    T: Real,
    F: Fn(&[Complex<T>]) -> Complex<T> + Sync,
{
    let (full, half) = tensor_sum::<T, _>(&f, k, contour)?;
    Ok(QuadratureResult::from_pair(full, half, contour.nodes))
}

/// Node sums of a product integrand
/// `G(ξ) = ∏_d E_d(ξ_d) · ∏_{a<b} P(ξ_a, ξ_b)`, binned by `Σ_d j_d mod M`.
///
/// Once built, `∮⋯∮ G(ξ) (∏_d ξ_d)^z dξ/(2πi)^k` is available for every
/// integer `z` at the cost of one length-M sum, because on the grid
/// `(∏ ξ_d)^z = r^{kz} ω^{z Σ j_d}`. The `E_d` tables must already include
/// the `ξ_d` Jacobian.
#[derive(Debug, Clone)]
pub struct ClassSums<T> {
    contour: Contour,
    dim: usize,
    full: Vec<Complex<T>>,
    half: Vec<Complex<T>>,
    roots: Vec<Complex<T>>,
}

impl<T: Real> ClassSums<T> {
    /// `single[d][j] = E_d(ξ_j)`, `pair[i][j] = P(ξ_i, ξ_j)` (used for every
    /// ordered pair of variables `a < b` as `P(ξ_a, ξ_b)`), or no pair factor.
    pub fn build(contour: &Contour, single: &[Vec<Complex<T>>], pair: Option<&[Vec<Complex<T>>]>) -> Result<Self> {
        let k = single.len();
        check_dim(k)?;
        let m = contour.nodes;
        let zero = Complex::new(T::zero(), T::zero());
        for row in single {
            if row.len() != m {
                return Err(Error::InvalidParameter("single-variable table has the wrong length".into()));
            }
            for v in row {
                check_finite(*v)?;
            }
        }
        let roots = contour.roots::<T>();
        if k == 0 {
            let mut full = vec![zero; m];
            full[0] = Complex::new(T::one(), T::zero());
            let half = full.clone();
            return Ok(Self { contour: *contour, dim: 0, full, half, roots });
        }
        #[allow(clippy::type_complexity)]
        let parts: Vec<(Vec<Complex<T>>, Vec<Complex<T>>)> = (0..m)
            .into_par_iter()
            .map(|j0| {
                let mut full = vec![zero; m];
                let mut half = vec![zero; m];
                let mut idx = vec![0usize; k];
                idx[0] = j0;
                let mut prod = vec![zero; k];
                prod[0] = single[0][j0];
                recurse(single, pair, m, 1, &mut idx, &mut prod, j0, j0 % 2 == 0, &mut full, &mut half);
                (full, half)
            })
            .collect();
        let mut full = vec![zero; m];
        let mut half = vec![zero; m];
        for (f, h) in parts {
            for s in 0..m {
                full[s] = full[s] + f[s];
                half[s] = half[s] + h[s];
            }
        }
        Ok(Self { contour: *contour, dim: k, full, half, roots })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contour(&self) -> &Contour {
        &self.contour
    }

    /// Full-grid and half-grid values of the integral with the extra factor
    /// `(∏ ξ_d)^z`.
    pub fn eval(&self, z: i64) -> (Complex<T>, Complex<T>) {
        let m = self.contour.nodes;
        let k = self.dim as i32;
        let zero = Complex::new(T::zero(), T::zero());
        let mut full = zero;
        let mut half = zero;
        let zm = z.rem_euclid(m as i64) as usize;
        for s in 0..m {
            let w = self.roots[(zm * s) % m];
            full = full + self.full[s] * w;
            if s % 2 == 0 {
                half = half + self.half[s] * w;
            }
        }
        let rz = T::of(self.contour.radius).powi(k * z as i32);
        let scale_full = T::of(m as f64).powi(k);
        let scale_half = T::of((m / 2) as f64).powi(k);
        (full * (rz / scale_full), half * (rz / scale_half))
    }

    /// [`eval`](Self::eval) packaged as a [`QuadratureResult`].
    pub fn result(&self, z: i64) -> QuadratureResult {
        let (f, h) = self.eval(z);
        QuadratureResult::from_pair(f, h, self.contour.nodes)
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Real>(
    single: &[Vec<Complex<T>>],
    pair: Option<&[Vec<Complex<T>>]>,
    m: usize,
    depth: usize,
    idx: &mut [usize],
    prod: &mut [Complex<T>],
    class: usize,
    even: bool,
    full: &mut [Complex<T>],
    half: &mut [Complex<T>],
) {
    let k = single.len();
    if depth == k {
        // only reached for k == 1
        full[class % m] = full[class % m] + prod[0];
        if even {
            half[class % m] = half[class % m] + prod[0];
        }
        return;
    }
    let last = depth + 1 == k;
    let base = prod[depth - 1];
    for j in 0..m {
        let mut v = single[depth][j];
        if let Some(pt) = pair {
            for &ja in &idx[..depth] {
                v = v * pt[ja][j];
            }
        }
        let v = base * v;
        let c = (class + j) % m;
        let ev = even && j % 2 == 0;
        if last {
            full[c] = full[c] + v;
            if ev {
                half[c] = half[c] + v;
            }
        } else {
            idx[depth] = j;
            prod[depth] = v;
            recurse(single, pair, m, depth + 1, idx, prod, c, ev, full, half);
        }
    }
}

/// `ξ^n` on every node: `r^n ω^{jn}`.
pub fn node_powers<T: Real>(contour: &Contour, n: i64) -> Vec<Complex<T>> {
    let m = contour.nodes as i64;
    let rn = T::of(contour.radius).powi(n as i32);
    (0..m).map(|j| T::root_of_unity((j * n).rem_euclid(m), contour.nodes) * rn).collect()
}

/// `z^n`, re-exported for integrand writers.
pub fn pow<T: Real>(z: Complex<T>, n: i64) -> Complex<T> {
    cpowi(z, n)
}
