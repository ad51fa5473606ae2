//! Scalar backends. `f64` for the cheap paths and a double-double type for the
//! quadrature kernels, whose integrands reach 1e20 or more on the contour while
//! the probabilities they produce are of order one or smaller.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Rem, Sub, SubAssign};

use num_complex::Complex;
use num_traits::{Num, One, Zero};
use twofloat::TwoFloat;

/// Double-double real (about 32 significant digits).
///
/// Addition and multiplication come from `twofloat`. Its double-double
/// division only returns a double-precision quotient, so `Div` here adds one
/// correction step.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct Dd(TwoFloat);

/// Double-double complex.
pub type Cdd = Complex<Dd>;

impl Dd {
    pub const fn from_tf(x: TwoFloat) -> Self {
        Dd(x)
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.0.hi()
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.0.lo()
    }

    pub fn abs(self) -> Self {
        if self.hi() < 0.0 {
            -self
        } else {
            self
        }
    }

    pub const PI: Dd = Dd(twofloat::consts::PI);
    pub const TAU: Dd = Dd(twofloat::consts::TAU);
    pub const FRAC_PI_2: Dd = Dd(twofloat::consts::FRAC_PI_2);
    pub const LN_2: Dd = Dd(twofloat::consts::LN_2);
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd(TwoFloat::from(x))
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        Dd(self.0 + o.0)
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: Dd) -> Dd {
        Dd(self.0 - o.0)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        Dd(self.0 * o.0)
    }
}

impl Div for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, o: Dd) -> Dd {
        let q0 = self.0.hi() / o.0.hi();
        // r = a − q0·b exactly enough, then one Newton correction
        let r = self.0 - o.0 * q0;
        let q1 = r.hi() / o.0.hi();
        let r = r - o.0 * q1;
        let q2 = r.hi() / o.0.hi();
        Dd(TwoFloat::new_add(q0, q1) + q2)
    }
}

impl Rem for Dd {
    type Output = Dd;
    fn rem(self, o: Dd) -> Dd {
        Dd(self.0 % o.0)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: f64) -> Dd {
        Dd(self.0 + o)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: f64) -> Dd {
        Dd(self.0 - o)
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: f64) -> Dd {
        Dd(self.0 * o)
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, o: f64) -> Dd {
        Dd(self.0 / o)
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, o: Dd) {
        *self = *self + o;
    }
}

impl SubAssign for Dd {
    #[inline]
    fn sub_assign(&mut self, o: Dd) {
        *self = *self - o;
    }
}

impl MulAssign for Dd {
    #[inline]
    fn mul_assign(&mut self, o: Dd) {
        *self = *self * o;
    }
}

impl Zero for Dd {
    fn zero() -> Self {
        Dd::from(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi() == 0.0
    }
}

impl One for Dd {
    fn one() -> Self {
        Dd::from(1.0)
    }
}

impl Num for Dd {
    type FromStrRadixErr = <TwoFloat as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        TwoFloat::from_str_radix(s, radix).map(Dd)
    }
}

/// Real scalar usable by the algebra and quadrature code.
pub trait Real: Num + Copy + Neg<Output = Self> + PartialOrd + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn powi(self, n: i32) -> Self;
    fn tau() -> Self;
    /// Complex exponential accurate to the working precision.
    fn cexp(z: Complex<Self>) -> Complex<Self>;
    /// `exp(2πi·j/m)`.
    fn root_of_unity(j: i64, m: usize) -> Complex<Self>;
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn tau() -> Self {
        std::f64::consts::TAU
    }
    #[inline]
    fn cexp(z: Complex<f64>) -> Complex<f64> {
        z.exp()
    }
    fn root_of_unity(j: i64, m: usize) -> Complex<f64> {
        let (c, s) = cos_sin_turn(j, m, |th: f64| (th.cos(), th.sin()));
        Complex::new(c, s)
    }
}

impl Real for Dd {
    #[inline]
    fn of(x: f64) -> Self {
        Dd::from(x)
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self.hi() + self.lo()
    }
    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { Dd::one() / self } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Dd::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
    fn tau() -> Self {
        Dd::TAU
    }
    fn cexp(z: Cdd) -> Cdd {
        let m = exp_dd(z.re);
        let (c, s) = cos_sin_dd(z.im);
        Complex::new(m * c, m * s)
    }
    fn root_of_unity(j: i64, m: usize) -> Cdd {
        let (c, s) = cos_sin_turn(j, m, cos_sin_dd);
        Complex::new(c, s)
    }
}

/// cos/sin of 2πj/m, folded into the first octant with integer arithmetic so
/// that symmetric nodes come out exactly conjugate or negated.
fn cos_sin_turn<T: Real>(j: i64, m: usize, f: impl Fn(T) -> (T, T)) -> (T, T) {
    let m = m as i64;
    let j = j.rem_euclid(m);
    // angle = 2π·j/m; work in units of 1/(8m) of a turn.
    let u = 8 * j;
    let quad = u / (2 * m);
    let rem = u - quad * 2 * m; // in [0, 2m), i.e. angle within the quadrant
    let (c, s) = if rem <= m {
        f(T::tau() * T::of(rem as f64) / T::of((8 * m) as f64))
    } else {
        let (c, s) = f(T::tau() * T::of((2 * m - rem) as f64) / T::of((8 * m) as f64));
        (s, c)
    };
    match quad {
        0 => (c, s),
        1 => (-s, c),
        2 => (-c, -s),
        _ => (s, -c),
    }
}

/// Real exponential in double-double precision.
///
/// twofloat's own `exp` is only good to ~1e-19 relative, not enough here.
pub fn exp_dd(x: Dd) -> Dd {
    let xh = x.hi();
    if xh > 709.0 {
        return Dd::from(f64::INFINITY);
    }
    if xh < -745.0 {
        return Dd::from(0.0);
    }
    let k = (xh / std::f64::consts::LN_2).round();
    let r = x - Dd::LN_2 * k;
    // |r| <= ln2/2; 30 Taylor terms is well past 1e-34.
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    for n in 1..=30 {
        term = term * r / (n as f64);
        sum += term;
        if term.hi().abs() < 1e-36 {
            break;
        }
    }
    scale2(sum, k as i32)
}

fn scale2(x: Dd, k: i32) -> Dd {
    // split so 2^k never overflows on its own
    let mut x = x;
    let mut k = k;
    while k > 1000 {
        x = x * 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        x = x * 2f64.powi(-1000);
        k += 1000;
    }
    x * 2f64.powi(k)
}

/// (cos θ, sin θ) in double-double precision.
pub fn cos_sin_dd(theta: Dd) -> (Dd, Dd) {
    let half_pi = Dd::FRAC_PI_2;
    let k = (theta.hi() / std::f64::consts::FRAC_PI_2).round();
    let r = theta - half_pi * k;
    let r2 = r * r;
    // Taylor on |r| <= π/4
    let mut s = r;
    let mut c = Dd::from(1.0);
    let mut ts = r;
    let mut tc = Dd::from(1.0);
    for n in 1..=20 {
        let n = n as f64;
        tc = -tc * r2 / ((2.0 * n - 1.0) * (2.0 * n));
        ts = -ts * r2 / ((2.0 * n) * (2.0 * n + 1.0));
        c += tc;
        s += ts;
        if tc.hi().abs() < 1e-36 && ts.hi().abs() < 1e-36 {
            break;
        }
    }
    match (k as i64).rem_euclid(4) {
        0 => (c, s),
        1 => (-s, c),
        2 => (-c, -s),
        _ => (s, -c),
    }
}

/// `z^n` by repeated squaring; `z^0 = 1` for every z.
pub fn cpowi<T: Real>(z: Complex<T>, n: i64) -> Complex<T> {
    let one = Complex::new(T::one(), T::zero());
    let mut base = if n < 0 { one / z } else { z };
    let mut e = n.unsigned_abs();
    let mut acc = one;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base;
        }
        base = base * base;
        e >>= 1;
    }
    acc
}

/// Lossy conversion to double precision.
pub fn to_c64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(z.re.as_f64(), z.im.as_f64())
}

pub fn from_c64<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd_rel(a: Dd, b: Dd) -> f64 {
        ((a - b) / b).hi().abs()
    }

    #[test]
    fn exp_dd_identities() {
        // e^a e^b = e^(a+b) and e^x e^-x = 1 at double-double accuracy
        for &(a, b) in &[(0.3, 1.7), (-4.2, 2.5), (11.0, -0.125), (1e-3, 3.0)] {
            let (a, b) = (Dd::from(a), Dd::from(b));
            assert!(dd_rel(exp_dd(a) * exp_dd(b), exp_dd(a + b)) < 1e-30);
            assert!(((exp_dd(a) * exp_dd(-a)) - 1.0).hi().abs() < 1e-30);
        }
        assert!(dd_rel(exp_dd(Dd::from(1.0)), Dd::from_tf(twofloat::consts::E)) < 1e-31);
    }

    #[test]
    fn trig_dd_pythagoras_and_pi() {
        for &th in &[0.1, 0.7, 1.3, 2.9, -5.5, 40.0] {
            let (c, s) = cos_sin_dd(Dd::from(th));
            assert!((c * c + s * s - 1.0).hi().abs() < 1e-30);
            assert!((c.hi() - th.cos()).abs() < 1e-15);
        }
        let (c, s) = cos_sin_dd(Dd::from_tf(twofloat::consts::FRAC_PI_6));
        assert!((s - 0.5).hi().abs() < 1e-31);
        assert!((c * c - 0.75).hi().abs() < 1e-31);
    }

    #[test]
    fn roots_of_unity_power_to_one() {
        for &m in &[6usize, 24, 64, 128] {
            for j in 0..m as i64 {
                let w: Cdd = Dd::root_of_unity(j, m);
                let wm = cpowi(w, m as i64);
                assert!((wm.re - 1.0).hi().abs() < 1e-28, "m={m} j={j}");
                assert!(wm.im.hi().abs() < 1e-28, "m={m} j={j} {:e}", wm.im.hi());
                let wf = f64::root_of_unity(j, m);
                assert!((wf - to_c64(w)).norm() < 1e-15);
            }
        }
        // exact symmetry
        let a: Cdd = Dd::root_of_unity(5, 64);
        let b: Cdd = Dd::root_of_unity(59, 64);
        assert_eq!(a.re, b.re);
        assert_eq!(a.im, -b.im);
    }

    #[test]
    fn division_is_double_double() {
        let x = Dd::from(1.0) / Dd::from(3.0);
        assert!((x * 3.0 - 1.0).hi().abs() < 1e-31);
        let a = Dd::PI * Dd::from(4.0);
        let b = a / Dd::from(24.0) - Dd::from_tf(twofloat::consts::FRAC_PI_6);
        assert!(b.hi().abs() < 1e-31);
        let y = Dd::from(0.7) / (Dd::from(1.0) - Dd::from(0.7));
        assert!((y * (Dd::from(1.0) - Dd::from(0.7)) - 0.7).hi().abs() < 1e-32);
    }

    #[test]
    fn cpowi_negative_and_zero() {
        let z = Complex::new(0.3, -0.4);
        assert_eq!(cpowi(z, 0), Complex::new(1.0, 0.0));
        assert!((cpowi(z, -3) * cpowi(z, 3) - 1.0).norm() < 1e-14);
        let zero = Complex::new(0.0, 0.0);
        assert_eq!(cpowi(zero, 0), Complex::new(1.0, 0.0));
    }
}
