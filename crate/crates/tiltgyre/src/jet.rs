//! Truncated Taylor series in the offset η = ξ_y − ξ_y0 around a grid mode.
//!
//! Multiplication by the physical coordinate y is i∂/∂ξ_y in Fourier space, so
//! carrying every per-mode quantity as a jet in η turns `y·f` into a local
//! operation on the mode. A jet is either a polynomial known exactly (constants
//! mostly) or a series truncated at some degree.

use num_complex::Complex64 as C64;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Maximum number of stored coefficients. Supports cascades up to K = 5.
pub const JET_CAP: usize = 12;

#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    c: [C64; JET_CAP],
    deg: u8,
    exact: bool,
}

const Z: C64 = C64::new(0.0, 0.0);

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet{}[", if self.exact { "=" } else { "~" })?;
        for k in 0..=self.deg as usize {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:.6e}{:+.6e}i", self.c[k].re, self.c[k].im)?;
        }
        write!(f, "]")
    }
}

impl Jet {
    pub fn constant(v: C64) -> Jet {
        let mut c = [Z; JET_CAP];
        c[0] = v;
        Jet { c, deg: 0, exact: true }
    }

    pub fn real(v: f64) -> Jet {
        Jet::constant(C64::new(v, 0.0))
    }

    /// `v + η`, truncated at `deg`: the seed of every η-dependent quantity.
    pub fn variable(v: f64, deg: usize) -> Jet {
        assert!(deg < JET_CAP, "jet degree {deg} exceeds capacity");
        let mut c = [Z; JET_CAP];
        c[0] = C64::new(v, 0.0);
        if deg >= 1 {
            c[1] = C64::new(1.0, 0.0);
        }
        Jet { c, deg: deg as u8, exact: false }
    }

    /// Truncated series from raw coefficients.
    pub fn from_coeffs(coeffs: &[C64]) -> Jet {
        assert!(!coeffs.is_empty() && coeffs.len() <= JET_CAP);
        let mut c = [Z; JET_CAP];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Jet { c, deg: (coeffs.len() - 1) as u8, exact: false }
    }

    pub fn zero() -> Jet {
        Jet::constant(Z)
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    /// Same series with the base value replaced.
    pub fn with_value(mut self, v: C64) -> Jet {
        self.c[0] = v;
        self
    }

    /// Taylor coefficient of η^k (zero beyond an exact polynomial's degree).
    pub fn coeff(&self, k: usize) -> C64 {
        if k <= self.deg as usize {
            self.c[k]
        } else {
            Z
        }
    }

    /// Highest coefficient index that carries information.
    pub fn degree(&self) -> usize {
        self.deg as usize
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Degree up to which the series is meaningful (exact polynomials are
    /// meaningful to any order).
    fn reach(&self) -> usize {
        if self.exact {
            JET_CAP - 1
        } else {
            self.deg as usize
        }
    }

    /// Keep information up to degree `deg`. An exact polynomial of lower
    /// degree stays exact.
    pub fn truncate(mut self, deg: usize) -> Jet {
        let d = deg.min(JET_CAP - 1);
        if self.exact && self.deg as usize <= d {
            return self;
        }
        let keep = d.min(self.deg as usize).max(if self.exact { d } else { 0 });
        for k in keep + 1..JET_CAP {
            self.c[k] = Z;
        }
        self.deg = keep as u8;
        self.exact = false;
        self
    }

    /// d/dη. One degree of information is lost for truncated series.
    pub fn d_eta(&self) -> Jet {
        let mut c = [Z; JET_CAP];
        if self.deg == 0 {
            return if self.exact {
                Jet::zero()
            } else {
                // nothing is known about the derivative; keep a degree-0
                // placeholder and let callers track degrees
                Jet { c, deg: 0, exact: false }
            };
        }
        for k in 1..=self.deg as usize {
            c[k - 1] = self.c[k] * k as f64;
        }
        Jet { c, deg: self.deg - 1, exact: self.exact }
    }

    pub fn scale(mut self, k: C64) -> Jet {
        for v in self.c.iter_mut().take(self.deg as usize + 1) {
            *v *= k;
        }
        self
    }

    pub fn scale_re(self, k: f64) -> Jet {
        self.scale(C64::new(k, 0.0))
    }

    pub fn norm_base(&self) -> f64 {
        self.c[0].norm()
    }

    pub fn conj(mut self) -> Jet {
        for v in self.c.iter_mut() {
            *v = v.conj();
        }
        self
    }

    /// Reciprocal series.
    pub fn recip(&self) -> Jet {
        let n = self.reach();
        let b0 = self.c[0];
        if self.exact && self.deg == 0 {
            return Jet::constant(C64::new(1.0, 0.0) / b0);
        }
        let mut r = [Z; JET_CAP];
        r[0] = C64::new(1.0, 0.0) / b0;
        for k in 1..=n {
            let mut acc = Z;
            for j in 1..=k.min(self.deg as usize) {
                acc += self.c[j] * r[k - j];
            }
            r[k] = -acc * r[0];
        }
        Jet { c: r, deg: n as u8, exact: false }
    }

    /// exp of the series.
    pub fn exp(&self) -> Jet {
        let e0 = self.c[0].exp();
        if self.deg == 0 && self.exact {
            return Jet::constant(e0);
        }
        let n = self.reach();
        // f' = a' f, solved coefficient by coefficient
        let mut r = [Z; JET_CAP];
        r[0] = e0;
        for k in 1..=n {
            let mut acc = Z;
            for j in 1..=k.min(self.deg as usize) {
                acc += self.c[j] * r[k - j] * j as f64;
            }
            r[k] = acc / k as f64;
        }
        Jet { c: r, deg: n as u8, exact: false }
    }

    /// Principal square root series (base value must be nonzero).
    pub fn sqrt(&self) -> Jet {
        let s0 = self.c[0].sqrt();
        if self.deg == 0 && self.exact {
            return Jet::constant(s0);
        }
        let n = self.reach();
        let mut r = [Z; JET_CAP];
        r[0] = s0;
        for k in 1..=n {
            let mut acc = self.coeff(k);
            for j in 1..k {
                acc -= r[j] * r[k - j];
            }
            r[k] = acc / (s0 * 2.0);
        }
        Jet { c: r, deg: n as u8, exact: false }
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut acc = Jet::real(1.0);
        for _ in 0..n {
            acc = acc * *self;
        }
        acc
    }

    /// Evaluate the truncated series at a finite offset η.
    pub fn eval(&self, eta: f64) -> C64 {
        let mut acc = Z;
        for k in (0..=self.deg as usize).rev() {
            acc = acc * eta + self.c[k];
        }
        acc
    }

    /// Largest coefficient modulus, used for relative comparisons.
    pub fn max_abs(&self) -> f64 {
        self.c[..=self.deg as usize].iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn combine_deg(a: &Jet, b: &Jet, exact_deg: usize) -> (usize, bool) {
    match (a.exact, b.exact) {
        (true, true) if exact_deg < JET_CAP => (exact_deg, true),
        (true, true) => (JET_CAP - 1, false),
        (true, false) => (b.deg as usize, false),
        (false, true) => (a.deg as usize, false),
        (false, false) => ((a.deg.min(b.deg)) as usize, false),
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let (d, exact) = combine_deg(&self, &o, self.deg.max(o.deg) as usize);
        let mut c = [Z; JET_CAP];
        for k in 0..=d {
            c[k] = self.coeff(k) + o.coeff(k);
        }
        Jet { c, deg: d as u8, exact }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        if self.exact && self.deg == 0 {
            return o.scale(self.c[0]);
        }
        if o.exact && o.deg == 0 {
            return self.scale(o.c[0]);
        }
        let (d, exact) = combine_deg(&self, &o, (self.deg + o.deg) as usize);
        let mut c = [Z; JET_CAP];
        for i in 0..=(self.deg as usize).min(d) {
            let a = self.c[i];
            if a == Z {
                continue;
            }
            for j in 0..=(o.deg as usize).min(d - i) {
                c[i + j] += a * o.c[j];
            }
        }
        Jet { c, deg: d as u8, exact }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        if o.exact && o.deg == 0 {
            return self.scale(C64::new(1.0, 0.0) / o.c[0]);
        }
        let r = o.recip();
        let mut out = self * r;
        if !self.exact {
            out = out.truncate(self.deg as usize);
        }
        out
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, o: Jet) {
        *self = *self * o;
    }
}

/// Arithmetic shared by plain complex numbers and jets, so that profile
/// algebra and linear solves can be written once.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: C64) -> Self;
    fn base(&self) -> C64;
    fn scale(self, k: C64) -> Self;
    fn is_zero(&self) -> bool;
    fn zero() -> Self {
        Self::cst(Z)
    }
    fn one() -> Self {
        Self::cst(C64::new(1.0, 0.0))
    }
    fn re(v: f64) -> Self {
        Self::cst(C64::new(v, 0.0))
    }
}

impl Scalar for C64 {
    fn cst(v: C64) -> Self {
        v
    }
    fn base(&self) -> C64 {
        *self
    }
    fn scale(self, k: C64) -> Self {
        self * k
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

impl Scalar for Jet {
    fn cst(v: C64) -> Self {
        Jet::constant(v)
    }
    fn base(&self) -> C64 {
        self.c[0]
    }
    fn scale(self, k: C64) -> Self {
        Jet::scale(self, k)
    }
    fn is_zero(&self) -> bool {
        self.c[..=self.deg as usize].iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn product_and_quotient_roundtrip() {
        let x = Jet::variable(0.7, 6);
        let f = x * x + Jet::real(2.0);
        let g = f / x;
        let back = g * x;
        for k in 0..=6 {
            assert!(close(back.coeff(k), f.coeff(k), 1e-13), "k={k}");
        }
    }

    #[test]
    fn exp_matches_closed_form() {
        // exp(−(0.5 + η)²/2): compare against finite sums of the series at a small offset
        let x = Jet::variable(0.5, 8);
        let e = (-(x * x).scale_re(0.5)).exp();
        let eta = 1e-2;
        let want = (-(0.5f64 + eta).powi(2) / 2.0).exp();
        assert!((e.eval(eta).re - want).abs() < 1e-15);
    }

    #[test]
    fn derivative_lowers_degree() {
        let x = Jet::variable(1.0, 5);
        let cube = x * x * x;
        let d = cube.d_eta();
        assert_eq!(d.degree(), 4);
        assert!(close(d.coeff(0), C64::new(3.0, 0.0), 1e-15));
        assert!(close(d.coeff(1), C64::new(6.0, 0.0), 1e-15));
    }

    #[test]
    fn sqrt_squares_back() {
        let x = Jet::variable(2.0, 7) * Jet::constant(C64::new(0.3, 1.1));
        let r = x.sqrt();
        let sq = r * r;
        for k in 0..=7 {
            assert!(close(sq.coeff(k), x.coeff(k), 1e-13));
        }
    }

    #[test]
    fn constants_stay_exact() {
        let a = Jet::real(3.0) * Jet::real(2.0) + Jet::real(1.0);
        assert!(a.is_exact());
        assert_eq!(a.degree(), 0);
        assert_eq!(a.value(), C64::new(7.0, 0.0));
    }
}
