//! Complex polynomial roots: balanced companion matrix, then Newton polishing
//! with a compensated (double-double) residual, plus root jets for
//! polynomials whose coefficients are themselves jets.

use crate::jet::{Jet, Scalar};
use crate::C64;
use nalgebra::DMatrix;

/// Evaluate Σ a_i x^i (ascending coefficients).
pub fn eval(a: &[C64], x: C64) -> C64 {
    a.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

pub fn derivative(a: &[C64]) -> Vec<C64> {
    a.iter().enumerate().skip(1).map(|(i, &c)| c * i as f64).collect()
}

/// Σ |a_i| |x|^i, the natural scale for relative residuals.
pub fn abs_sum(a: &[C64], x: C64) -> f64 {
    let r = x.norm();
    a.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
}

/// Relative residual |p(x)| / Σ|a_i||x|^i.
pub fn rel_residual(a: &[C64], x: C64) -> f64 {
    let s = abs_sum(a, x);
    if s == 0.0 {
        0.0
    } else {
        eval(a, x).norm() / s
    }
}

/// Product of ascending coefficient vectors.
pub fn pmul<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let mut c = vec![T::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            c[i + j] = c[i + j] + x * y;
        }
    }
    c
}

pub fn padd<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(T::zero()) + b.get(i).copied().unwrap_or(T::zero()))
        .collect()
}

// double-double arithmetic, enough for one accurate Horner pass

#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }
}

#[derive(Clone, Copy, Debug)]
struct Cdd {
    re: Dd,
    im: Dd,
}

impl Cdd {
    fn from(c: C64) -> Cdd {
        Cdd { re: Dd::new(c.re), im: Dd::new(c.im) }
    }
    fn add(self, o: Cdd) -> Cdd {
        Cdd { re: self.re.add(o.re), im: self.im.add(o.im) }
    }
    fn mul(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.mul(o.re).add(self.im.mul(o.im).neg()),
            im: self.re.mul(o.im).add(self.im.mul(o.re)),
        }
    }
    fn to_c64(self) -> C64 {
        C64::new(self.re.hi + self.re.lo, self.im.hi + self.im.lo)
    }
}

/// p(x) evaluated in double-double, treating the f64 coefficients and x as
/// exact inputs.
pub fn eval_compensated(a: &[C64], x: C64) -> C64 {
    let xx = Cdd::from(x);
    let mut acc = Cdd::from(C64::new(0.0, 0.0));
    for &c in a.iter().rev() {
        acc = acc.mul(xx).add(Cdd::from(c));
    }
    acc.to_c64()
}

/// Bound on the error of a root `x` of the f64 polynomial `a`: the Newton
/// correction from the compensated residual plus the double-double roundoff.
pub fn root_error_bound(a: &[C64], x: C64) -> f64 {
    let d = eval(&derivative(a), x);
    if d.norm() == 0.0 {
        return f64::INFINITY;
    }
    let u = f64::EPSILON / 2.0;
    (eval_compensated(a, x) / d).norm() + 4.0 * u * u * abs_sum(a, x) / d.norm()
}

/// Parlett-Reinsch balancing with power-of-two scalings.
fn balance(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].norm();
                    r += m[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / radix {
                cc *= radix;
                rr /= radix;
                f *= radix;
            }
            while cc >= rr * radix {
                cc /= radix;
                rr *= radix;
                f /= radix;
            }
            if (cc + rr) < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// All roots of Σ a_i x^i. Leading zero coefficients are dropped.
pub fn roots(a: &[C64]) -> Vec<C64> {
    let mut n = a.len() - 1;
    while n > 0 && a[n].norm() == 0.0 {
        n -= 1;
    }
    if n == 0 {
        return vec![];
    }
    let a = &a[..=n];
    // rescale x = σ y so that the extreme coefficients have equal weight
    let lead = a[n].norm();
    let first = a.iter().position(|c| c.norm() != 0.0).unwrap();
    let sigma = if first < n {
        (a[first].norm() / lead).powf(1.0 / (n - first) as f64)
    } else {
        1.0
    };
    let sigma = if sigma.is_finite() && sigma > 0.0 { sigma } else { 1.0 };
    let b: Vec<C64> = a.iter().enumerate().map(|(i, &c)| c * sigma.powi(i as i32)).collect();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -b[i] / b[n];
    }
    balance(&mut m);
    let eig = m.clone().schur().eigenvalues().unwrap_or_else(|| m.eigenvalues().unwrap());
    eig.iter().map(|&y| polish(a, y * sigma)).collect()
}

/// Newton iterations driven by the compensated residual. Stops when the step
/// stops decreasing.
pub fn polish(a: &[C64], mut x: C64) -> C64 {
    let da = derivative(a);
    let mut last = f64::INFINITY;
    for _ in 0..20 {
        let d = eval(&da, x);
        if d.norm() == 0.0 {
            break;
        }
        let step = eval_compensated(a, x) / d;
        let s = step.norm();
        if !(s < last) || !s.is_finite() {
            break;
        }
        x -= step;
        last = s;
        if s <= 1e-17 * x.norm() {
            break;
        }
    }
    x
}

/// Taylor series of a simple root of a polynomial with jet coefficients,
/// starting from its base value `x0` (already polished).
pub fn jet_root(a: &[Jet], x0: C64, deg: usize) -> Jet {
    let da: Vec<Jet> = a.iter().enumerate().skip(1).map(|(i, &c)| c.scale_re(i as f64)).collect();
    let ev = |c: &[Jet], x: Jet| c.iter().rev().fold(Jet::zero(), |acc, &v| acc * x + v);
    let mut seed = vec![C64::new(0.0, 0.0); deg + 1];
    seed[0] = x0;
    let mut x = Jet::from_coeffs(&seed);
    let iters = 2 + (usize::BITS - deg.max(1).leading_zeros()) as usize;
    for _ in 0..iters {
        let step = ev(a, x) / ev(&da, x);
        x = x - step.with_value(C64::new(0.0, 0.0));
    }
    x
}
