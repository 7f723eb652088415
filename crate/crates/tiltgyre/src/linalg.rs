//! Small dense linear algebra over [`Scalar`], so the same elimination serves
//! plain complex numbers and jets.

use crate::jet::Scalar;
use crate::C64;
use nalgebra::DMatrix;

/// Gaussian elimination with row and column equilibration and partial
/// pivoting on the base value. Returns `None` when a pivot vanishes.
pub fn solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|r| r.len() == n));
    let mut colscale = vec![1.0; n];
    for (j, cs) in colscale.iter_mut().enumerate() {
        let m = a.iter().map(|r| r[j].base().norm()).fold(0.0, f64::max);
        if m == 0.0 {
            return None;
        }
        *cs = 1.0 / m;
        for r in a.iter_mut() {
            r[j] = r[j].scale(C64::new(*cs, 0.0));
        }
    }
    for i in 0..n {
        let m = a[i].iter().map(|v| v.base().norm()).fold(0.0, f64::max);
        if m == 0.0 {
            return None;
        }
        let k = C64::new(1.0 / m, 0.0);
        for v in a[i].iter_mut() {
            *v = v.scale(k);
        }
        b[i] = b[i].scale(k);
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i][col].base().norm().partial_cmp(&a[j][col].base().norm()).unwrap()
            })
            .unwrap();
        if a[piv][col].base().norm() == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = T::one() / a[col][col];
        for i in col + 1..n {
            if a[i][col].is_zero() {
                continue;
            }
            let f = a[i][col] * inv;
            for j in col..n {
                let t = a[col][j];
                a[i][j] = a[i][j] - f * t;
            }
            let t = b[col];
            b[i] = b[i] - f * t;
        }
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc = acc - a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    for (v, &cs) in x.iter_mut().zip(&colscale) {
        *v = v.scale(C64::new(cs, 0.0));
    }
    Some(x)
}

pub fn mat_vec<T: Scalar>(a: &[Vec<T>], x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(T::zero(), |acc, (&r, &v)| acc + r * v))
        .collect()
}

pub fn to_dmatrix(a: &[Vec<C64>]) -> DMatrix<C64> {
    let n = a.len();
    let m = a[0].len();
    DMatrix::from_fn(n, m, |i, j| a[i][j])
}

/// Singular values, largest first.
pub fn singular_values(a: &[Vec<C64>]) -> Vec<f64> {
    let svd = to_dmatrix(a).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn solves_complex_system() {
        let a = vec![
            vec![C64::new(2.0, 1.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            vec![C64::new(1.0, 0.0), C64::new(0.0, 3.0), C64::new(1.0, -1.0)],
            vec![C64::new(0.0, 0.0), C64::new(1.0, 1.0), C64::new(4.0, 0.0)],
        ];
        let x = vec![C64::new(1.0, -2.0), C64::new(0.5, 0.5), C64::new(-1.0, 0.0)];
        let b = mat_vec(&a, &x);
        let y = solve(a, b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-14);
        }
    }

    #[test]
    fn jet_solve_matches_pointwise_solves() {
        // a(η) x = b with a depending on η; compare the series with solves at ±h
        let eta = Jet::variable(0.0, 4);
        let a = vec![
            vec![Jet::real(2.0) + eta, Jet::real(1.0)],
            vec![Jet::real(1.0), Jet::real(3.0) - eta * eta],
        ];
        let b = vec![Jet::real(1.0), eta];
        let x = solve(a, b).unwrap();
        let h = 1e-3;
        let pt = |e: f64| {
            let a = vec![
                vec![C64::new(2.0 + e, 0.0), C64::new(1.0, 0.0)],
                vec![C64::new(1.0, 0.0), C64::new(3.0 - e * e, 0.0)],
            ];
            solve(a, vec![C64::new(1.0, 0.0), C64::new(e, 0.0)]).unwrap()
        };
        let (p, m) = (pt(h), pt(-h));
        let d = (p[0] - m[0]) / (2.0 * h);
        assert!((x[0].coeff(1) - d).norm() < 1e-6);
        assert!((x[0].eval(h) - p[0]).norm() < 1e-12);
    }
}
