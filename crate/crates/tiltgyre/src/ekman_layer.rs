//! Ekman characteristic analysis of the f-plane system on one tangential
//! mode: the 5×5 mode matrix, its degree-6 determinant, layer roots, the
//! admissible eigenvector, and the polynomial solve for forced layers.
//!
//! Unknowns are ordered (U'_x, U'_y, U'_z, P, R): velocity in local
//! coordinates, pressure, density.

use crate::jet::{Jet, Scalar};
use crate::linalg;
use crate::munk_roots::RootSet;
use crate::poly::{self, padd, pmul};
use crate::regime::{DerivedScales, FrequencyRegime};
use crate::{Error, Result, C64};
use serde::Serialize;
use std::f64::consts::FRAC_PI_4;

const I: C64 = C64::new(0.0, 1.0);

fn k(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Coefficients in λ of r = iω − ν_eff λ² + 2icsξ_x(ν₃−ν_h)λ + ν_h(c²ξ_x²+ξ_y²) + ν₃s²ξ_x².
pub fn r_coeffs<T: Scalar>(xi_x: f64, xi_y: T, sc: &DerivedScales) -> [T; 3] {
    let (s, c) = (sc.s, sc.c);
    let r0 = T::cst(C64::new(sc.nu_h * c * c * xi_x * xi_x + sc.nu_3 * s * s * xi_x * xi_x, sc.omega))
        + (xi_y * xi_y).scale(k(sc.nu_h));
    let r1 = T::cst(C64::new(0.0, 2.0 * c * s * xi_x * (sc.nu_3 - sc.nu_h)));
    [r0, r1, T::re(-sc.nu_eff)]
}

pub fn r_at(xi: (f64, f64), lambda: C64, sc: &DerivedScales) -> C64 {
    let r = r_coeffs(xi.0, C64::new(xi.1, 0.0), sc);
    r[0] + r[1] * lambda + r[2] * lambda * lambda
}

/// A(λ) = A₀ + A₁λ + A₂λ² (each 5×5).
pub fn a_coeffs<T: Scalar>(xi_x: f64, xi_y: T, sc: &DerivedScales) -> [Vec<Vec<T>>; 3] {
    let (s, c, e) = (sc.s, sc.c, sc.epsilon);
    let d2 = sc.delta * sc.delta;
    let z = || vec![vec![T::zero(); 5]; 5];
    let (mut a0, mut a1, mut a2) = (z(), z(), z());
    let r = r_coeffs(xi_x, xi_y, sc);
    for i in 0..3 {
        a0[i][i] = r[0];
        a1[i][i] = r[1];
        a2[i][i] = r[2];
    }
    let cst = |v: C64| T::cst(v);
    // x-momentum
    a0[0][1] = T::re(-c / e);
    a0[0][3] = cst(C64::new(0.0, c * c * xi_x / e + s * s * xi_x / (e * d2)));
    a1[0][3] = T::re(s * c / e - c * s / (e * d2));
    a0[0][4] = T::re(s / (e * d2));
    // y-momentum
    a0[1][0] = T::re(c / e);
    a0[1][2] = T::re(-s / e);
    a0[1][3] = xi_y.scale(C64::new(0.0, 1.0 / e));
    // z-momentum
    a0[2][1] = T::re(s / e);
    a0[2][3] = cst(C64::new(0.0, -c * s * xi_x / e + s * c * xi_x / (e * d2)));
    a1[2][3] = T::re(-s * s / e - c * c / (e * d2));
    a0[2][4] = T::re(c / (e * d2));
    // divergence
    a0[3][0] = cst(C64::new(0.0, xi_x));
    a0[3][1] = xi_y.scale(I);
    a1[3][2] = T::re(-1.0);
    // mass
    a0[4][0] = T::re(-s / e);
    a0[4][2] = T::re(-c / e);
    a0[4][4] = cst(C64::new(0.0, sc.omega));
    [a0, a1, a2]
}

/// Σ_p ac[p] λ^p
pub fn eval_matrix<T: Scalar>(ac: &[Vec<Vec<T>>; 3], lambda: T) -> Vec<Vec<T>> {
    let l2 = lambda * lambda;
    (0..5)
        .map(|i| (0..5).map(|j| ac[0][i][j] + ac[1][i][j] * lambda + ac[2][i][j] * l2).collect())
        .collect()
}

pub fn a_matrix(xi: (f64, f64), lambda: C64, sc: &DerivedScales) -> Vec<Vec<C64>> {
    eval_matrix(&a_coeffs(xi.0, C64::new(xi.1, 0.0), sc), lambda)
}

/// Ascending coefficients of (λc̃)²(r² + 1/ε²) + δ²r(r + 1/(iωε²δ²))((λs̃)² − ξ_y²).
pub fn det_poly<T: Scalar>(xi_x: f64, xi_y: T, sc: &DerivedScales) -> Vec<T> {
    let (s, c, e) = (sc.s, sc.c, sc.epsilon);
    let d2 = sc.delta * sc.delta;
    let r = r_coeffs(xi_x, xi_y, sc);
    let lc = [T::cst(C64::new(0.0, -s * xi_x)), T::re(c)];
    let ls = [T::cst(C64::new(0.0, c * xi_x)), T::re(s)];
    let t1 = pmul(&pmul(&lc, &lc), &padd(&pmul(&r, &r), &[T::re(1.0 / (e * e))]));
    let shift = T::cst(k(1.0) / C64::new(0.0, sc.omega * e * e * d2));
    let t2 = pmul(&pmul(&r, &padd(&r, &[shift])), &padd(&pmul(&ls, &ls), &[-(xi_y * xi_y)]));
    padd(&t1, &t2.iter().map(|&v| v.scale(k(d2))).collect::<Vec<_>>())
}

/// r² + 1/ε² + δ²r(r + 1/(iωε²δ²))(s̃²/c̃² − ξ_y²/(λ²c̃²)).
pub fn exact_determinant(lambda: C64, xi: (f64, f64), omega: f64, sc: &DerivedScales) -> Result<C64> {
    let sc = sc.with_omega(omega);
    let (s, c, e) = (sc.s, sc.c, sc.epsilon);
    let d2 = sc.delta * sc.delta;
    let st = s + I * xi.0 * c / lambda;
    let ct = c - I * xi.0 * s / lambda;
    if ct.norm() < 1e-12 {
        return Err(Error::DegenerateTilt(format!("|c~| = {:.3e}", ct.norm())));
    }
    let r = r_at(xi, lambda, &sc);
    let shift = k(1.0) / C64::new(0.0, omega * e * e * d2);
    Ok(r * r + 1.0 / (e * e) + d2 * r * (r + shift) * (st * st / (ct * ct) - xi.1 * xi.1 / (lambda * lambda * ct * ct)))
}

/// Closed-form layer rates (λ₁, λ₂).
pub fn lambda_refs(omega: f64, sc: &DerivedScales) -> (C64, C64) {
    let sg = omega.signum();
    let l1 = C64::from_polar(1.0, -FRAC_PI_4 * sg) * (sc.s / sc.c).abs()
        / (sc.nu_eff.sqrt() * sc.epsilon * omega.abs().sqrt());
    let l2 = C64::from_polar(1.0, FRAC_PI_4 * sg) * omega.abs().sqrt() / (sc.nu_eff.sqrt() * sc.s.abs());
    (l1, l2)
}

/// Leading r-values at the two layer roots.
pub fn r_refs(omega: f64, sc: &DerivedScales) -> (C64, C64) {
    let (s, c, e) = (sc.s, sc.c, sc.epsilon);
    (I * s * s / (omega * e * e * c * c), -I * omega * c * c / (s * s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRoots {
    pub lambda1: C64,
    pub lambda2: C64,
    pub lambda1_ref: C64,
    pub lambda2_ref: C64,
    pub all: Vec<C64>,
    pub r1: C64,
    pub r2: C64,
}

/// Roots of the degree-6 polynomial matched to the two layer references.
/// Needs only ω ≠ 0 and |ωε| ≤ 0.1.
pub fn find_layer_roots(xi: (f64, f64), sc: &DerivedScales) -> Result<LayerRoots> {
    let w = sc.omega;
    if w == 0.0 || (w * sc.epsilon).abs() > 0.1 {
        return Err(Error::RegimeError(format!("Ekman layer needs 0 < |omega·eps| <= 0.1, got {}", w * sc.epsilon)));
    }
    let q = det_poly(xi.0, C64::new(xi.1, 0.0), sc);
    let all = poly::roots(&q);
    let (r1, r2) = lambda_refs(w, sc);
    let pick = |re: C64, avoid: Option<C64>| -> Result<C64> {
        all.iter()
            .copied()
            .filter(|z| z.re > 0.0 && Some(*z) != avoid)
            .map(|z| (z, (z - re).norm() / re.norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .filter(|&(_, d)| d <= 0.3)
            .map(|(z, _)| z)
            .ok_or_else(|| Error::MatchFailure(format!("no root within 30% of {re:.4e} at xi = ({}, {})", xi.0, xi.1)))
    };
    let l1 = pick(r1, None)?;
    let l2 = pick(r2, Some(l1))?;
    Ok(LayerRoots {
        lambda1: l1,
        lambda2: l2,
        lambda1_ref: r1,
        lambda2_ref: r2,
        r1: r_at(xi, l1, sc),
        r2: r_at(xi, l2, sc),
        all,
    })
}

/// Layer roots with the full preconditions: ω ≠ 0, |ωε| ≤ 0.1 and
/// |ξ| ≤ 0.1|ω/ν_eff|^{1/2}.
pub fn layer_roots(xi: (f64, f64), omega: f64, sc: &DerivedScales) -> Result<LayerRoots> {
    let sc = sc.with_omega(omega);
    let lim = 0.1 * (omega / sc.nu_eff).abs().sqrt();
    let xn = xi.0.hypot(xi.1);
    if xn > lim {
        return Err(Error::RegimeError(format!("|xi| = {xn:.4} exceeds {lim:.4}")));
    }
    find_layer_roots(xi, &sc)
}

/// Nullspace of the reduced 2×2 system with U'_x = 1, then U'_z, R, P from
/// the divergence, mass and vertical momentum relations. The second value is
/// |det| over the product of row norms.
pub fn reduced_eigvec<T: Scalar>(xi_x: f64, xi_y: T, lambda: T, sc: &DerivedScales) -> ([T; 5], f64) {
    let (s, c, e) = (sc.s, sc.c, sc.epsilon);
    let d2 = sc.delta * sc.delta;
    let rc = r_coeffs(xi_x, xi_y, sc);
    let r = rc[0] + rc[1] * lambda + rc[2] * lambda * lambda;
    let inv_l = T::one() / lambda;
    let ix = T::cst(C64::new(0.0, xi_x));
    let st = T::re(s) + ix.scale(k(c)) * inv_l;
    let ct = T::re(c) - ix.scale(k(s)) * inv_l;
    let kk = r + T::cst(k(1.0) / C64::new(0.0, sc.omega * e * e * d2));
    let iy = xi_y.scale(I);
    let m11 = r * (T::one() - st.scale(k(s))) + st * st * kk.scale(k(c * d2)) / ct;
    let m12 = T::re(-c / e) + iy.scale(k(c)) * inv_l * (-(r.scale(k(s))) + kk * st.scale(k(d2 * c)) / ct);
    let m21 = ct.scale(k(1.0 / e)) + iy * st * kk.scale(k(d2)) * inv_l / ct;
    let m22 = r - (iy * inv_l).scale(k(s / e)) - (xi_y * xi_y * kk).scale(k(d2 * c)) * inv_l * inv_l / ct;
    let det = (m11 * m22 - m12 * m21).base().norm();
    let n1 = m11.base().norm().hypot(m12.base().norm());
    let n2 = m21.base().norm().hypot(m22.base().norm());
    let rel = det / (n1 * n2);
    // use the row with the larger U'_y coefficient
    let uy = if m12.base().norm() / n1 >= m22.base().norm() / n2 { -(m11 / m12) } else { -(m21 / m22) };
    let uz = (ix + iy * uy) * inv_l;
    let tail = st + iy.scale(k(c)) * uy * inv_l;
    let rho = tail / T::cst(C64::new(0.0, sc.omega * e));
    let p = kk * tail * inv_l.scale(k(e * d2)) / ct;
    ([T::one(), uy, uz, p, rho], rel)
}

/// Leading-order eigenvector components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenRefs {
    pub uy: C64,
    pub uz: C64,
    pub p: C64,
    pub rho: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EkmanMode {
    pub lambda: C64,
    pub r: C64,
    /// (U'_x, U'_y, U'_z, P, R)
    pub u: [C64; 5],
    /// (U₁, U₂, U₃)
    pub global: [C64; 3],
    pub discard: bool,
    pub det_rel: f64,
    pub refs: Option<EigenRefs>,
}

pub fn to_global<T: Scalar>(u: &[T], sc: &DerivedScales) -> [T; 3] {
    [u[0].scale(k(sc.c)) - u[2].scale(k(sc.s)), u[1], u[0].scale(k(sc.s)) + u[2].scale(k(sc.c))]
}

fn mode_at(xi: (f64, f64), lambda: C64, sc: &DerivedScales, discard: bool) -> Result<EkmanMode> {
    let (u, rel) = reduced_eigvec(xi.0, C64::new(xi.1, 0.0), lambda, sc);
    if !(rel <= 1e-3) {
        return Err(Error::NullspaceFailure(format!("reduced determinant {rel:.3e} at lambda = {lambda:.4e}")));
    }
    Ok(EkmanMode { lambda, r: r_at(xi, lambda, sc), u, global: to_global(&u, sc), discard, det_rel: rel, refs: None })
}

/// Eigenvector at λ₁ with the asymptotic references attached.
pub fn eigenvector_lambda1(xi: (f64, f64), lambda1: C64, sc: &DerivedScales) -> Result<EkmanMode> {
    let mut m = mode_at(xi, lambda1, sc, false)?;
    let (s, c, e, w) = (sc.s, sc.c, sc.epsilon, sc.omega);
    m.refs = Some(EigenRefs {
        uy: I * c.powi(3) * w * e / (s * s),
        uz: I * xi.0 / lambda1,
        p: C64::from_polar(1.0, -FRAC_PI_4 * w.signum()) * (sc.nu_eff / w.abs()).sqrt() * s.signum(),
        rho: k(s) / (I * w * e),
    });
    Ok(m)
}

/// |λc̃P − R| / |R|
pub fn hydrostatic_defect(m: &EkmanMode, xi: (f64, f64), sc: &DerivedScales) -> f64 {
    let ct = sc.c - I * xi.0 * sc.s / m.lambda;
    (m.lambda * ct * m.u[3] - m.u[4]).norm() / m.u[4].norm()
}

/// Angle in degrees between the global layer velocity (real parts
/// dominate after normalising U'_x = 1) and e_x = (c, 0, s).
pub fn angle_to_ex(m: &EkmanMode, sc: &DerivedScales) -> f64 {
    let g = m.global;
    let n = (g[0].norm_sqr() + g[1].norm_sqr() + g[2].norm_sqr()).sqrt();
    let dot = (g[0] * sc.c + g[2] * sc.s).norm();
    (dot / n).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Magnitudes of the viscous, Coriolis and pressure+stratification terms in
/// the x-momentum row.
pub fn balance_terms(m: &EkmanMode, xi: (f64, f64), sc: &DerivedScales) -> [f64; 3] {
    let a = a_matrix(xi, m.lambda, sc);
    [(a[0][0] * m.u[0]).norm(), (a[0][1] * m.u[1]).norm(), (a[0][3] * m.u[3] + a[0][4] * m.u[4]).norm()]
}

/// Eigenvector at λ₂ normalised by U'_y = 1, and its geostrophic defect
/// ‖(−iξ_y, λs̃)P − U_h‖ / ‖U_h‖.
pub fn geostrophic_defect(xi: (f64, f64), lambda2: C64, sc: &DerivedScales) -> Result<f64> {
    let m = mode_at(xi, lambda2, sc, true)?;
    let u: Vec<C64> = m.u.iter().map(|v| v / m.u[1]).collect();
    let g = to_global(&u, sc);
    let st = sc.s * lambda2 + I * sc.c * xi.0;
    let d1 = -I * xi.1 * u[3] - g[0];
    let d2 = st * u[3] - g[1];
    Ok((d1.norm_sqr() + d2.norm_sqr()).sqrt() / (g[0].norm_sqr() + g[1].norm_sqr()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiscardReason {
    RedundantWithMunk,
    BetaDominates,
}

/// Why the second layer root is not used.
pub fn discard_rule(lambda2: C64, roots: &RootSet, regime: FrequencyRegime) -> Result<DiscardReason> {
    match regime {
        FrequencyRegime::MidFreq => {
            let refm = roots.asymptotic_refs.map(|r| r.plus[0]).unwrap_or(roots.mu_plus[1]);
            let mu = roots
                .mu_plus
                .iter()
                .copied()
                .min_by(|a, b| (a - refm).norm().partial_cmp(&(b - refm).norm()).unwrap())
                .unwrap();
            let d = (lambda2 / mu - 1.0).norm();
            if d <= 0.3 {
                Ok(DiscardReason::RedundantWithMunk)
            } else {
                Err(Error::InconsistentRegime(format!("|lambda2/mu1 - 1| = {d:.3}")))
            }
        }
        _ => Ok(DiscardReason::BetaDominates),
    }
}

/// Jet-valued data for solving A(λ₁ − ∂_z)W = R on polynomials W(z).
#[derive(Debug, Clone)]
pub struct LayerSolver {
    pub lambda: Jet,
    pub a0: Vec<Vec<Jet>>,
    pub a1: Vec<Vec<Jet>>,
    pub a2: Vec<Vec<Jet>>,
    /// Right null vector, U'_x = 1.
    pub u: Vec<Jet>,
    /// Left null vector.
    pub v: Vec<Jet>,
    drop_row: usize,
    vta1u: Jet,
}

fn dot(a: &[Jet], b: &[Jet]) -> Jet {
    a.iter().zip(b).fold(Jet::zero(), |acc, (&x, &y)| acc + x * y)
}

impl LayerSolver {
    pub fn new(xi_x: f64, xi_y: Jet, lambda: Jet, sc: &DerivedScales) -> Result<LayerSolver> {
        let ac = a_coeffs(xi_x, xi_y, sc);
        let a0 = eval_matrix(&ac, lambda);
        let a1: Vec<Vec<Jet>> =
            (0..5).map(|i| (0..5).map(|j| ac[1][i][j] + (ac[2][i][j] * lambda).scale_re(2.0)).collect()).collect();
        let a2: Vec<Vec<Jet>> = (0..5).map(|i| (0..5).map(|j| ac[2][i][j].scale_re(2.0)).collect()).collect();
        let base: Vec<Vec<C64>> = a0.iter().map(|r| r.iter().map(|v| v.value()).collect()).collect();
        let svd = linalg::to_dmatrix(&base).svd(true, true);
        let sv = &svd.singular_values;
        let imin = (0..5).min_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap()).unwrap();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        if sv[imin] > 1e-6 * smax {
            return Err(Error::NullspaceFailure(format!("smallest singular value {:.3e}", sv[imin] / smax)));
        }
        let ub: Vec<C64> = (0..5).map(|j| svd.v_t.as_ref().unwrap()[(imin, j)].conj()).collect();
        let vb: Vec<C64> = (0..5).map(|i| svd.u.as_ref().unwrap()[(i, imin)].conj()).collect();
        let argmax = |v: &[C64]| (0..5).max_by(|&i, &j| v[i].norm().partial_cmp(&v[j].norm()).unwrap()).unwrap();
        let drop_row = argmax(&vb);
        let drop_col = argmax(&ub);
        if ub[0].norm() < 1e-8 * ub[drop_col].norm() {
            return Err(Error::NullspaceFailure("null vector has no U'_x component".into()));
        }
        // U with U'_x = 1
        let rows: Vec<usize> = (0..5).filter(|&i| i != drop_row).collect();
        let m: Vec<Vec<Jet>> = rows.iter().map(|&i| (1..5).map(|j| a0[i][j]).collect()).collect();
        let rhs: Vec<Jet> = rows.iter().map(|&i| -a0[i][0]).collect();
        let sol = linalg::solve(m, rhs).ok_or_else(|| Error::NullspaceFailure("singular minor".into()))?;
        let mut u = vec![Jet::real(1.0)];
        u.extend(sol);
        // V with V_drop_row = 1, from the transposed system without column drop_col
        let cols: Vec<usize> = (0..5).filter(|&j| j != drop_col).collect();
        let others: Vec<usize> = (0..5).filter(|&i| i != drop_row).collect();
        let m: Vec<Vec<Jet>> = cols.iter().map(|&j| others.iter().map(|&i| a0[i][j]).collect()).collect();
        let rhs: Vec<Jet> = cols.iter().map(|&j| -a0[drop_row][j]).collect();
        let sol = linalg::solve(m, rhs).ok_or_else(|| Error::NullspaceFailure("singular transposed minor".into()))?;
        let mut v = vec![Jet::zero(); 5];
        v[drop_row] = Jet::real(1.0);
        for (t, &i) in others.iter().enumerate() {
            v[i] = sol[t];
        }
        let a1u = linalg::mat_vec(&a1, &u);
        let vta1u = dot(&v, &a1u);
        if vta1u.norm_base() == 0.0 {
            return Err(Error::NullspaceFailure("defective root".into()));
        }
        Ok(LayerSolver { lambda, a0, a1, a2, u, v, drop_row, vta1u })
    }

    /// Particular solution of A₀W = S in the complement {W_x = 0}.
    fn minor_solve(&self, s: &[Jet]) -> Result<Vec<Jet>> {
        let rows: Vec<usize> = (0..5).filter(|&i| i != self.drop_row).collect();
        let m: Vec<Vec<Jet>> = rows.iter().map(|&i| (1..5).map(|j| self.a0[i][j]).collect()).collect();
        let rhs: Vec<Jet> = rows.iter().map(|&i| s[i]).collect();
        let sol = linalg::solve(m, rhs).ok_or_else(|| Error::NullspaceFailure("singular minor".into()))?;
        let mut w = vec![Jet::zero()];
        w.extend(sol);
        Ok(w)
    }

    /// Solve A(λ₁ − ∂_z)W = R where `rhs[n]` is the 5-vector multiplying zⁿ.
    /// The returned W has one more power of z than R and W_x(0) = 0.
    pub fn solve(&self, rhs: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>> {
        let n_top = rhs.len();
        if n_top == 0 {
            return Ok(vec![]);
        }
        let zero5 = || vec![Jet::zero(); 5];
        // w[n] for n = 0..=n_top
        let mut w: Vec<Vec<Jet>> = vec![zero5(); n_top + 2];
        let mut wt: Vec<Vec<Jet>> = vec![zero5(); n_top + 2];
        for n in (0..n_top).rev() {
            // S_n without the unknown multiple of U in W_{n+1}
            let nf = (n + 1) as f64;
            let mut s = rhs[n].clone();
            let a1w = linalg::mat_vec(&self.a1, &wt[n + 1]);
            let a2w = linalg::mat_vec(&self.a2, &w[n + 2]);
            for i in 0..5 {
                s[i] = s[i] + a1w[i].scale_re(nf) - a2w[i].scale_re(0.5 * (n + 2) as f64 * nf);
            }
            let p = -(dot(&self.v, &s) / self.vta1u.scale_re(nf));
            for i in 0..5 {
                w[n + 1][i] = wt[n + 1][i] + p * self.u[i];
            }
            let a1u = linalg::mat_vec(&self.a1, &self.u);
            for i in 0..5 {
                s[i] = s[i] + (a1u[i] * p).scale_re(nf);
            }
            wt[n] = self.minor_solve(&s)?;
            w[n] = wt[n].clone();
        }
        w.truncate(n_top + 1);
        Ok(w)
    }

    /// Residual A(λ₁ − ∂_z)W − R, coefficientwise at base values, relative to
    /// the largest term.
    pub fn check(&self, w: &[Vec<Jet>], rhs: &[Vec<Jet>]) -> f64 {
        let n = w.len().max(rhs.len());
        let get = |v: &[Vec<Jet>], i: usize| v.get(i).cloned().unwrap_or_else(|| vec![Jet::zero(); 5]);
        let (mut worst, mut scale): (f64, f64) = (0.0, 0.0);
        for m in 0..n {
            let a0w = linalg::mat_vec(&self.a0, &get(w, m));
            let a1w = linalg::mat_vec(&self.a1, &get(w, m + 1));
            let a2w = linalg::mat_vec(&self.a2, &get(w, m + 2));
            let r = get(rhs, m);
            let nf = (m + 1) as f64;
            for i in 0..5 {
                let t = [a0w[i].value(), -a1w[i].value() * nf, a2w[i].value() * 0.5 * (m + 2) as f64 * nf, r[i].value()];
                let d = t[0] + t[1] + t[2] - t[3];
                worst = worst.max(d.norm());
                scale = scale.max(t.iter().map(|v| v.norm()).fold(0.0, f64::max));
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Solve (is²/c²)e^Z∂_Z²(Q_y e^{−Z}) + cQ_x = g for the polynomial Q_y,
/// where e^Z∂_Z²(Qe^{−Z}) = (1 − ∂_Z)²Q.
pub fn solve_qy_leading(qx: &[C64], g: &[C64], s: f64, c: f64) -> Vec<C64> {
    let n = qx.len().max(g.len());
    let k0 = c * c / (I * s * s);
    let h: Vec<C64> = (0..n)
        .map(|i| (g.get(i).copied().unwrap_or_default() - c * qx.get(i).copied().unwrap_or_default()) * k0)
        .collect();
    // (1 − D)^{−2} = Σ (m+1) D^m
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut d = h.clone();
    let mut m = 0usize;
    while d.iter().any(|v| v.norm() != 0.0) {
        for (o, v) in out.iter_mut().zip(&d) {
            *o += v * (m + 1) as f64;
        }
        d = (1..d.len()).map(|i| d[i] * i as f64).chain(std::iter::once(C64::new(0.0, 0.0))).collect();
        m += 1;
    }
    out
}

/// Left side of the leading Q_y relation minus its right side.
pub fn qy_leading_residual(qy: &[C64], qx: &[C64], g: &[C64], s: f64, c: f64) -> Vec<C64> {
    let n = qy.len().max(qx.len()).max(g.len());
    let get = |v: &[C64], i: usize| v.get(i).copied().unwrap_or_default();
    let d = |v: &[C64], i: usize| get(v, i + 1) * (i + 1) as f64;
    let dd = |v: &[C64], i: usize| get(v, i + 2) * ((i + 2) * (i + 1)) as f64;
    (0..n)
        .map(|i| {
            let l = get(qy, i) - 2.0 * d(qy, i) + dd(qy, i);
            I * s * s / (c * c) * l + c * get(qx, i) - get(g, i)
        })
        .collect()
}
