//! Per-mode Green function of the QG operator and closed-form convolution
//! with exponential-polynomial sources.

use crate::jet::Scalar;
use crate::munk_roots::{RootSet, SEPARATION_FLAG};
use crate::regime::DerivedScales;
use crate::spectral_field::{same_rate, ExpPoly, Term};
use crate::{Error, Result, C64};
use nalgebra::{DMatrix, DVector};

/// Ĝ(z) = Σ C_j⁺ e^{−μ_j⁺z} for z > 0 and Σ C_j⁻ e^{−μ_j⁻z} for z < 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenKernel<T> {
    pub mu_plus: [T; 2],
    pub mu_minus: [T; 2],
    pub c_plus: [T; 2],
    pub c_minus: [T; 2],
    pub nu_eff_s2: f64,
}

/// C_j^± = ±(1/(ν s²)) Π_{l≠j} 1/(μ_j − μ_l), over all four roots.
pub fn lagrange_coeffs<T: Scalar>(mu_plus: [T; 2], mu_minus: [T; 2], nu_eff_s2: f64) -> ([T; 2], [T; 2]) {
    let all = [mu_plus[0], mu_plus[1], mu_minus[0], mu_minus[1]];
    let k = T::re(1.0 / nu_eff_s2);
    let prod = |j: usize| {
        let mut p = T::one();
        for (l, &r) in all.iter().enumerate() {
            if l != j {
                p = p * (all[j] - r);
            }
        }
        k / p
    };
    ([prod(0), prod(1)], [-prod(2), -prod(3)])
}

/// Jump system: [∂_z^k Ĝ] = 0 for k = 0,1,2 and −1/(ν s²) for k = 3.
fn jump_system(plus: [C64; 2], minus: [C64; 2], nu_eff_s2: f64) -> (DMatrix<C64>, DVector<C64>) {
    let mut m = DMatrix::<C64>::zeros(4, 4);
    for k in 0..4 {
        for j in 0..2 {
            m[(k, j)] = (-plus[j]).powu(k as u32);
            m[(k, 2 + j)] = -(-minus[j]).powu(k as u32);
        }
    }
    let mut b = DVector::<C64>::zeros(4);
    b[3] = C64::new(-1.0 / nu_eff_s2, 0.0);
    (m, b)
}

/// Solve the 4×4 jump system directly (LU). Returns (C⁺, C⁻).
pub fn solve_jump_system(plus: [C64; 2], minus: [C64; 2], nu_eff_s2: f64) -> Option<([C64; 2], [C64; 2])> {
    let (m, b) = jump_system(plus, minus, nu_eff_s2);
    let x = m.full_piv_lu().solve(&b)?;
    Some(([x[0], x[1]], [x[2], x[3]]))
}

/// Kernel from classified roots. Coefficients come from the Lagrange product
/// and are checked against the jump system.
pub fn build_kernel(roots: &RootSet, sc: &DerivedScales) -> Result<GreenKernel<C64>> {
    let nu = sc.nu_eff * sc.s * sc.s;
    let (cp, cm) = lagrange_coeffs(roots.mu_plus, roots.mu_minus, nu);
    let (m, b) = jump_system(roots.mu_plus, roots.mu_minus, nu);
    let x = DVector::from_vec(vec![cp[0], cp[1], cm[0], cm[1]]);
    let res = (&m * &x - &b).norm();
    let scale: f64 = m.iter().map(|v| v.norm()).fold(0.0, f64::max) * x.norm() + b.norm();
    let rel = res / scale;
    if !(rel <= 1e-8) || roots.separation < SEPARATION_FLAG {
        return Err(Error::IllConditioned(format!(
            "jump residual {rel:.3e}, separation {:.3e}",
            roots.separation
        )));
    }
    Ok(GreenKernel { mu_plus: roots.mu_plus, mu_minus: roots.mu_minus, c_plus: cp, c_minus: cm, nu_eff_s2: nu })
}

/// Kernel from (possibly jet-valued) roots, Lagrange form only.
pub fn kernel_from_roots<T: Scalar>(mu_plus: [T; 2], mu_minus: [T; 2], sc: &DerivedScales) -> GreenKernel<T> {
    let nu = sc.nu_eff * sc.s * sc.s;
    let (c_plus, c_minus) = lagrange_coeffs(mu_plus, mu_minus, nu);
    GreenKernel { mu_plus, mu_minus, c_plus, c_minus, nu_eff_s2: nu }
}

impl<T: Scalar> GreenKernel<T> {
    /// Ĝ on z > 0 as a profile.
    pub fn downstream(&self) -> ExpPoly<T> {
        ExpPoly {
            terms: (0..2).map(|j| Term { rate: self.mu_plus[j], poly: vec![self.c_plus[j]] }).collect(),
        }
    }

    /// Ĝ on z < 0 as a profile in z (valid for negative z only).
    pub fn upstream(&self) -> ExpPoly<T> {
        ExpPoly {
            terms: (0..2).map(|j| Term { rate: self.mu_minus[j], poly: vec![self.c_minus[j]] }).collect(),
        }
    }

    pub fn max_coeff(&self) -> f64 {
        self.c_plus.iter().chain(&self.c_minus).map(|c| c.base().norm()).fold(0.0, f64::max)
    }
}

/// ∫₀^∞ Ĝ(z−z')S(z')dz' in closed form.
pub fn convolve<T: Scalar>(k: &GreenKernel<T>, src: &ExpPoly<T>) -> ExpPoly<T> {
    let mut out = ExpPoly::zero();
    for t in &src.terms {
        for (n, &p) in t.poly.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            conv_monomial(k, t.rate, n, p, &mut out);
        }
    }
    out
}

fn falling(n: usize, k: usize) -> f64 {
    // n!/(n−k)!
    ((n - k + 1)..=n).fold(1.0, |a, v| a * v as f64)
}

/// Contribution of amp·zⁿe^{−γz}.
fn conv_monomial<T: Scalar>(k: &GreenKernel<T>, gamma: T, n: usize, amp: T, out: &mut ExpPoly<T>) {
    let mut at_gamma = vec![T::zero(); n + 1];
    for j in 0..2 {
        let mu = k.mu_plus[j];
        let cp = k.c_plus[j] * amp;
        if same_rate(mu.base(), gamma.base()) {
            // ∫₀^z t^n dt
            let mut poly = vec![T::zero(); n + 2];
            poly[n + 1] = cp.scale(C64::new(1.0 / (n + 1) as f64, 0.0));
            *out = out.add(&ExpPoly::term(mu, poly));
        } else {
            let d = mu - gamma;
            let inv = T::one() / d;
            let mut dk = inv;
            for kk in 0..=n {
                let sgn = if kk % 2 == 0 { 1.0 } else { -1.0 };
                at_gamma[n - kk] = at_gamma[n - kk] + (cp * dk).scale(C64::new(sgn * falling(n, kk), 0.0));
                if kk < n {
                    dk = dk * inv;
                }
            }
            // dk = d^{−(n+1)}
            let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
            let c0 = (cp * dk).scale(C64::new(-sgn * falling(n, n), 0.0));
            *out = out.add(&ExpPoly::exp(mu, c0));
        }
    }
    for j in 0..2 {
        let q = gamma - k.mu_minus[j];
        let cm = k.c_minus[j] * amp;
        let inv = T::one() / q;
        let mut qk = inv;
        for kk in 0..=n {
            at_gamma[n - kk] = at_gamma[n - kk] + (cm * qk).scale(C64::new(falling(n, kk), 0.0));
            if kk < n {
                qk = qk * inv;
            }
        }
    }
    *out = out.add(&ExpPoly::term(gamma, at_gamma));
}

/// ∂_z^{k+1}(G∗S) written as G∗∂_z^{k+1}S + Σ_{m≤k} ∂_z^{k−m}G(z)·∂_z^m S(0).
pub fn boundary_derivative<T: Scalar>(kern: &GreenKernel<T>, src: &ExpPoly<T>, k: usize) -> ExpPoly<T> {
    let mut ds = src.clone();
    let mut traces = Vec::with_capacity(k + 1);
    for _ in 0..=k {
        traces.push(ds.trace());
        ds = ds.dz();
    }
    let mut out = convolve(kern, &ds);
    let mut g = kern.downstream();
    let mut gd = vec![g.clone()];
    for _ in 0..k {
        g = g.dz();
        gd.push(g.clone());
    }
    for (m, &tr) in traces.iter().enumerate() {
        out = out.add(&gd[k - m].mul_scalar(tr));
    }
    out
}

/// Constant B with |G∗e^{−γz}| ≤ B e^{−γz}, valid for γ ≤ min Re μ⁺/2.
pub fn exp_decay_bound(kern: &GreenKernel<C64>, gamma: f64) -> Result<f64> {
    let limit = kern.mu_plus.iter().map(|m| m.re).fold(f64::INFINITY, f64::min) / 2.0;
    if !(gamma > 0.0 && gamma <= limit) {
        return Err(Error::GammaTooLarge { gamma, limit });
    }
    Ok(kern.max_coeff() * 4.0 / gamma)
}
