//! Characteristic quartic of the per-mode QG operator: exact roots, sign
//! split, asymptotic references and separation.

use crate::jet::{Jet, Scalar};
use crate::poly;
use crate::regime::{classify_frequency, DerivedScales, FrequencyRegime, Thresholds};
use crate::{Error, Result, C64};
use serde::Serialize;

const I: C64 = C64::new(0.0, 1.0);

/// Below this ratio the Green coefficients are considered unreliable.
pub const SEPARATION_FLAG: f64 = 1e-3;

use crate::poly::{padd, pmul};

/// Ascending coefficients in μ of
/// iω(μ²−|ξ|²) + β(ciξ_x+sμ) − (ν_h((ciξ_x+sμ)²−ξ_y²) + ν₃(isξ_x−cμ)²)((ciξ_x+sμ)²−ξ_y²).
/// This is also the symbol of the QG operator on e^{−μz}.
pub fn quartic_coeffs<T: Scalar>(xi_x: T, xi_y: T, sc: &DerivedScales) -> Vec<T> {
    let (s, c) = (sc.s, sc.c);
    let ix = xi_x.scale(I);
    let a = [ix.scale(C64::new(c, 0.0)), T::re(s)];
    let b = [ix.scale(C64::new(s, 0.0)), T::re(-c)];
    let yy = xi_y * xi_y;
    let a2 = padd(&pmul(&a, &a), &[-yy]);
    let b2 = pmul(&b, &b);
    let visc = padd(
        &a2.iter().map(|&v| v.scale(C64::new(sc.nu_h, 0.0))).collect::<Vec<_>>(),
        &b2.iter().map(|&v| v.scale(C64::new(sc.nu_3, 0.0))).collect::<Vec<_>>(),
    );
    let visc = pmul(&visc, &a2);
    let iw = C64::new(0.0, sc.omega);
    let lap = [-(xi_x * xi_x) - yy, T::zero(), T::one()];
    let mut q: Vec<T> = lap.iter().map(|&v| v.scale(iw)).collect();
    q = padd(&q, &a.iter().map(|&v| v.scale(C64::new(sc.beta, 0.0))).collect::<Vec<_>>());
    padd(&q, &visc.iter().map(|&v| -v).collect::<Vec<_>>())
}

/// Closed-form reference roots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticRefs {
    pub plus: [C64; 2],
    /// `minus[0]` is the small root.
    pub minus: [C64; 2],
    /// Refined estimate of the small real part of the slow decaying root
    /// (frequency-dominated regime only).
    pub re_slow_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootSet {
    /// Re μ₁⁺ ≤ Re μ₂⁺, both positive.
    pub mu_plus: [C64; 2],
    /// Re μ₁⁻ ≥ Re μ₂⁻, both negative.
    pub mu_minus: [C64; 2],
    pub regime: FrequencyRegime,
    pub asymptotic_refs: Option<AsymptoticRefs>,
    pub separation: f64,
    /// Roots with |Re μ| < 1e-10|μ| that are still certified off the axis.
    pub near_imaginary: usize,
    pub max_residual: f64,
}

impl RootSet {
    pub fn all(&self) -> [C64; 4] {
        [self.mu_plus[0], self.mu_plus[1], self.mu_minus[0], self.mu_minus[1]]
    }
}

/// The four roots, unclassified.
pub fn all_roots(xi: (f64, f64), sc: &DerivedScales) -> Vec<C64> {
    let q = quartic_coeffs(C64::new(xi.0, 0.0), C64::new(xi.1, 0.0), sc);
    poly::roots(&q)
}

/// min_{i≠j}|μ_i−μ_j| / max|μ|
pub fn separation(roots: &[C64]) -> f64 {
    let m = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut d = f64::INFINITY;
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            d = d.min((roots[i] - roots[j]).norm());
        }
    }
    if m == 0.0 {
        0.0
    } else {
        d / m
    }
}

/// Separation ratio and whether it is below [`SEPARATION_FLAG`].
pub fn check_separation(roots: &RootSet) -> (f64, bool) {
    let r = separation(&roots.all());
    (r, r < SEPARATION_FLAG)
}

/// Exact roots of the quartic at one mode, split by the sign of the real part.
pub fn quartic_roots(xi: (f64, f64), sc: &DerivedScales) -> Result<RootSet> {
    quartic_roots_with(xi, sc, &Thresholds::default())
}

pub fn quartic_roots_with(xi: (f64, f64), sc: &DerivedScales, th: &Thresholds) -> Result<RootSet> {
    let q = quartic_coeffs(C64::new(xi.0, 0.0), C64::new(xi.1, 0.0), sc);
    let r = poly::roots(&q);
    if r.len() != 4 {
        return Err(Error::SignSplitViolation(r.iter().filter(|z| z.re > 0.0).count()));
    }
    let mut near = 0;
    let mut max_res: f64 = 0.0;
    for &z in &r {
        max_res = max_res.max(poly::rel_residual(&q, z));
        if z.re.abs() <= 4.0 * poly::root_error_bound(&q, z) {
            return Err(Error::PureImaginaryRoot(format!(
                "mu = {z:.6e} at xi = ({:.4}, {:.4}), omega = {}",
                xi.0, xi.1, sc.omega
            )));
        }
        if z.re.abs() < 1e-10 * z.norm() {
            near += 1;
        }
    }
    let mut plus: Vec<C64> = r.iter().copied().filter(|z| z.re > 0.0).collect();
    let mut minus: Vec<C64> = r.iter().copied().filter(|z| z.re < 0.0).collect();
    if plus.len() != 2 || minus.len() != 2 {
        return Err(Error::SignSplitViolation(plus.len()));
    }
    plus.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    minus.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    let regime = classify_frequency(sc, th);
    let refs = match regime {
        FrequencyRegime::MidFreq => midfreq_asymptotics_with(xi, sc.omega, sc, th).ok(),
        _ => lowfreq_refs(xi, sc).ok(),
    };
    let all = [plus[0], plus[1], minus[0], minus[1]];
    Ok(RootSet {
        mu_plus: [plus[0], plus[1]],
        mu_minus: [minus[0], minus[1]],
        regime,
        asymptotic_refs: refs,
        separation: separation(&all),
        near_imaginary: near,
        max_residual: max_res,
    })
}

/// Roots of i·w̃·M + s − s²M³ = 0: two with Re > 0 first (ascending Re),
/// then the one with Re < 0 (for s < 0).
pub fn munk_cubic_scaled(w_tilde: f64, s: f64) -> [C64; 3] {
    let a = [C64::new(s, 0.0), C64::new(0.0, w_tilde), C64::new(0.0, 0.0), C64::new(-s * s, 0.0)];
    let mut r = poly::roots(&a);
    r.sort_by(|x, y| y.re.partial_cmp(&x.re).unwrap());
    // the two largest real parts are the decaying pair
    let (mut p, m) = ([r[0], r[1]], r[2]);
    p.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(y.im.partial_cmp(&x.im).unwrap()));
    [p[0], p[1], m]
}

/// Scaled cubic roots (M₁⁺, M₂⁺, M₂⁻) for the Munk-dominated regime.
/// Refused only in the frequency-dominated range: at the edge of the
/// parameter hypotheses ω is a fixed multiple of β^{2/3}ν^{1/3}, which the
/// default thresholds tag as out of range although the cubic is exact there.
pub fn munk_cubic(omega: f64, sc: &DerivedScales) -> Result<[C64; 3]> {
    let sc = sc.with_omega(omega);
    if classify_frequency(&sc, &Thresholds::default()) == FrequencyRegime::MidFreq {
        return Err(Error::RegimeError(format!(
            "cubic references need |omega| <= {:.4e}, got {omega}",
            sc.low_threshold()
        )));
    }
    let lt = sc.low_threshold();
    Ok(munk_cubic_scaled(if lt > 0.0 { omega / lt } else { 0.0 }, sc.s))
}

fn lowfreq_refs(xi: (f64, f64), sc: &DerivedScales) -> Result<AsymptoticRefs> {
    let m = munk_cubic(sc.omega, sc)?;
    let k = sc.munk_scale;
    Ok(AsymptoticRefs {
        plus: [m[0] * k, m[1] * k],
        minus: [-I * sc.c * xi.0 / sc.s, m[2] * k],
        re_slow_plus: None,
    })
}

/// Reference roots in the frequency-dominated regime.
pub fn midfreq_asymptotics(xi: (f64, f64), omega: f64, sc: &DerivedScales) -> Result<AsymptoticRefs> {
    midfreq_asymptotics_with(xi, omega, sc, &Thresholds::default())
}

fn midfreq_asymptotics_with(
    xi: (f64, f64),
    omega: f64,
    sc: &DerivedScales,
    th: &Thresholds,
) -> Result<AsymptoticRefs> {
    let sc = sc.with_omega(omega);
    if classify_frequency(&sc, th) != FrequencyRegime::MidFreq {
        return Err(Error::RegimeError(format!("omega = {omega} is not in the frequency-dominated range")));
    }
    let (s, nu, b) = (sc.s, sc.nu_eff, sc.beta);
    let xi_max = 0.1 * b.powi(3) * nu / omega.powi(4);
    let xn = (xi.0 * xi.0 + xi.1 * xi.1).sqrt();
    if xn > xi_max {
        return Err(Error::RegimeError(format!("|xi| = {xn:.4e} exceeds {xi_max:.4e}")));
    }
    let sg = omega.signum();
    let m1 = (omega / (nu * s * s)).abs().sqrt() * C64::from_polar(1.0, sg * std::f64::consts::FRAC_PI_4);
    let m2 = -b * s / (I * omega);
    Ok(AsymptoticRefs {
        plus: [m1, m2],
        minus: [-I * sc.c * xi.0 / s, -m1],
        re_slow_plus: Some(-nu * s.powi(5) * b.powi(3) / omega.powi(4)),
    })
}

/// Number of roots with Re μ ≥ half the Munk scale.
pub fn large_positive_count(roots: &[C64], sc: &DerivedScales) -> usize {
    roots.iter().filter(|z| z.re >= 0.5 * sc.munk_scale).count()
}

/// Taylor series in ξ_y of the given base roots, at degree `deg`.
pub fn jet_roots(xi_x: f64, xi_y: Jet, base: &[C64], sc: &DerivedScales, deg: usize) -> Vec<Jet> {
    let q = quartic_coeffs(Jet::real(xi_x), xi_y, sc);
    base.iter().map(|&r| poly::jet_root(&q, r, deg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regime::{validate, Parameters};
    use std::f64::consts::FRAC_PI_4;

    fn near_set(got: &[C64], want: &[C64], tol: f64) -> bool {
        want.iter().all(|w| got.iter().any(|g| (g - w).norm() <= tol * w.norm().max(1.0)))
    }

    #[test]
    fn inviscid_free_example() {
        let sc = DerivedScales::from_raw(1e-2, 0.0, 0.0, 1.0, 1.0, 1e-2, -FRAC_PI_4);
        let r = quartic_roots((0.0, 1.0), &sc).unwrap();
        let s2 = 2f64.sqrt();
        assert!(near_set(&r.mu_plus, &[C64::new(1.0, 0.0), C64::new(s2, 0.0)], 1e-12));
        assert!(near_set(&r.mu_minus, &[C64::new(-1.0, 0.0), C64::new(-s2, 0.0)], 1e-12));
        assert!((r.mu_minus[0].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cube_roots_of_minus_one() {
        let m = munk_cubic_scaled(0.0, -1.0);
        assert!((m[2] + 1.0).norm() < 1e-14);
        let e = C64::from_polar(1.0, std::f64::consts::PI / 3.0);
        assert!(near_set(&m[..2], &[e, e.conj()], 1e-14));
        let m = munk_cubic_scaled(0.0, -0.5);
        assert!((m[2] + 2f64.cbrt()).norm() < 1e-14);
    }

    #[test]
    fn separation_arithmetic() {
        let r = [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(2.0, 0.0), C64::new(-2.0, 0.0)];
        assert!((separation(&r) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lowfreq_preset_matches_references() {
        let p = Parameters::new(1e-3, 0.5, 0.0, 1.0, 2.0, -FRAC_PI_4);
        let sc = validate(&p).unwrap();
        let r = quartic_roots((1.0, 1.0), &sc).unwrap();
        let refs = r.asymptotic_refs.unwrap();
        assert!((r.mu_minus[0] - refs.minus[0]).norm() <= 0.15 * refs.minus[0].norm());
        assert!(near_set(&r.mu_plus, &refs.plus, 0.15));
        assert!(r.max_residual < 1e-9);
    }
}
