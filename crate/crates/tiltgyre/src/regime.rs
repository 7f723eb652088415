//! Parameter hypotheses, derived coefficients and the frequency regime.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Exponent form of the physical parameters: β = ε^{−a}, ω = ε^{−b},
/// ν_h = ε^d, ν₃ = ε^e, δ = ε^{M/2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub e: f64,
    /// Slope angle in radians.
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: u32,
}

impl Parameters {
    pub fn new(epsilon: f64, a: f64, b: f64, d: f64, e: f64, alpha: f64) -> Parameters {
        Parameters { epsilon, a, b, d, e, alpha, m: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub epsilon: f64,
    pub beta: f64,
    pub omega: f64,
    pub nu_h: f64,
    pub nu_3: f64,
    pub delta: f64,
    pub s: f64,
    pub c: f64,
    pub nu_eff: f64,
    pub munk_scale: f64,
    pub ekman_scale: f64,
    pub m: u32,
}

impl DerivedScales {
    /// Scales from raw coefficients, bypassing the exponent hypotheses. Used by
    /// synthetic checks (e.g. β = ω = 0).
    pub fn from_raw(
        epsilon: f64,
        beta: f64,
        omega: f64,
        nu_h: f64,
        nu_3: f64,
        delta: f64,
        alpha: f64,
    ) -> DerivedScales {
        let (s, c) = alpha.sin_cos();
        let nu_eff = nu_h * s * s + nu_3 * c * c;
        DerivedScales {
            epsilon,
            beta,
            omega,
            nu_h,
            nu_3,
            delta,
            s,
            c,
            nu_eff,
            munk_scale: (beta / nu_eff).cbrt(),
            ekman_scale: (s / c).abs() / (nu_eff.sqrt() * epsilon * omega.abs().sqrt()),
            m: 2,
        }
    }

    pub fn with_omega(mut self, omega: f64) -> DerivedScales {
        self.omega = omega;
        self.ekman_scale =
            (self.s / self.c).abs() / (self.nu_eff.sqrt() * self.epsilon * omega.abs().sqrt());
        self
    }

    /// β^{2/3} ν_eff^{1/3}, the Munk-regime frequency scale.
    pub fn low_threshold(&self) -> f64 {
        self.beta.powf(2.0 / 3.0) * self.nu_eff.cbrt()
    }

    /// β^{3/4} ν_eff^{1/4}.
    pub fn high_threshold(&self) -> f64 {
        self.beta.powf(0.75) * self.nu_eff.powf(0.25)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyRegime {
    LowFreq,
    MidFreq,
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { theta_lo: 1.0, theta_hi: 0.1 }
    }
}

fn derive(p: &Parameters) -> DerivedScales {
    let eps = p.epsilon;
    let mut sc = DerivedScales::from_raw(
        eps,
        eps.powf(-p.a),
        eps.powf(-p.b),
        eps.powf(p.d),
        eps.powf(p.e),
        eps.powf(p.m as f64 / 2.0),
        p.alpha,
    );
    sc.m = p.m;
    sc
}

fn check_common(p: &Parameters) -> Result<()> {
    let bad = |s: &str| Err(Error::RegimeViolation(s.to_string()));
    if !(p.epsilon > 0.0 && p.epsilon.is_finite()) {
        return bad("epsilon>0");
    }
    if !(p.a > 0.0) {
        return bad("0<a");
    }
    if !(p.a < 1.0) {
        return bad("a<1");
    }
    if !(p.d >= 0.0) {
        return bad("d≥0");
    }
    if !(p.e >= p.d) {
        return bad("e≥d");
    }
    if p.m == 0 {
        return bad("M≥1");
    }
    let (s, c) = p.alpha.sin_cos();
    if !(p.alpha.abs() < std::f64::consts::FRAC_PI_2) || s.abs() < 1e-12 || c.abs() < 1e-12 {
        return bad("sin α≠0 and cos α≠0");
    }
    Ok(())
}

/// Check (H0) and return all derived coefficients.
pub fn validate(p: &Parameters) -> Result<DerivedScales> {
    check_common(p)?;
    if !(p.b <= (2.0 * p.a - p.d) / 3.0 + 1e-12) {
        return Err(Error::RegimeViolation("b ≤ (2a−d)/3".into()));
    }
    Ok(derive(p))
}

/// Like [`validate`] but accepting the weaker frequency bound b ≤ (3a−d)/4.
/// The second value is a warning when only the weaker bound holds.
pub fn validate_relaxed(p: &Parameters) -> Result<(DerivedScales, Option<String>)> {
    check_common(p)?;
    if p.b <= (2.0 * p.a - p.d) / 3.0 + 1e-12 {
        return Ok((derive(p), None));
    }
    if !(p.b <= (3.0 * p.a - p.d) / 4.0 + 1e-12) {
        return Err(Error::RegimeViolation("b ≤ (3a−d)/4".into()));
    }
    Ok((
        derive(p),
        Some(format!(
            "relaxed frequency bound in use: b = {} > (2a−d)/3 = {}; estimates are not established in this range",
            p.b,
            (2.0 * p.a - p.d) / 3.0
        )),
    ))
}

/// Derived coefficients with no hypothesis check at all.
pub fn derive_unchecked(p: &Parameters) -> DerivedScales {
    derive(p)
}

pub fn classify_frequency(sc: &DerivedScales, th: &Thresholds) -> FrequencyRegime {
    let w = sc.omega.abs();
    if w <= th.theta_lo * sc.low_threshold() {
        FrequencyRegime::LowFreq
    } else if w <= th.theta_hi * sc.high_threshold() {
        FrequencyRegime::MidFreq
    } else {
        FrequencyRegime::OutOfRange
    }
}
