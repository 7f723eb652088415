//! wasm bindings for the demo page. Every call takes the raw exponents and
//! returns a JSON string, so the page needs no bundler or framework.

use serde_json::{json, Value};
use tiltgyre::green_kernel::build_kernel;
use tiltgyre::munk_roots::{all_roots, large_positive_count, quartic_roots};
use tiltgyre::regime::{classify_frequency, derive_unchecked, validate_relaxed, DerivedScales, Parameters, Thresholds};
use tiltgyre::{Error, C64};
use wasm_bindgen::prelude::*;

fn scales(epsilon: f64, a: f64, b: f64, d: f64, e: f64, alpha_deg: f64) -> Result<(DerivedScales, Option<String>), Error> {
    validate_relaxed(&Parameters::new(epsilon, a, b, d, e, alpha_deg.to_radians()))
}

fn cplx(z: C64) -> Value {
    json!([z.re, z.im])
}

fn fail(e: Error) -> String {
    json!({ "error": e.qualified() }).to_string()
}

/// Derived scales and the frequency regime.
#[wasm_bindgen]
pub fn regime(epsilon: f64, a: f64, b: f64, d: f64, e: f64, alpha_deg: f64) -> String {
    let (sc, warning) = match scales(epsilon, a, b, d, e, alpha_deg) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    json!({
        "regime": format!("{:?}", classify_frequency(&sc, &Thresholds::default())),
        "beta": sc.beta,
        "omega": sc.omega,
        "nu_eff": sc.nu_eff,
        "munk_scale": sc.munk_scale,
        "ekman_scale": sc.ekman_scale,
        "low_threshold": sc.low_threshold(),
        "high_threshold": sc.high_threshold(),
        "warning": warning,
    })
    .to_string()
}

/// The four vertical roots at one mode, for the given slope and its mirror.
#[wasm_bindgen]
pub fn roots(epsilon: f64, a: f64, b: f64, d: f64, e: f64, alpha_deg: f64, xi_x: f64, xi_y: f64) -> String {
    let (sc, _) = match scales(epsilon, a, b, d, e, alpha_deg) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let mirror = derive_unchecked(&Parameters::new(epsilon, a, b, d, e, -alpha_deg.to_radians()));
    let xi = (xi_x, xi_y);
    let here = all_roots(xi, &sc);
    let there = all_roots(xi, &mirror);
    let refs = quartic_roots(xi, &sc).ok().and_then(|r| r.asymptotic_refs);
    json!({
        "roots": here.iter().copied().map(cplx).collect::<Vec<_>>(),
        "mirror_roots": there.iter().copied().map(cplx).collect::<Vec<_>>(),
        "large": large_positive_count(&here, &sc),
        "mirror_large": large_positive_count(&there, &mirror),
        "references": refs.map(|r| r.plus.iter().chain(&r.minus).copied().map(cplx).collect::<Vec<_>>()),
        "munk_scale": sc.munk_scale,
    })
    .to_string()
}

/// The vertical Green kernel at one mode, sampled on [−z_max, z_max].
#[wasm_bindgen]
pub fn kernel(
    epsilon: f64,
    a: f64,
    b: f64,
    d: f64,
    e: f64,
    alpha_deg: f64,
    xi_x: f64,
    xi_y: f64,
    z_max: f64,
    samples: usize,
) -> String {
    let (sc, _) = match scales(epsilon, a, b, d, e, alpha_deg) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let k = match quartic_roots((xi_x, xi_y), &sc).and_then(|r| build_kernel(&r, &sc)) {
        Ok(k) => k,
        Err(e) => return fail(e),
    };
    let n = samples.clamp(8, 4000);
    let (down, up) = (k.downstream(), k.upstream());
    let zs: Vec<f64> = (0..=n).map(|i| -z_max + 2.0 * z_max * i as f64 / n as f64).collect();
    let g: Vec<C64> = zs.iter().map(|&z| if z >= 0.0 { down.eval(z) } else { up.eval(z) }).collect();
    json!({
        "z": zs,
        "re": g.iter().map(|v| v.re).collect::<Vec<_>>(),
        "im": g.iter().map(|v| v.im).collect::<Vec<_>>(),
        "mu_plus": k.mu_plus.iter().copied().map(cplx).collect::<Vec<_>>(),
        "mu_minus": k.mu_minus.iter().copied().map(cplx).collect::<Vec<_>>(),
    })
    .to_string()
}
