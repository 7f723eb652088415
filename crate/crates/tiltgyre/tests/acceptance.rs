//! The thirteen acceptance criteria, run in order. Each prints one line
//! straight to stderr (so it shows without --nocapture); gated criteria are
//! asserted together at the end.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::FRAC_PI_4;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;
use tiltgyre::cascade::{
    assemble, close_boundary, ekman_step, interior_step, munk_step, run_mode, sample_heights, CascadeConfig, EkmanCtx,
};
use tiltgyre::cli_io::{self, RunConfig};
use tiltgyre::ekman_layer::{
    a_matrix, angle_to_ex, discard_rule, eigenvector_lambda1, hydrostatic_defect, layer_roots, DiscardReason,
};
use tiltgyre::green_kernel::{build_kernel, convolve, solve_jump_system};
use tiltgyre::linalg;
use tiltgyre::munk_roots::{all_roots, large_positive_count, quartic_coeffs, quartic_roots};
use tiltgyre::qg_builder::{corrector_rhs, corrector_rhs_composed, ExpansionTerm, ModeCtx, Part};
use tiltgyre::regime::{
    classify_frequency, derive_unchecked, validate, validate_relaxed, DerivedScales, FrequencyRegime, Parameters,
    Thresholds,
};
use tiltgyre::spectral_field::{
    Component, DOp, Envelope, ExpPoly, ForcingRecipe, ModeGrid, ModeSymbols, Op, SpectralField,
};
use tiltgyre::C64;

const LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn lowfreq(eps: f64) -> DerivedScales {
    validate(&Parameters::new(eps, 0.5, 0.0, 1.0, 2.0, -FRAC_PI_4)).unwrap()
}

/// Frequency-dominated preset: ε = 1e-4, a = 0.9, ν_h = ν₃ = ε³ and ω at
/// 0.09 of β^{3/4}ν^{1/4}, inside the mid band and still resolvable in f64.
fn midfreq() -> DerivedScales {
    let (eps, a, d) = (1e-4, 0.9, 3.0);
    let w = 0.09 * derive_unchecked(&Parameters::new(eps, a, 0.0, d, d, -FRAC_PI_4)).high_threshold();
    validate_relaxed(&Parameters::new(eps, a, -w.ln() / eps.ln(), d, d, -FRAC_PI_4)).unwrap().0
}

fn ekman_preset() -> DerivedScales {
    DerivedScales::from_raw(1e-2, 10.0, 1.0, 1e-4, 1e-4, 1e-2, -FRAC_PI_4)
}

fn recipe() -> ForcingRecipe {
    ForcingRecipe {
        amplitude: [1.0, 0.5],
        x_envelope: Envelope::Gaussian { width: 2.0, center: 0.0 },
        y_envelope: Envelope::Gaussian { width: 2.0, center: 0.0 },
        y_wavenumber: 0.0,
        gamma: 1.0,
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

// 1. sign split over random draws in both regimes
fn root_structure() -> Outcome {
    let t = Instant::now();
    let s = cli_io::root_survey(2024, 1000);
    let secs = t.elapsed().as_secs_f64();
    let both = s.by_regime.get("LowFreq").copied().unwrap_or(0) > 0 && s.by_regime.get("MidFreq").copied().unwrap_or(0) > 0;
    outcome(
        s.draws >= 1000 && s.split_ok == s.draws && s.worst_residual <= 1e-9 && secs <= 10.0 && both,
        format!(
            "{}/{} split, worst residual {:.2e}, {:?}, {} below f64 certification, {secs:.2} s",
            s.split_ok, s.draws, s.worst_residual, s.by_regime, s.uncertified
        ),
    )
}

// 2. β = ω = 0, ν = 1, α = −π/4, ξ = (0, 1)
fn closed_form() -> Outcome {
    let sc = DerivedScales::from_raw(1e-2, 0.0, 0.0, 1.0, 1.0, 1e-2, -FRAC_PI_4);
    let r = all_roots((0.0, 1.0), &sc);
    let s2 = 2f64.sqrt();
    let want = [-s2, s2, 1.0, -1.0];
    let err = want
        .iter()
        .map(|&w| r.iter().map(|z| (z - c(w, 0.0)).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let split = quartic_roots((0.0, 1.0), &sc).is_ok();
    outcome(r.len() == 4 && err <= 1e-12 && split, format!("max root error {err:.2e}"))
}

fn ref_gap(xi: (f64, f64), sc: &DerivedScales) -> f64 {
    let r = quartic_roots(xi, sc).unwrap();
    let refs = r.asymptotic_refs.unwrap();
    let exact = r.all();
    refs.plus
        .iter()
        .chain(&refs.minus)
        .map(|&w| exact.iter().map(|&z| rel(z, w)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

// 3. exact roots approach the references down the ε ladder
fn asymptotic_convergence() -> Outcome {
    let xis = [(1.0, 1.0), (0.5, -0.7), (-1.5, 0.3)];
    let gaps: Vec<f64> =
        LADDER.iter().map(|&e| xis.iter().map(|&xi| ref_gap(xi, &lowfreq(e))).fold(0.0, f64::max)).collect();
    let mono = gaps.windows(2).all(|w| w[1] <= 1.2 * w[0]);
    let mid = ref_gap((1.0, 1.0), &midfreq());
    outcome(
        mono && gaps[2] <= 0.15,
        format!("max gaps {:.3e} {:.3e} {:.3e} (frequency-dominated preset: {mid:.3e})", gaps[0], gaps[1], gaps[2]),
    )
}

/// The quartic written as a z-operator: e^{−μz} ↦ Q(μ), so ∂_z^k carries (−1)^k q_k.
fn quartic_operator(xi: (f64, f64), sc: &DerivedScales) -> DOp<C64> {
    let q = quartic_coeffs(c(xi.0, 0.0), c(xi.1, 0.0), sc);
    DOp { coeffs: q.iter().enumerate().map(|(k, &v)| if k % 2 == 0 { v } else { -v }).collect() }
}

fn random_source(rng: &mut StdRng) -> ExpPoly<C64> {
    let mut s = ExpPoly::zero();
    for _ in 0..2 {
        let rate = c(rng.random_range(0.2..3.0), rng.random_range(-2.0..2.0));
        let poly = vec![c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), c(rng.random_range(-0.5..0.5), 0.0)];
        s = s.add(&ExpPoly::term(rate, poly));
    }
    s
}

// 4. the kernel inverts the operator; jumps; two coefficient routes
fn green_property() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    let zs = [0.05, 0.2, 0.7, 1.5, 4.0];
    let (mut inv, mut cont, mut jump, mut coeff) = (0f64, 0f64, 0f64, 0f64);
    let mut modes = 0;
    while modes < 100 {
        let eps = if modes % 2 == 0 { 1e-2 } else { 1e-3 };
        let alpha = -rng.random_range(15.0f64..75.0).to_radians();
        let sc = validate(&Parameters::new(eps, 0.5, 0.0, 1.0, 2.0, alpha)).unwrap();
        let xi = (rng.random_range(-3.0..3.0), rng.random_range(0.1..3.0));
        let Ok(roots) = quartic_roots(xi, &sc) else { continue };
        let k = build_kernel(&roots, &sc).unwrap();
        modes += 1;
        let src = random_source(&mut rng);
        let g = convolve(&k, &src);
        let lg = g.apply(&quartic_operator(xi, &sc));
        let scale = src.sup_sampled(&zs);
        inv = inv.max(zs.iter().map(|&z| (lg.eval(z) - src.eval(z)).norm()).fold(0.0, f64::max) / scale);
        // same check through the operator algebra's own L2 symbol
        let lg2 = g.apply(&ModeSymbols::new(c(xi.0, 0.0), c(xi.1, 0.0), sc).op(Op::L2));
        inv = inv.max(zs.iter().map(|&z| (lg2.eval(z) - src.eval(z)).norm()).fold(0.0, f64::max) / scale);
        let (mut up, mut down) = (k.upstream(), k.downstream());
        let nu = sc.nu_eff * sc.s * sc.s;
        for order in 0..4 {
            let size: f64 = k
                .c_plus
                .iter()
                .zip(&k.mu_plus)
                .chain(k.c_minus.iter().zip(&k.mu_minus))
                .map(|(cc, m)| cc.norm() * m.norm().powi(order))
                .sum();
            let d = down.trace() - up.trace();
            if order < 3 {
                cont = cont.max(d.norm() / size);
            } else {
                jump = jump.max(rel(d, c(-1.0 / nu, 0.0)));
            }
            up = up.dz();
            down = down.dz();
        }
        let (p, m) = solve_jump_system(roots.mu_plus, roots.mu_minus, nu).unwrap();
        for (a, b) in p.iter().chain(&m).zip(k.c_plus.iter().chain(&k.c_minus)) {
            coeff = coeff.max(rel(*a, *b));
        }
    }
    outcome(
        inv <= 1e-8 && cont <= 1e-10 && jump <= 1e-9 && coeff <= 1e-10,
        format!("{modes} modes: inverse {inv:.2e}, continuity {cont:.2e}, third jump {jump:.2e}, coefficients {coeff:.2e}"),
    )
}

// 5. β∂₁(G∗S) → S away from the layer
fn sverdrup_limit() -> Outcome {
    let xis = [(0.5, 0.7), (1.0, 1.0), (-0.8, 0.4)];
    let mut defects = vec![];
    for &eps in &LADDER {
        let sc = lowfreq(eps);
        let mut worst: f64 = 0.0;
        for &xi in &xis {
            let roots = quartic_roots(xi, &sc).unwrap();
            let k = build_kernel(&roots, &sc).unwrap();
            let src = ExpPoly::exp(c(1.0, 0.0), c(1.0, 0.0)).add(&ExpPoly::term(c(0.5, 0.3), vec![c(0.0, 0.0), c(0.4, 0.0)]));
            let d1 = DOp { coeffs: vec![c(0.0, sc.c * xi.0), c(-sc.s, 0.0)] };
            let defect = convolve(&k, &src).apply(&d1).scale(c(sc.beta, 0.0)).sub(&src);
            let z0 = 5.0 / roots.mu_plus[0].re;
            let zs: Vec<f64> = (0..400).map(|i| z0 + i as f64 * 0.05).collect();
            worst = worst.max(defect.sup_sampled(&zs) / src.sup_sampled(&zs));
        }
        defects.push(worst);
    }
    let factors: Vec<f64> = defects.windows(2).map(|w| w[0] / w[1]).collect();
    outcome(
        factors.iter().all(|&f| f >= 2.0),
        format!(
            "defects {:.3e} {:.3e} {:.3e}, decrease per decade {:.2} {:.2}",
            defects[0], defects[1], defects[2], factors[0], factors[1]
        ),
    )
}

/// Roots with Re μ ≥ frac·(β/ν_eff)^{1/3}.
fn count_above(roots: &[C64], sc: &DerivedScales, frac: f64) -> usize {
    roots.iter().filter(|z| z.re >= frac * sc.munk_scale).count()
}

// 6. two fast decaying roots on a western slope, one on an eastern slope
fn east_west() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let th = Thresholds::default();
    let (mut draws, mut ok, mut ok_quarter) = (0, 0, 0);
    let mut bad = vec![];
    while draws < 100 {
        let a = rng.random_range(0.2..0.9);
        let eps = 10f64.powf(rng.random_range(-4.0..-1.5));
        let d = rng.random_range(0.0..1.5 * a);
        let e = d + rng.random_range(0.0..2.0);
        let alpha = -rng.random_range(10.0f64..80.0).to_radians();
        let lo = derive_unchecked(&Parameters::new(eps, a, 0.0, d, e, alpha)).low_threshold();
        let w = lo * (-rng.random_range(0.0..6.0f64)).exp();
        let p = Parameters::new(eps, a, -w.ln() / eps.ln(), d, e, alpha);
        let Ok(west) = validate(&p) else { continue };
        if classify_frequency(&west, &th) != FrequencyRegime::LowFreq {
            continue;
        }
        draws += 1;
        let east = derive_unchecked(&Parameters { alpha: -alpha, ..p });
        let xi = (rng.random_range(-3.0..3.0), rng.random_range(0.1..3.0));
        let (rw, re) = (all_roots(xi, &west), all_roots(xi, &east));
        let (nw, ne) = (large_positive_count(&rw, &west), large_positive_count(&re, &east));
        if nw == 2 && ne == 1 {
            ok += 1;
        } else if bad.len() < 2 {
            bad.push(format!("({nw},{ne}) at α = {:.1}°, ω/lo = {:.2}", alpha.to_degrees(), w / lo));
        }
        if count_above(&rw, &west, 0.25) == 2 && count_above(&re, &east, 0.25) == 1 {
            ok_quarter += 1;
        }
    }
    outcome(
        ok == draws,
        format!("{ok}/{draws} draws go from 2 to 1 (e.g. {}); with a 0.25 cut {ok_quarter}/{draws}", bad.join(", ")),
    )
}

fn bump_field(grid: ModeGrid, sc: DerivedScales, rng: &mut StdRng, rates: [C64; 2]) -> SpectralField {
    let mut f = SpectralField::zeros(grid, sc, Component::Scalar);
    let bumps: Vec<(C64, f64, f64, f64, f64, C64)> = (0..2)
        .map(|_| {
            (
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                rng.random_range(2.0..3.0),
                rng.random_range(2.0..3.0),
                rng.random_range(-4.0..4.0),
                rng.random_range(-4.0..4.0),
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    for k in 0..grid.len() {
        if grid.is_nyquist(k) {
            continue;
        }
        let (x, y) = grid.xi(k);
        let mut a = c(0.0, 0.0);
        let mut b = c(0.0, 0.0);
        for &(amp, sx, sy, cx, cy, zmix) in &bumps {
            let g = (-(x * x * sx * sx + y * y * sy * sy) / 2.0).exp();
            let ph = C64::from_polar(1.0, -(x * cx + y * cy));
            a += amp * g * ph;
            b += amp * zmix * g * ph;
        }
        f.comps[0][k] = ExpPoly::exp(rates[0], a).add(&ExpPoly::term(rates[1], vec![c(0.0, 0.0), b]));
    }
    f
}

// 7. explicit corrector formula vs direct composition on grid fields
fn corrector_algebra() -> Outcome {
    let sc = lowfreq(1e-2);
    let grid = ModeGrid::new(32.0, 64.0, 64, 128);
    let mut rng = StdRng::seed_from_u64(7);
    let zs = [0.0, 0.3, 1.0, 2.5];
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rates = [c(rng.random_range(0.3..2.0), 0.0), c(rng.random_range(0.3..2.0), rng.random_range(-1.0..1.0))];
        let p0 = bump_field(grid, sc, &mut rng, rates);
        let f = [bump_field(grid, sc, &mut rng, rates), bump_field(grid, sc, &mut rng, rates)];
        let a = corrector_rhs(&p0, &f, &sc, 2.0);
        let b = corrector_rhs_composed(&p0, &f, &sc);
        let (mut diff, mut size) = (0f64, 0f64);
        for k in 0..grid.len() {
            for &z in &zs {
                let (u, v) = (a.comps[0][k].eval(z), b.comps[0][k].eval(z));
                diff = diff.max((u - v).norm());
                size = size.max(v.norm());
            }
        }
        worst = worst.max(diff / size);
    }
    outcome(worst <= 1e-9, format!("20 fields, worst relative gap {worst:.2e}"))
}

fn build_terms(ctx: &ModeCtx, kk: usize) -> Vec<ExpansionTerm> {
    let ek = EkmanCtx::new(ctx).unwrap();
    let mut out: Vec<ExpansionTerm> = vec![];
    for k in 0..=kk {
        let ih: Vec<&Part> = out.iter().map(|t| &t.interior).collect();
        let mh: Vec<&Part> = out.iter().map(|t| &t.munk).collect();
        let i = interior_step(ctx, &ih, k);
        let m = munk_step(ctx, &mh, k);
        let e = match &ek {
            Some(e) if k >= 2 => ekman_step(ctx, e, &out[k - 1].ekman, k).unwrap().0,
            _ => Part::default(),
        };
        out.push(close_boundary(ctx, ek.as_ref(), k, i, m, e).unwrap());
    }
    out
}

// 8. no-slip of the assembled solution at every truncation order
fn boundary_closure() -> Outcome {
    let sc = lowfreq(1e-2);
    let mut rng = StdRng::seed_from_u64(8);
    let (mut worst, mut w3) = (0f64, 0f64);
    let mut n = 0;
    while n < 12 {
        let xi = (rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0));
        let Ok(ctx) = ModeCtx::new(xi, &recipe(), &sc, &Thresholds::default(), 7) else { continue };
        n += 1;
        let terms = build_terms(&ctx, 3);
        let zs = sample_heights(&ctx);
        let mut app = Part::default();
        for (k, t) in terms.iter().enumerate() {
            app = app.add(&t.total().scale_re(sc.epsilon.powi(k as i32)));
            let tr = app.trace_u().iter().map(|j| j.value().norm_sqr()).sum::<f64>().sqrt();
            let amp = zs
                .iter()
                .map(|&z| app.u.iter().map(|p| p.base().eval(z).norm_sqr()).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            worst = worst.max(tr / amp);
        }
        let u13 = &terms[1].total().u[2];
        w3 = w3.max(u13.trace().value().norm() / u13.base().sup_sampled(&zs).max(1e-300));
    }
    outcome(
        worst <= 1e-10 && w3 <= 1e-10,
        format!("{n} modes, K = 0..3: worst trace ratio {worst:.2e}, vertical first-order trace {w3:.2e}"),
    )
}

// 9. exact Ekman roots: singular matrix, references, δ, redundancy
fn ekman_exactness() -> Outcome {
    let sc = ekman_preset();
    let xi = (1.0, 1.0);
    let lr = layer_roots(xi, 1.0, &sc).unwrap();
    let sv = lr
        .all
        .iter()
        .map(|&l| {
            let s = linalg::singular_values(&a_matrix(xi, l, &sc));
            s[s.len() - 1] / s[0]
        })
        .fold(0.0, f64::max);
    let r1 = rel(lr.lambda1, lr.lambda1_ref);
    let r2 = rel(lr.lambda2, lr.lambda2_ref);
    let mut dv: f64 = 0.0;
    for d in [sc.epsilon, sc.epsilon.powi(2), sc.epsilon.powi(3)] {
        let mut sd = sc;
        sd.delta = d;
        let l = layer_roots(xi, 1.0, &sd).unwrap();
        dv = dv.max(rel(l.lambda1, lr.lambda1)).max(rel(l.lambda2, lr.lambda2));
    }
    let mf = midfreq();
    let roots = quartic_roots(xi, &mf).unwrap();
    let ml = layer_roots(xi, mf.omega, &mf).unwrap();
    let red = roots.mu_plus.iter().map(|&m| rel(ml.lambda2, m)).fold(f64::INFINITY, f64::min);
    let reason = discard_rule(ml.lambda2, &roots, roots.regime);
    outcome(
        sv <= 1e-6
            && r1 <= 0.1
            && r2 <= 0.1
            && dv <= 0.01
            && roots.regime == FrequencyRegime::MidFreq
            && red <= 0.3
            && matches!(reason, Ok(DiscardReason::RedundantWithMunk)),
        format!(
            "{} roots, worst σ_min/σ_max {sv:.2e}; λ1 {r1:.3}, λ2 {r2:.3} off reference; δ spread {dv:.2e}; λ2 vs μ1+ {red:.3}",
            lr.all.len()
        ),
    )
}

// 10. λ₁ eigenvector shape
fn ekman_eigenvector() -> Outcome {
    let sc = ekman_preset();
    let xi = (1.0, 1.0);
    let lr = layer_roots(xi, 1.0, &sc).unwrap();
    let m = eigenvector_lambda1(xi, lr.lambda1, &sc).unwrap();
    let want = c(0.0, sc.c.powi(3) * sc.omega * sc.epsilon / (sc.s * sc.s));
    let ratio = rel(m.u[1] / m.u[0], want);
    let hyd = hydrostatic_defect(&m, xi, &sc);
    let ang = angle_to_ex(&m, &sc);
    outcome(
        ratio <= 0.15 && hyd <= 0.15 && ang <= 15.0,
        format!("U'y/U'x off by {ratio:.3}, hydrostatic {hyd:.3}, angle to e_x {ang:.2}°"),
    )
}

// 11. εβ ladder of the cascade (reported, not gated)
fn cascade_law() -> Outcome {
    let cfg = RunConfig::load(&configs().join("lowfreq.toml")).unwrap();
    let (sc, _) = cfg.scales().unwrap();
    let grid = cfg.grid(&sc).unwrap();
    let t = Instant::now();
    let run = assemble(&cfg.recipe(), &grid, &sc, &cfg.ingest(), &cfg.cascade(2)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let r = &run.report;
    let eb = r.eps_beta;
    let budget: Vec<String> =
        r.residuals.iter().map(|x| format!("K={} {:.3e} (budget {:.1e})", x.k, x.energy, x.budget)).collect();
    let ratios: Vec<String> = r.residual_ratios.iter().map(|x| format!("{x:.3} = {:.1} εβ", x / eb)).collect();
    outcome(
        r.residual_ratios.iter().all(|&x| x <= 2.0 * eb) && secs <= 300.0,
        format!(
            "{}x{} grid, {}/{} modes, εβ = {eb:.4}: ratios [{}]; {}; {secs:.1} s",
            grid.nx,
            grid.ny,
            r.modes_solved,
            r.modes_total,
            ratios.join(", "),
            budget.join(", ")
        ),
    )
}

// 12. layer-to-interior ratio of |u₂⁰| grows like (β/ν_eff)^{1/3}
fn western_intensification() -> Outcome {
    let cfg = CascadeConfig { order: 0, ..CascadeConfig::default() };
    let mut ratios = vec![];
    for &eps in &LADDER {
        let sc = lowfreq(eps);
        let ctx = ModeCtx::new((0.5, 0.7), &recipe(), &sc, &Thresholds::default(), 1).unwrap();
        let m = run_mode(&ctx, &cfg, 0).unwrap();
        ratios.push((m.intensification.unwrap(), sc.munk_scale));
    }
    let growth: Vec<f64> = ratios.iter().map(|&(i, m)| (i / ratios[0].0) / (m / ratios[0].1)).collect();
    outcome(
        growth.iter().all(|&g| (1.0 / 3.0..=3.0).contains(&g)),
        format!(
            "ratios {:.2} {:.2} {:.2}; growth over the Munk scale {:.2} {:.2}",
            ratios[0].0, ratios[1].0, ratios[2].0, growth[1], growth[2]
        ),
    )
}

// 13. separation figure (exploratory)
fn separation_figure() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = vec![];
    for name in ["figure_flat", "figure_sloped"] {
        let cfg = RunConfig::load(&configs().join(format!("{name}.toml"))).unwrap();
        let out = tmp.path().join(name);
        cli_io::run_solve(&cfg, &out, 1, "solve").unwrap();
        dirs.push(out);
    }
    let fig = cli_io::emit_separation_figure(&dirs[0], &dirs[1], &tmp.path().join("fig"), 0.0).unwrap();
    let g = fig.sloped.gyres;
    let south = fig.separation_south == Some(true);
    outcome(
        g.0 + g.1 >= 2 && g.0 >= 1 && g.1 >= 1 && south,
        format!(
            "sloped gyres {g:?}, reference gyres {:?}; coastal x2 {:?} (reference) vs {:?} (sloped)",
            fig.reference.gyres,
            fig.reference.coastal_point.map(|p| p.1),
            fig.sloped.coastal_point.map(|p| p.1)
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(usize, &str, fn() -> Outcome, bool); 13] = [
        (1, "root structure", root_structure, true),
        (2, "closed-form roots", closed_form, true),
        (3, "asymptotic convergence", asymptotic_convergence, true),
        (4, "kernel property", green_property, true),
        (5, "interior balance limit", sverdrup_limit, true),
        (6, "east/west dissymmetry (reported)", east_west, false),
        (7, "corrector algebra", corrector_algebra, true),
        (8, "boundary closure", boundary_closure, true),
        (9, "Ekman exactness", ekman_exactness, true),
        (10, "Ekman eigenvector", ekman_eigenvector, true),
        (11, "cascade law (reported)", cascade_law, false),
        (12, "western intensification", western_intensification, true),
        (13, "separation figure (exploratory)", separation_figure, false),
    ];
    let mut failed = vec![];
    for (n, name, run, gated) in criteria {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {tag} {name}: {}", o.detail);
        if gated && !o.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "gated criteria failed: {failed:?}");
}

#[test]
fn jets_agree_with_values() {
    // the jet machinery reproduces the plain complex path at degree 0
    let sc = lowfreq(1e-2);
    let xi = (0.5, 0.7);
    let ctx = ModeCtx::new(xi, &recipe(), &sc, &Thresholds::default(), 1).unwrap();
    let plain = quartic_roots(xi, &sc).unwrap();
    for (j, m) in ctx.mu_plus.iter().enumerate() {
        assert!((m.value() - plain.mu_plus[j]).norm() < 1e-12 * plain.mu_plus[j].norm());
    }
}
