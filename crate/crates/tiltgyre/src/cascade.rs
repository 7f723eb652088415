//! Any-order construction: interior and Munk recurrences, the Ekman
//! polynomial layers, boundary closure, and the analytic residual of the
//! full system for every truncation order.

use crate::ekman_layer::{det_poly, find_layer_roots, solve_qy_leading, to_global, LayerSolver};
use crate::green_kernel::convolve;
use crate::jet::Jet;
use crate::poly;
use crate::qg_builder::{ExpansionTerm, ModeCtx, Part};
use crate::regime::{DerivedScales, FrequencyRegime, Thresholds};
use crate::spectral_field::{same_rate, vec_ops, ExpPoly, FieldOps, ForcingRecipe, IngestConfig, ModeField, ModeGrid, Op};
use crate::{Error, Result, C64};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct CascadeConfig {
    /// Truncation order K.
    pub order: usize,
    /// Sobolev regularity m of the forcing; each order uses 5 derivatives.
    pub regularity: u32,
    /// Commutator coefficient in the corrector formula.
    pub kappa: f64,
    pub thresholds: Thresholds,
    /// Residual budget ε^N.
    pub budget_exponent: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig { order: 3, regularity: 20, kappa: 2.0, thresholds: Thresholds::default(), budget_exponent: 1.0 }
    }
}

impl CascadeConfig {
    pub fn depth_budget(&self) -> usize {
        (self.regularity / 5) as usize
    }

    pub fn check_depth(&self, k: usize) -> Result<()> {
        if k > self.depth_budget() {
            return Err(Error::DepthExhausted { requested: k, budget: self.depth_budget() });
        }
        Ok(())
    }
}

/// z-samples resolving the Munk layers and the interior, plus an optional
/// extra layer scale.
pub fn sample_heights_with(ctx: &ModeCtx, extra: Option<f64>) -> Vec<f64> {
    let mut scales: Vec<f64> = ctx.roots.mu_plus.iter().map(|m| 1.0 / m.re).collect();
    scales.push(1.0);
    if let Some(l) = extra {
        scales.push(l);
    }
    let mut zs = vec![0.0];
    for l in scales {
        for f in [0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0] {
            zs.push(l * f);
        }
    }
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    zs
}

pub fn sample_heights(ctx: &ModeCtx) -> Vec<f64> {
    sample_heights_with(ctx, None)
}

/// λ₁ layer data at one mode.
#[derive(Debug, Clone)]
pub struct EkmanCtx {
    pub lambda: Jet,
    pub solver: LayerSolver,
    /// Eigenvector (U'_x = 1) in local order.
    pub u_local: Vec<Jet>,
}

impl EkmanCtx {
    pub fn new(ctx: &ModeCtx) -> Result<Option<EkmanCtx>> {
        let sc = ctx.sc();
        if sc.omega == 0.0 {
            return Ok(None);
        }
        let lr = find_layer_roots(ctx.xi, sc)?;
        let q = det_poly(ctx.xi.0, ctx.sym.xi_y, sc);
        let lambda = poly::jet_root(&q, lr.lambda1, ctx.deg);
        let solver = LayerSolver::new(ctx.xi.0, ctx.sym.xi_y, lambda, sc)?;
        let u_local = solver.u.clone();
        Ok(Some(EkmanCtx { lambda, solver, u_local }))
    }

    /// Part for W(z)e^{−λz}, W given in local order.
    pub fn part(&self, w: &[Vec<Jet>], sc: &DerivedScales) -> Part {
        if w.is_empty() {
            return Part::default();
        }
        let comp = |i: usize| -> Vec<Jet> { w.iter().map(|v| v[i]).collect() };
        let (x, y, z) = (comp(0), comp(1), comp(2));
        let g: Vec<[Jet; 3]> = (0..w.len()).map(|n| to_global(&[x[n], y[n], z[n]], sc)).collect();
        let prof = |v: Vec<Jet>| ExpPoly::term(self.lambda, v);
        Part {
            u: [
                prof(g.iter().map(|v| v[0]).collect()),
                prof(g.iter().map(|v| v[1]).collect()),
                prof(g.iter().map(|v| v[2]).collect()),
            ],
            p: prof(comp(3)),
            rho: prof(comp(4)),
        }
    }
}

fn heat(ctx: &ModeCtx, p: &ExpPoly<Jet>) -> ExpPoly<Jet> {
    ctx.field(p.clone()).op(Op::Heat).prof
}

fn fields(ctx: &ModeCtx, v: &[ExpPoly<Jet>]) -> [ModeField; 2] {
    [ctx.field(v[0].clone()), ctx.field(v[1].clone())]
}

/// Recurrence sources at order k from the history of one origin.
/// Returns (p-source F^k, horizontal remainder E^k, density remainder, u₃^k).
fn qg_sources(ctx: &ModeCtx, hist: &[&Part], k: usize, forcing: bool) -> (ModeField, [ModeField; 2], ModeField, ModeField) {
    let sc = ctx.sc();
    let b = sc.beta;
    let m = sc.m as usize;
    let zero = ctx.field(ExpPoly::zero());
    let (mut e, u3) = if k >= 1 {
        let prev = hist[k - 1];
        let uh = fields(ctx, &prev.u[..2]);
        let h = vec_ops::map(&vec_ops::perp(&uh), |f| f.op(Op::Heat));
        let y = vec_ops::map(&uh, |f| f.ymul().scale_re(-b));
        (vec_ops::add(&h, &y), ctx.field(prev.rho.clone()).op(Op::Dt))
    } else {
        ([zero.clone(), zero.clone()], zero.clone())
    };
    if k == 1 && forcing {
        let fp = vec_ops::perp(&ctx.forcing_fields());
        e = [e[0].sub(&fp[0].scale_re(b)), e[1].sub(&fp[1].scale_re(b))];
    }
    let e_rho = if k > m { ctx.field(heat(ctx, &hist[k - m - 1].u[2])).scale_re(-1.0) } else { zero.clone() };
    let mut f = vec_ops::curl(&e).op(Op::Heat).scale_re(-1.0);
    f = f.sub(&vec_ops::div(&e).ymul().scale_re(b));
    f = f.sub(&e[1].scale_re(b));
    f = f.add(&e_rho.op(Op::D3).op(Op::Dt));
    if k == 0 && forcing {
        f = f.add(&vec_ops::curl(&ctx.forcing_fields()).scale_re(b));
    }
    (f, e, e_rho, u3)
}

/// The p-source F^k of the order-k recurrence.
pub fn qg_source(ctx: &ModeCtx, hist: &[&Part], k: usize, forcing: bool) -> ModeField {
    qg_sources(ctx, hist, k, forcing).0
}

fn qg_part(ctx: &ModeCtx, p: ExpPoly<Jet>, e: &[ModeField; 2], e_rho: &ModeField, u3: ModeField) -> Part {
    let g = Part::from_pressure(ctx, &p);
    Part { u: [g.u[0].add(&e[0].prof), g.u[1].add(&e[1].prof), u3.prof], p, rho: g.rho.add(&e_rho.prof) }
}

/// Interior part of order k: p^k = G ∗ F^k and the velocity/density
/// relations, from the interior history.
pub fn interior_step(ctx: &ModeCtx, hist: &[&Part], k: usize) -> Part {
    let (f, e, er, u3) = qg_sources(ctx, hist, k, true);
    qg_part(ctx, convolve(&ctx.kernel, &f.prof), &e, &er, u3)
}

/// The same recurrence on the Munk history (no forcing), before the new
/// layer exponentials are added.
pub fn munk_step(ctx: &ModeCtx, hist: &[&Part], k: usize) -> Part {
    let (f, e, er, u3) = qg_sources(ctx, hist, k, false);
    qg_part(ctx, convolve(&ctx.kernel, &f.prof), &e, &er, u3)
}

fn term_poly(p: &ExpPoly<Jet>, rate: Jet) -> Vec<Jet> {
    p.terms.iter().find(|t| same_rate(t.rate.value(), rate.value())).map(|t| t.poly.clone()).unwrap_or_default()
}

/// Ekman layer of order k before its eigenvector multiple: solves the
/// f-plane system with right side −(β/ε)y e₃∧u_E^{k−1}. Also returns the
/// defect of the leading-order y-momentum relation against the full solve.
pub fn ekman_step(ctx: &ModeCtx, ek: &EkmanCtx, prev: &Part, k: usize) -> Result<(Part, Vec<Vec<Jet>>, Option<f64>)> {
    if k < 2 || prev.is_zero() {
        return Ok((Part::default(), vec![], None));
    }
    let sc = *ctx.sc();
    let (s, c) = (sc.s, sc.c);
    let g = sc.beta / sc.epsilon;
    let yu1 = term_poly(&prev.u[0].ymul(), ek.lambda);
    let yu2 = term_poly(&prev.u[1].ymul(), ek.lambda);
    let n = yu1.len().max(yu2.len());
    let at = |v: &[Jet], i: usize| v.get(i).copied().unwrap_or_else(Jet::zero);
    let rhs: Vec<Vec<Jet>> = (0..n)
        .map(|i| {
            let (a, b) = (at(&yu1, i), at(&yu2, i));
            vec![b.scale_re(c * g), a.scale_re(-g), b.scale_re(-s * g), Jet::zero(), Jet::zero()]
        })
        .collect();
    let w = ek.solver.solve(&rhs)?;
    let defect = qy_defect(&w, &rhs, ek.lambda.value(), &sc);
    Ok((ek.part(&w, &sc), w, defect))
}

/// Leading y-momentum relation (is²/c²)(1−∂_Z)²W_y + cεωW_x = ε²ω·g_y in
/// Z = λz, solved on its own and compared with the full W_y.
fn qy_defect(w: &[Vec<Jet>], rhs: &[Vec<Jet>], lambda: C64, sc: &DerivedScales) -> Option<f64> {
    if w.is_empty() {
        return None;
    }
    let (e, om) = (sc.epsilon, sc.omega);
    let to_z = |v: &[Vec<Jet>], i: usize, k: C64| -> Vec<C64> {
        v.iter().enumerate().map(|(n, r)| r[i].value() * k / lambda.powi(n as i32)).collect()
    };
    let qx = to_z(w, 0, C64::new(e * om, 0.0));
    let g = to_z(rhs, 1, C64::new(e * e * om, 0.0));
    let wy = to_z(w, 1, C64::new(1.0, 0.0));
    let lead = solve_qy_leading(&qx, &g, sc.s, sc.c);
    let n = lead.len().max(wy.len());
    let get = |v: &[C64], i: usize| v.get(i).copied().unwrap_or_default();
    let num = (0..n).map(|i| (get(&lead, i) - get(&wy, i)).norm()).fold(0.0, f64::max);
    let den = wy.iter().map(|v| v.norm()).fold(0.0, f64::max);
    (den > 0.0).then(|| num / den)
}

/// Solve the Ekman multiple and the Munk pair so that the full trace of
/// order k vanishes. Uses the adjugate of the Munk trace matrix.
pub fn close_boundary(
    ctx: &ModeCtx,
    ek: Option<&EkmanCtx>,
    k: usize,
    interior: Part,
    munk_pre: Part,
    ekman_pre: Part,
) -> Result<ExpansionTerm> {
    let sc = *ctx.sc();
    let (s, c) = (sc.s, sc.c);
    let ti = interior.trace_u();
    let tm = munk_pre.trace_u();
    let te = ekman_pre.trace_u();
    let tr: Vec<Jet> = (0..3).map(|i| ti[i] + tm[i] + te[i]).collect();
    let (ce, ekman) = match ek {
        Some(ek) if k >= 2 => {
            let u = &ek.u_local;
            let u3 = u[0].scale_re(s) + u[2].scale_re(c);
            let ce = -(tr[2] / u3);
            let eig: Vec<Vec<Jet>> = vec![u.iter().map(|&v| v * ce).collect()];
            (ce, ekman_pre.add(&ek.part(&eig, &sc)))
        }
        _ => {
            let zs = sample_heights(ctx);
            let n3 = interior.add(&munk_pre).u[2].base().sup_sampled(&zs);
            let t3 = tr[2].value().norm();
            if t3 > 1e-8 * n3.max(f64::MIN_POSITIVE) && t3 > 0.0 {
                return Err(Error::VerticalTraceNonzero(t3));
            }
            (Jet::zero(), ekman_pre)
        }
    };
    let tf = ekman.trace_u();
    let h = [ti[0] + tm[0] + tf[0], ti[1] + tm[1] + tf[1]];
    if !(ctx.munk_det_rel() >= 1e-12) {
        return Err(Error::SingularTraceSystem(ctx.xi.0, ctx.xi.1));
    }
    let [m1, m2] = ctx.mu_plus;
    let iy = ctx.sym.xi_y.scale(I);
    let a = Jet::constant(I * c * ctx.xi.0);
    // M = [[−iξ_y, −iξ_y], [ciξ_x + sμ₁, ciξ_x + sμ₂]]
    let (m11, m12, m21, m22) = (-iy, -iy, a + m1.scale_re(s), a + m2.scale_re(s));
    let det = m11 * m22 - m12 * m21;
    let (r1, r2) = (-h[0], -h[1]);
    let cm = [(m22 * r1 - m12 * r2) / det, (m11 * r2 - m21 * r1) / det];
    let layer = Part::from_pressure(ctx, &ctx.munk_layer(&cm));
    Ok(ExpansionTerm { order: k, interior, munk: munk_pre.add(&layer), ekman, munk_coeffs: cm, ekman_coeff: ce })
}

/// Per-mode residual pieces of the truncated system, one origin.
#[derive(Debug, Clone)]
pub struct ResidualFields {
    pub horizontal: [ExpPoly<Jet>; 2],
    pub vertical: ExpPoly<Jet>,
    pub mass: ExpPoly<Jet>,
    pub divergence: ExpPoly<Jet>,
}

impl ResidualFields {
    fn zero() -> Self {
        ResidualFields {
            horizontal: [ExpPoly::zero(), ExpPoly::zero()],
            vertical: ExpPoly::zero(),
            mass: ExpPoly::zero(),
            divergence: ExpPoly::zero(),
        }
    }

    fn add(&self, o: &Self) -> Self {
        ResidualFields {
            horizontal: [self.horizontal[0].add(&o.horizontal[0]), self.horizontal[1].add(&o.horizontal[1])],
            vertical: self.vertical.add(&o.vertical),
            mass: self.mass.add(&o.mass),
            divergence: self.divergence.add(&o.divergence),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        ResidualFields {
            horizontal: [self.horizontal[0].sub(&o.horizontal[0]), self.horizontal[1].sub(&o.horizontal[1])],
            vertical: self.vertical.sub(&o.vertical),
            mass: self.mass.sub(&o.mass),
            divergence: self.divergence.sub(&o.divergence),
        }
    }

    /// [∫(1+z²)|g_h|², ∫(1+z²)|g₃|², ∫(1+z²)|g_ρ|², ∫(1+z²)|div|²]
    pub fn weighted_sq(&self) -> [f64; 4] {
        [
            self.horizontal[0].base().l2_sq_weighted() + self.horizontal[1].base().l2_sq_weighted(),
            self.vertical.base().l2_sq_weighted(),
            self.mass.base().l2_sq_weighted(),
            self.divergence.base().l2_sq_weighted(),
        ]
    }

    /// ‖g_h‖² + δ²‖g₃‖² + ‖g_ρ‖² with the (1+z²) weight.
    pub fn energy_sq(&self, delta: f64) -> f64 {
        let w = self.weighted_sq();
        w[0] + delta * delta * w[1] + w[2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Interior,
    Munk,
    Ekman,
}

fn part_of(t: &ExpansionTerm, o: Origin) -> &Part {
    match o {
        Origin::Interior => &t.interior,
        Origin::Munk => &t.munk,
        Origin::Ekman => &t.ekman,
    }
}

fn divergence(ctx: &ModeCtx, p: &Part) -> ExpPoly<Jet> {
    let f: Vec<ModeField> = p.u.iter().map(|q| ctx.field(q.clone())).collect();
    f[0].op(Op::D1).add(&f[1].op(Op::D2)).add(&f[2].op(Op::D3)).prof
}

/// Telescoped residual of Σ_{k≤K} ε^k u^k restricted to one origin.
pub fn residual_origin(ctx: &ModeCtx, terms: &[ExpansionTerm], kk: usize, o: Origin) -> ResidualFields {
    let sc = ctx.sc();
    let (e, b, m) = (sc.epsilon, sc.beta, sc.m as usize);
    let top = part_of(&terms[kk], o);
    let ek = C64::new(e.powi(kk as i32), 0.0);
    let uh = fields(ctx, &top.u[..2]);
    let y = vec_ops::map(&vec_ops::perp(&uh), |f| f.ymul().scale_re(b));
    let mut r = ResidualFields::zero();
    let mut div = ExpPoly::zero();
    for (j, t) in terms.iter().take(kk + 1).enumerate() {
        div = div.add(&divergence(ctx, part_of(t, o)).scale(C64::new(e.powi(j as i32), 0.0)));
    }
    r.divergence = div;
    if o == Origin::Ekman {
        r.horizontal = [y[0].prof.scale(ek), y[1].prof.scale(ek)];
        return r;
    }
    let h = vec_ops::map(&uh, |f| f.op(Op::Heat));
    r.horizontal = [h[0].add(&y[0]).prof.scale(ek), h[1].add(&y[1]).prof.scale(ek)];
    if kk == 0 && o == Origin::Interior {
        let f = &ctx.forcing;
        r.horizontal = [r.horizontal[0].sub(&f[0].scale(C64::new(b, 0.0))), r.horizontal[1].sub(&f[1].scale(C64::new(b, 0.0)))];
    }
    let lo = kk.saturating_sub(m);
    for (j, t) in terms.iter().enumerate().take(kk + 1).skip(lo) {
        r.vertical = r.vertical.add(&heat(ctx, &part_of(t, o).u[2]).scale(C64::new(e.powi(j as i32), 0.0)));
    }
    r.mass = ctx.field(top.rho.clone()).op(Op::Dt).prof.scale(ek);
    r
}

/// System (1.1) applied directly to the assembled Σ_{k≤K} ε^k u^k.
/// Second value: the largest weighted norm among the individual terms.
pub fn residual_direct(ctx: &ModeCtx, terms: &[ExpansionTerm], kk: usize) -> (ResidualFields, f64) {
    let e = ctx.sc().epsilon;
    let mut a = Part::default();
    for (j, t) in terms.iter().take(kk + 1).enumerate() {
        a = a.add(&t.total().scale_re(e.powi(j as i32)));
    }
    apply_system(ctx, &a, ctx.sc().beta)
}

/// Operators of the full system on one mode. `beta = 0` gives the f-plane
/// system without forcing.
pub fn apply_system(ctx: &ModeCtx, a: &Part, b: f64) -> (ResidualFields, f64) {
    let sc = ctx.sc();
    let e = sc.epsilon;
    let d2 = sc.delta * sc.delta;
    let uh = fields(ctx, &a.u[..2]);
    let u3 = ctx.field(a.u[2].clone());
    let p = ctx.field(a.p.clone());
    let rho = ctx.field(a.rho.clone());
    let f = ctx.forcing_fields();
    let perp = vec_ops::perp(&uh);
    let grad = vec_ops::grad(&p);
    let mut hs = vec![];
    let mut terms_norm: f64 = 0.0;
    let mut note = |f: &ModeField| {
        terms_norm = terms_norm.max(f.prof.base().l2_sq_weighted().sqrt());
    };
    for i in 0..2 {
        let parts = [
            uh[i].op(Op::Dt),
            perp[i].scale_re(1.0 / e),
            perp[i].ymul().scale_re(b),
            grad[i].scale_re(1.0 / e),
            uh[i].op(Op::LapNu).scale_re(-1.0),
            f[i].scale_re(-b),
        ];
        parts.iter().for_each(&mut note);
        hs.push(parts.iter().skip(1).fold(parts[0].clone(), |acc, t| acc.add(t)).prof);
    }
    let v = [
        u3.op(Op::Dt),
        p.op(Op::D3).scale_re(1.0 / (e * d2)),
        rho.scale_re(1.0 / (e * d2)),
        u3.op(Op::LapNu).scale_re(-1.0),
    ];
    v.iter().for_each(&mut note);
    let mass = [rho.op(Op::Dt), u3.scale_re(-1.0 / e)];
    mass.iter().for_each(&mut note);
    let dv = [uh[0].op(Op::D1), uh[1].op(Op::D2), u3.op(Op::D3)];
    let r = ResidualFields {
        horizontal: [hs[0].clone(), hs[1].clone()],
        vertical: v.iter().skip(1).fold(v[0].clone(), |acc, t| acc.add(t)).prof,
        mass: mass[0].add(&mass[1]).prof,
        divergence: dv[0].add(&dv[1]).add(&dv[2]).prof,
    };
    (r, terms_norm)
}

/// Residual numbers for one mode at one truncation order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ModeResidual {
    /// weighted squares: horizontal, vertical, mass, divergence
    pub components_sq: [f64; 4],
    pub energy_sq: f64,
    /// energy_sq per origin (interior, Munk, Ekman)
    pub origin_sq: [f64; 3],
    /// ‖direct − Σ origins‖ over ‖Σ origins‖
    pub linearity: f64,
    /// ‖direct − formula‖ over the largest single term of the direct form
    pub direct_rel: f64,
}

/// Everything kept from one mode after the jets are dropped.
#[derive(Debug, Clone, Serialize)]
pub struct ModeSummary {
    pub index: usize,
    pub xi: (f64, f64),
    pub regime: FrequencyRegime,
    pub lambda1: Option<C64>,
    pub mu_plus: [C64; 2],
    /// total pressure per order
    #[serde(skip)]
    pub pressure: Vec<ExpPoly<C64>>,
    #[serde(skip)]
    pub velocity0: [ExpPoly<C64>; 3],
    pub munk_coeffs: Vec<[C64; 2]>,
    pub ekman_coeffs: Vec<C64>,
    pub trace_ratio: Vec<f64>,
    pub div_ratio: Vec<f64>,
    pub qy_defect: Vec<Option<f64>>,
    /// H¹_{x,y}L²_z proxy of ε^k u^k (squared, per mode)
    pub size_sq: Vec<f64>,
    /// ‖u₂‖/‖u₁‖ of the Munk part per order
    pub layer_ratio: Vec<Option<f64>>,
    pub max_degree: Vec<usize>,
    pub residual: Vec<ModeResidual>,
    /// max_z |u₂⁰| over |u₂,ᵢ⁰(0)|
    pub intensification: Option<f64>,
}

/// Build orders 0..=K at one mode and evaluate all residuals.
pub fn run_mode(ctx: &ModeCtx, cfg: &CascadeConfig, index: usize) -> Result<ModeSummary> {
    let kk = cfg.order;
    cfg.check_depth(kk)?;
    let sc = *ctx.sc();
    let ek = EkmanCtx::new(ctx)?;
    let mut terms: Vec<ExpansionTerm> = Vec::with_capacity(kk + 1);
    let mut qy = vec![];
    for k in 0..=kk {
        let ih: Vec<&Part> = terms.iter().map(|t| &t.interior).collect();
        let mh: Vec<&Part> = terms.iter().map(|t| &t.munk).collect();
        let interior = interior_step(ctx, &ih, k);
        let munk = munk_step(ctx, &mh, k);
        let (ekman, d) = match &ek {
            Some(e) if k >= 2 => {
                let (p, _, d) = ekman_step(ctx, e, &terms[k - 1].ekman, k)?;
                (p, d)
            }
            _ => (Part::default(), None),
        };
        qy.push(d);
        terms.push(close_boundary(ctx, ek.as_ref(), k, interior, munk, ekman)?);
    }
    summarize(ctx, &terms, ek.as_ref(), qy, index, &sc)
}

fn summarize(
    ctx: &ModeCtx,
    terms: &[ExpansionTerm],
    ek: Option<&EkmanCtx>,
    qy: Vec<Option<f64>>,
    index: usize,
    sc: &DerivedScales,
) -> Result<ModeSummary> {
    let zs = sample_heights_with(ctx, ek.map(|e| 1.0 / e.lambda.value().re));
    let xi2 = ctx.xi.0 * ctx.xi.0 + ctx.xi.1 * ctx.xi.1;
    let mut s = ModeSummary {
        index,
        xi: ctx.xi,
        regime: ctx.roots.regime,
        lambda1: ek.map(|e| e.lambda.value()),
        mu_plus: [ctx.mu_plus[0].value(), ctx.mu_plus[1].value()],
        pressure: vec![],
        velocity0: [terms[0].total().u[0].base(), terms[0].total().u[1].base(), terms[0].total().u[2].base()],
        munk_coeffs: vec![],
        ekman_coeffs: vec![],
        trace_ratio: vec![],
        div_ratio: vec![],
        qy_defect: qy,
        size_sq: vec![],
        layer_ratio: vec![],
        max_degree: vec![],
        residual: vec![],
        intensification: None,
    };
    for (k, t) in terms.iter().enumerate() {
        let tot = t.total();
        s.pressure.push(tot.p.base());
        s.munk_coeffs.push([t.munk_coeffs[0].value(), t.munk_coeffs[1].value()]);
        s.ekman_coeffs.push(t.ekman_coeff.value());
        s.trace_ratio.push(tot.trace_ratio(&zs));
        s.div_ratio.push(tot.divergence_ratio(ctx, &zs));
        let ekp = sc.epsilon.powi(k as i32);
        s.size_sq.push((1.0 + xi2) * ekp * ekp * tot.u.iter().map(|p| p.base().l2_sq()).sum::<f64>());
        let m1 = t.munk.u[0].base().l2_sq().sqrt();
        let m2 = t.munk.u[1].base().l2_sq().sqrt();
        s.layer_ratio.push((m1 > 0.0).then(|| m2 / m1));
        s.max_degree.push(
            [&t.interior, &t.munk, &t.ekman].iter().flat_map(|p| p.u.iter()).map(|q| q.max_degree()).max().unwrap_or(0),
        );
    }
    let u2i = terms[0].interior.u[1].trace().value().norm();
    if u2i > 0.0 {
        s.intensification = Some(terms[0].total().u[1].base().sup_sampled(&zs) / u2i);
    }
    for kk in 0..terms.len() {
        let parts: Vec<ResidualFields> =
            [Origin::Interior, Origin::Munk, Origin::Ekman].iter().map(|&o| residual_origin(ctx, terms, kk, o)).collect();
        let total = parts[0].add(&parts[1]).add(&parts[2]);
        let (direct, scale) = residual_direct(ctx, terms, kk);
        let diff = direct.sub(&total).energy_sq(sc.delta).sqrt();
        let e_tot = total.energy_sq(sc.delta);
        let origin_sq = [parts[0].energy_sq(sc.delta), parts[1].energy_sq(sc.delta), parts[2].energy_sq(sc.delta)];
        s.residual.push(ModeResidual {
            components_sq: total.weighted_sq(),
            energy_sq: e_tot,
            origin_sq,
            linearity: if e_tot > 0.0 { diff / e_tot.sqrt() } else { diff },
            direct_rel: if scale > 0.0 { diff / scale } else { 0.0 },
        });
    }
    Ok(s)
}

/// Aggregated ledger for one order.
#[derive(Debug, Clone, Serialize)]
pub struct OrderLedger {
    pub k: usize,
    /// ‖ε^k u^k‖ in the H¹_{x,y}L²_z proxy
    pub size: f64,
    pub size_ratio: Option<f64>,
    pub max_munk_coeff: f64,
    pub max_ekman_coeff: f64,
    /// max |c^k| / β^k
    pub coeff_over_beta_k: f64,
    pub max_trace_ratio: f64,
    pub max_div_ratio: f64,
    pub max_qy_defect: Option<f64>,
    pub max_poly_degree: usize,
    pub median_layer_ratio: Option<f64>,
}

/// Residual of the truncation at order K, summed over modes.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub k: usize,
    /// sqrt of ∫(1+z²)‖·‖² for horizontal, vertical, mass, divergence
    pub components: [f64; 4],
    /// sqrt(‖g_h‖² + δ²‖g₃‖² + ‖g_ρ‖²), weighted
    pub energy: f64,
    pub energy_sq: f64,
    pub budget: f64,
    pub within_budget: bool,
    /// energy per origin: interior, Munk, Ekman
    pub by_origin: [f64; 3],
    pub max_direct_rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CascadeReport {
    pub order: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub eps_beta: f64,
    pub modes_total: usize,
    pub modes_solved: usize,
    pub excluded: BTreeMap<String, usize>,
    pub orders: Vec<OrderLedger>,
    pub residuals: Vec<ResidualReport>,
    /// residual(K)/residual(K−1) for K ≥ 1
    pub residual_ratios: Vec<f64>,
}

/// Result of a full run over the grid.
#[derive(Debug, Clone)]
pub struct Cascade {
    pub grid: ModeGrid,
    pub sc: DerivedScales,
    pub modes: Vec<ModeSummary>,
    pub report: CascadeReport,
}

/// Modes taking part in a solve: inside R = ε^{−κ}, not on a Nyquist line,
/// ξ_y ≠ 0, and carrying forcing.
pub fn select_modes(recipe: &ForcingRecipe, grid: &ModeGrid, sc: &DerivedScales, ingest: &IngestConfig) -> Vec<usize> {
    let radius = sc.epsilon.powf(-ingest.kappa);
    (0..grid.len())
        .filter(|&k| {
            let (x, y) = grid.xi(k);
            if grid.is_nyquist(k) || y == 0.0 || x.hypot(y) > radius {
                return false;
            }
            let [a, b] = recipe.mode_profiles(x, Jet::variable(y, 1));
            a.trace().max_abs() + b.trace().max_abs() > 0.0
        })
        .collect()
}

/// Run the cascade on every selected mode in parallel and aggregate.
pub fn assemble(
    recipe: &ForcingRecipe,
    grid: &ModeGrid,
    sc: &DerivedScales,
    ingest: &IngestConfig,
    cfg: &CascadeConfig,
) -> Result<Cascade> {
    cfg.check_depth(cfg.order)?;
    let sel = select_modes(recipe, grid, sc, ingest);
    let deg = 2 * cfg.order + 1;
    let out: Vec<Result<ModeSummary>> = sel
        .par_iter()
        .map(|&k| {
            let ctx = ModeCtx::new(grid.xi(k), recipe, sc, &cfg.thresholds, deg)?;
            run_mode(&ctx, cfg, k)
        })
        .collect();
    let mut modes = vec![];
    let mut excluded = BTreeMap::new();
    for r in out {
        match r {
            Ok(m) => modes.push(m),
            Err(e) => {
                let key = e.qualified().split(':').take(3).collect::<Vec<_>>().join(":");
                let key = key.split('(').next().unwrap_or("").to_string();
                *excluded.entry(key).or_insert(0) += 1;
            }
        }
    }
    let report = aggregate(&modes, grid, sc, cfg, sel.len(), excluded);
    Ok(Cascade { grid: *grid, sc: *sc, modes, report })
}

fn aggregate(
    modes: &[ModeSummary],
    grid: &ModeGrid,
    sc: &DerivedScales,
    cfg: &CascadeConfig,
    total: usize,
    excluded: BTreeMap<String, usize>,
) -> CascadeReport {
    let area = grid.lx * grid.ly;
    let kk = cfg.order;
    let mut orders = vec![];
    for k in 0..=kk {
        let size = (modes.iter().map(|m| m.size_sq[k]).sum::<f64>() / area).sqrt();
        let prev: Option<f64> = orders.last().map(|o: &OrderLedger| o.size);
        let mc = modes.iter().flat_map(|m| m.munk_coeffs[k].iter().map(|c| c.norm())).fold(0.0, f64::max);
        let ec = modes.iter().map(|m| m.ekman_coeffs[k].norm()).fold(0.0, f64::max);
        let mut lr: Vec<f64> = modes.iter().filter_map(|m| m.layer_ratio[k]).collect();
        lr.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let qd = modes.iter().filter_map(|m| m.qy_defect[k]).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
        orders.push(OrderLedger {
            k,
            size,
            size_ratio: prev.filter(|&p| p > 0.0).map(|p| size / p),
            max_munk_coeff: mc,
            max_ekman_coeff: ec,
            coeff_over_beta_k: mc.max(ec) / sc.beta.powi(k as i32),
            max_trace_ratio: modes.iter().map(|m| m.trace_ratio[k]).fold(0.0, f64::max),
            max_div_ratio: modes.iter().map(|m| m.div_ratio[k]).fold(0.0, f64::max),
            max_qy_defect: qd,
            max_poly_degree: modes.iter().map(|m| m.max_degree[k]).max().unwrap_or(0),
            median_layer_ratio: lr.get(lr.len() / 2).copied(),
        });
    }
    let budget = sc.epsilon.powf(cfg.budget_exponent);
    let mut residuals: Vec<ResidualReport> = vec![];
    for k in 0..=kk {
        let sum = |f: &dyn Fn(&ModeResidual) -> f64| modes.iter().map(|m| f(&m.residual[k])).sum::<f64>() / area;
        let comps = [0, 1, 2, 3].map(|i| sum(&|r| r.components_sq[i]).sqrt());
        let e2 = sum(&|r| r.energy_sq);
        residuals.push(ResidualReport {
            k,
            components: comps,
            energy: e2.sqrt(),
            energy_sq: e2,
            budget,
            within_budget: e2 <= budget,
            by_origin: [0, 1, 2].map(|i| sum(&|r| r.origin_sq[i]).sqrt()),
            max_direct_rel: modes.iter().map(|m| m.residual[k].direct_rel).fold(0.0, f64::max),
        });
    }
    let residual_ratios = residuals.windows(2).map(|w| w[1].energy / w[0].energy).collect();
    CascadeReport {
        order: kk,
        epsilon: sc.epsilon,
        beta: sc.beta,
        eps_beta: sc.epsilon * sc.beta,
        modes_total: total,
        modes_solved: modes.len(),
        excluded,
        orders,
        residuals,
        residual_ratios,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qg_builder::{build_order0, build_order1, corrector_rhs};
    use crate::regime::{validate, Parameters};
    use crate::spectral_field::Envelope;
    use std::f64::consts::FRAC_PI_4;

    fn lowfreq(eps: f64) -> DerivedScales {
        validate(&Parameters::new(eps, 0.5, 0.0, 1.0, 2.0, -FRAC_PI_4)).unwrap()
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

    fn ctx(sc: &DerivedScales, xi: (f64, f64), deg: usize) -> ModeCtx {
        ModeCtx::new(xi, &recipe(), sc, &Thresholds::default(), deg).unwrap()
    }

    fn gap(a: &ExpPoly<Jet>, b: &ExpPoly<Jet>, zs: &[f64]) -> f64 {
        a.sub(b).base().sup_sampled(zs) / a.base().sup_sampled(zs).max(1e-300)
    }

    fn terms(ctx: &ModeCtx, kk: usize) -> Vec<ExpansionTerm> {
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

    #[test]
    fn first_two_orders_match_direct_builders() {
        let sc = lowfreq(1e-2);
        let c = ctx(&sc, (0.5, 0.7), 3);
        let zs = sample_heights(&c);
        let t = terms(&c, 1);
        let b0 = build_order0(&c).unwrap();
        assert!(gap(&b0.total().p, &t[0].total().p, &zs) < 1e-12);
        let b1 = build_order1(&c, &b0, 2.0).unwrap();
        for i in 0..3 {
            assert!(gap(&b1.total().u[i], &t[1].total().u[i], &zs) < 1e-10, "component {i}");
        }
        assert!(gap(&b1.total().p, &t[1].total().p, &zs) < 1e-10);
    }

    #[test]
    fn order1_source_matches_corrector_formula() {
        let sc = lowfreq(1e-2);
        let c = ctx(&sc, (-0.8, 0.6), 3);
        let t = terms(&c, 0);
        let f1 = qg_source(&c, &[&t[0].interior], 1, true);
        let rhs = corrector_rhs(&c.field(t[0].interior.p.clone()), &c.forcing_fields(), &sc, 2.0);
        let zs = sample_heights(&c);
        assert!(gap(&rhs.prof, &f1.prof, &zs) < 1e-9);
    }

    #[test]
    fn closure_and_divergence_at_every_order() {
        let sc = lowfreq(1e-3);
        for xi in [(0.5, 0.7), (-1.5, 0.4), (2.0, -1.0)] {
            let c = ctx(&sc, xi, 7);
            let m = run_mode(&c, &CascadeConfig::default(), 0).unwrap();
            for k in 0..=3 {
                assert!(m.trace_ratio[k] < 1e-10, "{xi:?} trace {k}: {}", m.trace_ratio[k]);
                assert!(m.div_ratio[k] < 1e-10, "{xi:?} div {k}: {}", m.div_ratio[k]);
                assert!(m.residual[k].direct_rel < 1e-10);
                assert!(m.max_degree[k] <= 3 * k);
            }
            assert_eq!(m.ekman_coeffs[0], C64::new(0.0, 0.0));
            assert_eq!(m.ekman_coeffs[1], C64::new(0.0, 0.0));
            assert!(m.ekman_coeffs[2].norm() > 0.0);
        }
    }

    #[test]
    fn first_ekman_term_is_a_pure_eigenvector() {
        let sc = lowfreq(1e-2);
        let c = ctx(&sc, (1.0, 1.0), 5);
        let t = terms(&c, 2);
        let ek = EkmanCtx::new(&c).unwrap().unwrap();
        let (pre, w, _) = ekman_step(&c, &ek, &t[1].ekman, 2).unwrap();
        assert!(pre.is_zero() && w.is_empty());
        // f-plane system on the bare eigen-layer
        let eig = ek.part(&[ek.u_local.clone()], &sc);
        let (r, scale) = apply_system(&c, &eig, 0.0);
        assert!(r.energy_sq(sc.delta).sqrt() / scale < 1e-6);
    }

    #[test]
    fn munk_parts_stay_in_the_layer() {
        let sc = lowfreq(1e-3);
        let c = ctx(&sc, (1.0, 0.5), 7);
        let t = terms(&c, 3);
        let mu = c.roots.mu_plus.iter().map(|m| m.re).fold(f64::INFINITY, f64::min);
        let zs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05 / mu).collect();
        for tk in &t {
            let u = &tk.munk.u[1].base();
            let top = u.sup_sampled(&zs);
            assert!(u.eval(40.0 / mu).norm() < 1e-6 * top);
        }
    }

    #[test]
    fn larger_m_shifts_the_vertical_coupling() {
        let mut sc = lowfreq(1e-2);
        let c2 = ctx(&sc, (0.5, 0.7), 9);
        sc.m = 4;
        let c4 = ctx(&sc, (0.5, 0.7), 9);
        let t2 = terms(&c2, 3);
        let t4 = terms(&c4, 3);
        let h2: Vec<&Part> = t2.iter().map(|t| &t.interior).collect();
        let h4: Vec<&Part> = t4.iter().map(|t| &t.interior).collect();
        let (_, _, r2, _) = qg_sources(&c2, &h2, 4, true);
        let (_, _, r4, _) = qg_sources(&c4, &h4, 4, true);
        assert!(!r2.prof.is_zero());
        assert!(r4.prof.is_zero());
    }

    #[test]
    fn zero_forcing_zero_everything() {
        let sc = lowfreq(1e-2);
        let c = ModeCtx::new((0.5, 0.7), &ForcingRecipe::zero(), &sc, &Thresholds::default(), 5).unwrap();
        let m = run_mode(&c, &CascadeConfig { order: 2, ..Default::default() }, 0).unwrap();
        assert!(m.residual.iter().all(|r| r.energy_sq == 0.0));
        assert!(m.munk_coeffs.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn depth_budget_is_enforced() {
        let sc = lowfreq(1e-2);
        let c = ctx(&sc, (0.5, 0.7), 3);
        let cfg = CascadeConfig { order: 2, regularity: 9, ..Default::default() };
        assert!(matches!(run_mode(&c, &cfg, 0), Err(Error::DepthExhausted { requested: 2, budget: 1 })));
    }

    #[test]
    fn leading_y_relation_tracks_full_solve() {
        let sc = lowfreq(1e-3);
        let c = ctx(&sc, (1.0, 1.0), 7);
        let m = run_mode(&c, &CascadeConfig::default(), 0).unwrap();
        let d = m.qy_defect[3].unwrap();
        assert!(d < 10.0 * sc.epsilon * sc.omega.abs(), "{d}");
    }
}
