//! Order-0 geostrophic solution and the order-1 corrector on one tangential
//! mode. Everything here is exact in z (exp-poly profiles) and exact to the
//! carried jet degree in ξ_y, so y-multiplication is i∂/∂ξ_y.

use crate::green_kernel::{build_kernel, convolve, kernel_from_roots, GreenKernel};
use crate::jet::{Jet, Scalar};
use crate::munk_roots::{jet_roots, quartic_roots_with, RootSet};
use crate::regime::{DerivedScales, Thresholds};
use crate::spectral_field::{vec_ops, ExpPoly, FieldOps, ForcingRecipe, ModeField, ModeSymbols, Op};
use crate::{Error, Result, C64};
use serde::Serialize;
use std::sync::Arc;

const I: C64 = C64::new(0.0, 1.0);

/// Everything about one mode that does not depend on the order.
#[derive(Debug, Clone)]
pub struct ModeCtx {
    pub xi: (f64, f64),
    pub deg: usize,
    pub sym: Arc<ModeSymbols<Jet>>,
    pub roots: RootSet,
    pub mu_plus: [Jet; 2],
    pub kernel: GreenKernel<Jet>,
    pub forcing: [ExpPoly<Jet>; 2],
}

impl ModeCtx {
    /// `deg` is the jet degree in ξ_y; an order-K construction with its
    /// residual needs 2K + 1.
    pub fn new(xi: (f64, f64), recipe: &ForcingRecipe, sc: &DerivedScales, th: &Thresholds, deg: usize) -> Result<ModeCtx> {
        let roots = quartic_roots_with(xi, sc, th)?;
        build_kernel(&roots, sc)?;
        let xi_y = Jet::variable(xi.1, deg);
        let base = [roots.mu_plus[0], roots.mu_plus[1], roots.mu_minus[0], roots.mu_minus[1]];
        let mu = jet_roots(xi.0, xi_y, &base, sc, deg);
        let kernel = kernel_from_roots([mu[0], mu[1]], [mu[2], mu[3]], sc);
        Ok(ModeCtx {
            xi,
            deg,
            sym: Arc::new(ModeSymbols::new(Jet::real(xi.0), xi_y, *sc)),
            mu_plus: [mu[0], mu[1]],
            roots,
            kernel,
            forcing: recipe.mode_profiles(xi.0, xi_y),
        })
    }

    pub fn sc(&self) -> &DerivedScales {
        &self.sym.sc
    }

    pub fn field(&self, p: ExpPoly<Jet>) -> ModeField {
        ModeField::new(&self.sym, p)
    }

    pub fn forcing_fields(&self) -> [ModeField; 2] {
        [self.field(self.forcing[0].clone()), self.field(self.forcing[1].clone())]
    }

    /// Σ c_j e^{−μ_j⁺ z}
    pub fn munk_layer(&self, c: &[Jet; 2]) -> ExpPoly<Jet> {
        ExpPoly::exp(self.mu_plus[0], c[0]).add(&ExpPoly::exp(self.mu_plus[1], c[1]))
    }

    /// Determinant of the Munk trace matrix relative to its row norms.
    pub fn munk_det_rel(&self) -> f64 {
        let (s, c) = (self.sc().s, self.sc().c);
        let [m1, m2] = [self.mu_plus[0].value(), self.mu_plus[1].value()];
        let iy = I * self.xi.1;
        let a = c * I * self.xi.0;
        let det = (-iy * s * (m2 - m1)).norm();
        let r1 = iy.norm() * 2f64.sqrt();
        let r2 = (a + s * m1).norm().hypot((a + s * m2).norm());
        det / (r1 * r2)
    }
}

/// One origin's share of an order: global velocity, pressure, density.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub u: [ExpPoly<Jet>; 3],
    pub p: ExpPoly<Jet>,
    pub rho: ExpPoly<Jet>,
}

impl Default for Part {
    fn default() -> Self {
        Part { u: [ExpPoly::zero(), ExpPoly::zero(), ExpPoly::zero()], p: ExpPoly::zero(), rho: ExpPoly::zero() }
    }
}

impl Part {
    pub fn add(&self, o: &Part) -> Part {
        Part {
            u: [self.u[0].add(&o.u[0]), self.u[1].add(&o.u[1]), self.u[2].add(&o.u[2])],
            p: self.p.add(&o.p),
            rho: self.rho.add(&o.rho),
        }
    }

    pub fn scale_re(&self, k: f64) -> Part {
        let k = C64::new(k, 0.0);
        Part { u: [self.u[0].scale(k), self.u[1].scale(k), self.u[2].scale(k)], p: self.p.scale(k), rho: self.rho.scale(k) }
    }

    pub fn trace_u(&self) -> [Jet; 3] {
        [self.u[0].trace(), self.u[1].trace(), self.u[2].trace()]
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().all(|p| p.is_zero()) && self.p.is_zero() && self.rho.is_zero()
    }

    /// Geostrophic-hydrostatic part built from a pressure: u_h = ∇_h^⊥p,
    /// ρ = −∂₃p, u₃ = 0.
    pub fn from_pressure(ctx: &ModeCtx, p: &ExpPoly<Jet>) -> Part {
        let f = ctx.field(p.clone());
        let [u1, u2] = vec_ops::grad_perp(&f);
        Part { u: [u1.prof, u2.prof, ExpPoly::zero()], p: p.clone(), rho: f.op(Op::D3).prof.scale(C64::new(-1.0, 0.0)) }
    }

    /// Largest |u(0)| over max_z |u| (sampled), over the three components.
    pub fn trace_ratio(&self, zs: &[f64]) -> f64 {
        let t = self.trace_u().iter().map(|v| v.value().norm()).fold(0.0, f64::max);
        let m = self.u.iter().map(|p| p.base().sup_sampled(zs)).fold(0.0, f64::max);
        if m == 0.0 {
            0.0
        } else {
            t / m
        }
    }

    /// max |∇·u| over max |∂u| (sampled).
    pub fn divergence_ratio(&self, ctx: &ModeCtx, zs: &[f64]) -> f64 {
        let f: Vec<ModeField> = self.u.iter().map(|p| ctx.field(p.clone())).collect();
        let terms = [f[0].op(Op::D1), f[1].op(Op::D2), f[2].op(Op::D3)];
        let div = terms[0].add(&terms[1]).add(&terms[2]);
        let m = terms.iter().map(|t| t.prof.base().sup_sampled(zs)).fold(0.0, f64::max);
        if m == 0.0 {
            0.0
        } else {
            div.prof.base().sup_sampled(zs) / m
        }
    }
}

/// Order k of the expansion at one mode, split by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerm {
    pub order: usize,
    pub interior: Part,
    pub munk: Part,
    pub ekman: Part,
    pub munk_coeffs: [Jet; 2],
    pub ekman_coeff: Jet,
}

impl ExpansionTerm {
    pub fn total(&self) -> Part {
        self.interior.add(&self.munk).add(&self.ekman)
    }
}

/// Munk coefficients from the explicit inverse
/// (1/(μ₂−μ₁))[[−μ₂/(iξ_y) − cξ_x/(sξ_y), −1/s], [μ₁/(iξ_y) + cξ_x/(sξ_y), 1/s]]
/// applied to −h, h the horizontal trace to cancel.
pub fn munk_coeffs_explicit(ctx: &ModeCtx, h: [Jet; 2]) -> Result<[Jet; 2]> {
    if !(ctx.munk_det_rel() >= 1e-12) {
        return Err(Error::SingularTraceSystem(ctx.xi.0, ctx.xi.1));
    }
    let (s, c) = (ctx.sc().s, ctx.sc().c);
    let [m1, m2] = ctx.mu_plus;
    let xy = ctx.sym.xi_y;
    let iy = xy.scale(I);
    let cx = Jet::real(c * ctx.xi.0 / s) / xy;
    let inv = Jet::one() / (m2 - m1);
    let a11 = (-(m2 / iy) - cx) * inv;
    let a12 = -inv.scale_re(1.0 / s);
    let a21 = (m1 / iy + cx) * inv;
    let a22 = inv.scale_re(1.0 / s);
    let (h1, h2) = (-h[0], -h[1]);
    Ok([a11 * h1 + a12 * h2, a21 * h1 + a22 * h2])
}

fn finish(ctx: &ModeCtx, order: usize, interior: Part, h: [Jet; 2]) -> Result<ExpansionTerm> {
    let c = munk_coeffs_explicit(ctx, h)?;
    let munk = Part::from_pressure(ctx, &ctx.munk_layer(&c));
    Ok(ExpansionTerm { order, interior, munk, ekman: Part::default(), munk_coeffs: c, ekman_coeff: Jet::zero() })
}

/// ψ_i⁰ = G ∗ (β∇_h^⊥·f_h), plus the Munk layer cancelling its trace.
pub fn build_order0(ctx: &ModeCtx) -> Result<ExpansionTerm> {
    let f = ctx.forcing_fields();
    let src = vec_ops::curl(&f).scale_re(ctx.sc().beta);
    let p = convolve(&ctx.kernel, &src.prof);
    let interior = Part::from_pressure(ctx, &p);
    let h = [interior.u[0].trace(), interior.u[1].trace()];
    finish(ctx, 0, interior, h)
}

/// β(∂_t−Δ_ν)∇_h·f − β²y∇_h^⊥·f_h + β²f₁ + 2βyL̃²p + 2β(∂_t−Δ_ν)∂₂p − κν_hβ∂₂Δ_hp.
/// `kappa` is the commutator coefficient, [Δ_ν, y] = κν_h∂₂ with κ = 2.
pub fn corrector_rhs<F: FieldOps>(p0: &F, f: &[F; 2], sc: &DerivedScales, kappa: f64) -> F {
    let b = sc.beta;
    let t1 = vec_ops::div(f).op(Op::Heat).scale_re(b);
    let t2 = vec_ops::curl(f).ymul().scale_re(-b * b);
    let t3 = f[0].scale_re(b * b);
    let t4 = p0.op(Op::L2Tilde).ymul().scale_re(2.0 * b);
    let t5 = p0.op(Op::D2).op(Op::Heat).scale_re(2.0 * b);
    let t6 = p0.op(Op::LapH).op(Op::D2).scale_re(-kappa * sc.nu_h * b);
    t1.add(&t2).add(&t3).add(&t4).add(&t5).add(&t6)
}

/// ∇_h^⊥·L¹(βf_h^⊥ + L¹∇_hp⁰) by direct composition.
pub fn corrector_rhs_composed<F: FieldOps>(p0: &F, f: &[F; 2], sc: &DerivedScales) -> F {
    let b = sc.beta;
    let inner = vec_ops::l1(&vec_ops::grad(p0), b);
    let fp = vec_ops::map(&vec_ops::perp(f), |g| g.scale_re(b));
    vec_ops::curl(&vec_ops::l1(&vec_ops::add(&fp, &inner), b))
}

/// ū¹ = (−βf_h^⊥ − L¹∇_hp⁰ + ∇_h^⊥p̄¹, −∂_t∂₃p⁰), p̄¹ = G ∗ corrector_rhs,
/// then the Munk layer from the explicit inverse. No Ekman part.
pub fn build_order1(ctx: &ModeCtx, t0: &ExpansionTerm, kappa: f64) -> Result<ExpansionTerm> {
    let sc = *ctx.sc();
    let p0 = ctx.field(t0.interior.p.add(&t0.munk.p));
    let f = ctx.forcing_fields();
    let rhs = corrector_rhs(&p0, &f, &sc, kappa);
    let pbar = convolve(&ctx.kernel, &rhs.prof);
    let g = Part::from_pressure(ctx, &pbar);
    let l1 = vec_ops::l1(&vec_ops::grad(&p0), sc.beta);
    let fp = vec_ops::perp(&f);
    let uh: Vec<ExpPoly<Jet>> = (0..2)
        .map(|i| g.u[i].sub(&l1[i].prof).sub(&fp[i].prof.scale(C64::new(sc.beta, 0.0))))
        .collect();
    let u3 = p0.op(Op::D3).op(Op::Dt).prof.scale(C64::new(-1.0, 0.0));
    let zs = crate::cascade::sample_heights(ctx);
    let t3 = u3.trace().value().norm();
    let n3 = u3.base().sup_sampled(&zs);
    if t3 > 1e-8 * n3 {
        return Err(Error::VerticalTraceNonzero(t3));
    }
    let interior = Part { u: [uh[0].clone(), uh[1].clone(), u3], p: pbar, rho: g.rho };
    let h = [interior.u[0].trace(), interior.u[1].trace()];
    let t = finish(ctx, 1, interior, h)?;
    assert!(t.ekman.is_zero(), "order-1 Ekman part must vanish");
    Ok(t)
}

/// Both sides of the trace estimates for p¹ at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceDiag {
    pub d1_exact: C64,
    pub d1_leading: C64,
    /// |exact − leading| / (β^{2/3}ν_eff^{1/3}·|f̂(0)|)
    pub d1_gap: f64,
    pub d2_exact: C64,
    pub d2_leading: C64,
    pub d2_gap: f64,
    /// |∇_hp¹ − βf_h − Δ_ν∇_h^⊥p⁰| at z = 0, relative; holds exactly once
    /// u¹_h(0) = 0.
    pub identity_defect: f64,
}

/// Trace estimates for p¹. Requires ν₃ ≤ 0.2·ν_h^{4/3}β^{−1/3}.
pub fn effective_traces_p1(ctx: &ModeCtx, t0: &ExpansionTerm, t1: &ExpansionTerm) -> Result<TraceDiag> {
    let sc = *ctx.sc();
    let lim = 0.2 * sc.nu_h.powf(4.0 / 3.0) * sc.beta.powf(-1.0 / 3.0);
    if !(sc.nu_3 <= lim) {
        return Err(Error::HypothesisViolated(format!("nu3 = {:.3e} not << nu_h^(4/3) beta^(-1/3) = {:.3e}", sc.nu_3, lim / 0.2)));
    }
    let (s, c, b) = (sc.s, sc.c, sc.beta);
    let p1 = ctx.field(t1.interior.p.add(&t1.munk.p));
    let p0 = ctx.field(t0.interior.p.add(&t0.munk.p));
    let pi = ctx.field(t0.interior.p.clone());
    let f0 = [ctx.forcing[0].trace().value(), ctx.forcing[1].trace().value()];
    let fscale = f0[0].norm().max(f0[1].norm());
    let scale = sc.low_threshold() * fscale;
    let gap = |a: C64, b: C64| if scale > 0.0 { (a - b).norm() / scale } else { 0.0 };

    let d1 = p1.op(Op::D1).prof.trace().value();
    let d1_lead = b * f0[0];
    let d2 = p1.op(Op::D2).prof.trace().value();
    let pi0 = pi.prof.trace().value();
    let dzpi0 = pi.prof.dz().trace().value();
    let [m1, m2] = [ctx.mu_plus[0].value(), ctx.mu_plus[1].value()];
    let curl_f0 = vec_ops::curl(&ctx.forcing_fields()).prof.trace().value();
    let g2: C64 = (0..2).map(|j| ctx.kernel.c_plus[j].value() * ctx.kernel.mu_plus[j].value().powi(2)).sum();
    let d2_lead = b * f0[1] - b * pi0 + I * sc.omega * dzpi0 / s + 3.0 * s * s * c * sc.nu_h * m1 * m2 * I * ctx.xi.0 * pi0
        + s * s * sc.nu_h * g2 * b * curl_f0;

    let lap = vec_ops::map(&vec_ops::grad_perp(&p0), |g| g.op(Op::LapNu));
    let want = [b * f0[0] + lap[0].prof.trace().value(), b * f0[1] + lap[1].prof.trace().value()];
    let got = [d1, d2];
    let num = (got[0] - want[0]).norm().hypot((got[1] - want[1]).norm());
    let den = want[0].norm().hypot(want[1].norm()).max(got[0].norm().hypot(got[1].norm()));
    Ok(TraceDiag {
        d1_exact: d1,
        d1_leading: d1_lead,
        d1_gap: gap(d1, d1_lead),
        d2_exact: d2,
        d2_leading: d2_lead,
        d2_gap: gap(d2, d2_lead),
        identity_defect: if den > 0.0 { num / den } else { 0.0 },
    })
}
