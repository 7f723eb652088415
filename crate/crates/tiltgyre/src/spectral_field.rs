//! Fields on the half-space at one time frequency: a tangential Fourier grid,
//! z-profiles that are sums of polynomials times exponentials, differential
//! symbols, multiplication by y, and forcing ingestion.

use crate::jet::{Jet, Scalar};
use crate::regime::DerivedScales;
use crate::{Error, Result, C64};
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

const I: C64 = C64::new(0.0, 1.0);

/// Rates closer than this (relative) are treated as the same exponential.
pub const CONFLUENCE_TOL: f64 = 1e-8;

pub fn same_rate(a: C64, b: C64) -> bool {
    (a - b).norm() <= CONFLUENCE_TOL * a.norm().max(b.norm()).max(1e-300)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// One term P(z)·e^{−μz}; `poly[n]` multiplies zⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct Term<T> {
    pub rate: T,
    pub poly: Vec<T>,
}

/// Σ P_i(z) e^{−μ_i z}.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpPoly<T> {
    pub terms: Vec<Term<T>>,
}

impl<T: Scalar> Default for ExpPoly<T> {
    fn default() -> Self {
        ExpPoly { terms: vec![] }
    }
}

impl<T: Scalar> ExpPoly<T> {
    pub fn zero() -> Self {
        ExpPoly { terms: vec![] }
    }

    /// amp·e^{−rate·z}
    pub fn exp(rate: T, amp: T) -> Self {
        ExpPoly { terms: vec![Term { rate, poly: vec![amp] }] }
    }

    pub fn term(rate: T, poly: Vec<T>) -> Self {
        ExpPoly { terms: vec![Term { rate, poly }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.poly.iter().all(|c| c.is_zero()))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(|t| t.poly.len().saturating_sub(1)).max().unwrap_or(0)
    }

    fn push_term(&mut self, rate: T, poly: &[T]) {
        if let Some(t) = self.terms.iter_mut().find(|t| same_rate(t.rate.base(), rate.base())) {
            if t.poly.len() < poly.len() {
                t.poly.resize(poly.len(), T::zero());
            }
            for (a, &b) in t.poly.iter_mut().zip(poly) {
                *a = *a + b;
            }
        } else {
            self.terms.push(Term { rate, poly: poly.to_vec() });
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for t in &o.terms {
            out.push_term(t.rate, &t.poly);
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, k: C64) -> Self {
        self.map_coeffs(|c| c.scale(k))
    }

    pub fn mul_scalar(&self, k: T) -> Self {
        self.map_coeffs(|c| c * k)
    }

    pub fn map_coeffs(&self, f: impl Fn(T) -> T) -> Self {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { rate: t.rate, poly: t.poly.iter().map(|&c| f(c)).collect() })
                .collect(),
        }
    }

    /// z·P
    pub fn mul_z(&self) -> Self {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut p = vec![T::zero()];
                    p.extend_from_slice(&t.poly);
                    Term { rate: t.rate, poly: p }
                })
                .collect(),
        }
    }

    /// Multiply by e^{−γz}.
    pub fn mul_exp(&self, gamma: T) -> Self {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { rate: t.rate + gamma, poly: t.poly.clone() })
                .collect(),
        }
    }

    /// ∂_z, exact: (P' − μP)e^{−μz}.
    pub fn dz(&self) -> Self {
        ExpPoly { terms: self.terms.iter().map(|t| dz_term(t)).collect() }
    }

    /// Apply a constant-coefficient polynomial in ∂_z (Horner per term).
    pub fn apply(&self, op: &DOp<T>) -> Self {
        let n = op.coeffs.len();
        if n == 0 {
            return ExpPoly::zero();
        }
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let mut q = Term { rate: t.rate, poly: t.poly.iter().map(|&c| c * op.coeffs[n - 1]).collect() };
                    for k in (0..n - 1).rev() {
                        q = dz_term(&q);
                        for (a, &b) in q.poly.iter_mut().zip(&t.poly) {
                            *a = *a + b * op.coeffs[k];
                        }
                    }
                    q
                })
                .collect(),
        }
    }

    /// Value at z = 0.
    pub fn trace(&self) -> T {
        self.terms.iter().fold(T::zero(), |acc, t| acc + t.poly.first().copied().unwrap_or(T::zero()))
    }

    /// Base-value evaluation at z.
    pub fn eval(&self, z: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for t in &self.terms {
            let mut p = C64::new(0.0, 0.0);
            for c in t.poly.iter().rev() {
                p = p * z + c.base();
            }
            acc += p * (-t.rate.base() * z).exp();
        }
        acc
    }

    pub fn base(&self) -> ExpPoly<C64> {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { rate: t.rate.base(), poly: t.poly.iter().map(|c| c.base()).collect() })
                .collect(),
        }
    }

    /// ∫₀^∞ z^w |g|² dz summed over w with weights `wts[w]`, in closed form.
    pub fn weighted_l2_sq(&self, wts: &[f64]) -> f64 {
        let b = self.base();
        let mut acc = 0.0;
        for ta in &b.terms {
            for tb in &b.terms {
                let k = ta.rate + tb.rate.conj();
                for (i, pa) in ta.poly.iter().enumerate() {
                    if pa.norm() == 0.0 {
                        continue;
                    }
                    for (j, pb) in tb.poly.iter().enumerate() {
                        let mut s = C64::new(0.0, 0.0);
                        for (w, &wt) in wts.iter().enumerate() {
                            if wt == 0.0 {
                                continue;
                            }
                            let n = i + j + w;
                            s += wt * factorial(n) / k.powu(n as u32 + 1);
                        }
                        acc += (pa * pb.conj() * s).re;
                    }
                }
            }
        }
        acc.max(0.0)
    }

    /// ∫₀^∞ |g|² dz
    pub fn l2_sq(&self) -> f64 {
        self.weighted_l2_sq(&[1.0])
    }

    /// ∫₀^∞ (1+z²)|g|² dz
    pub fn l2_sq_weighted(&self) -> f64 {
        self.weighted_l2_sq(&[1.0, 0.0, 1.0])
    }

    /// max over the sample points of |g(z)|
    pub fn sup_sampled(&self, zs: &[f64]) -> f64 {
        zs.iter().map(|&z| self.eval(z).norm()).fold(0.0, f64::max)
    }

    /// Drop polynomial coefficients that are exactly zero at the top.
    pub fn trimmed(mut self) -> Self {
        for t in self.terms.iter_mut() {
            while t.poly.len() > 1 && t.poly.last().map(|c| c.is_zero()).unwrap_or(false) {
                t.poly.pop();
            }
        }
        self.terms.retain(|t| !t.poly.iter().all(|c| c.is_zero()));
        self
    }
}

fn dz_term<T: Scalar>(t: &Term<T>) -> Term<T> {
    let n = t.poly.len();
    let mut p: Vec<T> = t.poly.iter().map(|&c| -(c * t.rate)).collect();
    for k in 1..n {
        p[k - 1] = p[k - 1] + t.poly[k].scale(C64::new(k as f64, 0.0));
    }
    Term { rate: t.rate, poly: p }
}

impl ExpPoly<Jet> {
    /// y·g for a profile whose coefficients and rates are jets in ξ_y:
    /// y ↦ i∂/∂ξ_y, so y[P e^{−μz}] = i(∂P − z μ' P) e^{−μz}.
    pub fn ymul(&self) -> Self {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let dmu = t.rate.d_eta();
                    let n = t.poly.len();
                    let mut q = vec![Jet::zero(); n + 1];
                    for k in 0..n {
                        q[k] = q[k] + t.poly[k].d_eta().scale(I);
                        q[k + 1] = q[k + 1] - (dmu * t.poly[k]).scale(I);
                    }
                    if dmu.is_zero() && dmu.is_exact() {
                        q.pop();
                    }
                    Term { rate: t.rate, poly: q }
                })
                .collect(),
        }
    }

    pub fn truncate(&self, deg: usize) -> Self {
        self.map_coeffs(|c| c.truncate(deg))
    }
}

/// Constant-coefficient polynomial in ∂_z: Σ a_k ∂_z^k.
#[derive(Debug, Clone, PartialEq)]
pub struct DOp<T> {
    pub coeffs: Vec<T>,
}

impl<T: Scalar> DOp<T> {
    pub fn cst(a: T) -> Self {
        DOp { coeffs: vec![a] }
    }
    pub fn dz() -> Self {
        DOp { coeffs: vec![T::zero(), T::one()] }
    }
    pub fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        let g = |v: &Vec<T>, i: usize| v.get(i).copied().unwrap_or(T::zero());
        DOp { coeffs: (0..n).map(|i| g(&self.coeffs, i) + g(&o.coeffs, i)).collect() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(T::re(-1.0)))
    }
    pub fn scale(&self, k: T) -> Self {
        DOp { coeffs: self.coeffs.iter().map(|&c| c * k).collect() }
    }
    /// Composition (constant coefficients commute).
    pub fn mul(&self, o: &Self) -> Self {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return DOp { coeffs: vec![] };
        }
        let mut c = vec![T::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                c[i + j] = c[i + j] + a * b;
            }
        }
        DOp { coeffs: c }
    }
    /// Symbol on e^{−μz}: Σ a_k (−μ)^k.
    pub fn symbol_at(&self, mu: T) -> T {
        let m = -mu;
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * m + c)
    }
}

/// Differential operators acting on one tangential mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    /// ∂_t = iω
    Dt,
    Dx,
    Dy,
    Dz,
    D1,
    D2,
    D3,
    LapH,
    Lap,
    LapNu,
    /// ∂_t − Δ_ν
    Heat,
    /// ∂_tΔ_h + β∂₁ − Δ_νΔ_h
    L2Tilde,
    /// ∂_tΔ + β∂₁ − Δ_νΔ_h
    L2,
}

/// Wavenumbers of one mode plus the physical scales.
#[derive(Debug, Clone)]
pub struct ModeSymbols<T> {
    pub xi_x: T,
    pub xi_y: T,
    pub sc: DerivedScales,
}

impl<T: Scalar> ModeSymbols<T> {
    pub fn new(xi_x: T, xi_y: T, sc: DerivedScales) -> Self {
        ModeSymbols { xi_x, xi_y, sc }
    }

    fn re(&self, v: f64) -> T {
        T::re(v)
    }

    pub fn op(&self, op: Op) -> DOp<T> {
        let (s, c) = (self.sc.s, self.sc.c);
        let ix = self.xi_x.scale(I);
        let iy = self.xi_y.scale(I);
        match op {
            Op::Dt => DOp::cst(T::cst(C64::new(0.0, self.sc.omega))),
            Op::Dx => DOp::cst(ix),
            Op::Dy | Op::D2 => DOp::cst(iy),
            Op::Dz => DOp::dz(),
            Op::D1 => DOp { coeffs: vec![ix.scale(C64::new(c, 0.0)), self.re(-s)] },
            Op::D3 => DOp { coeffs: vec![ix.scale(C64::new(s, 0.0)), self.re(c)] },
            Op::LapH => {
                let d1 = self.op(Op::D1);
                d1.mul(&d1).add(&DOp::cst(iy * iy))
            }
            Op::Lap => DOp {
                coeffs: vec![-(self.xi_x * self.xi_x) - self.xi_y * self.xi_y, T::zero(), T::one()],
            },
            Op::LapNu => {
                let d3 = self.op(Op::D3);
                self.op(Op::LapH).scale(self.re(self.sc.nu_h)).add(&d3.mul(&d3).scale(self.re(self.sc.nu_3)))
            }
            Op::Heat => self.op(Op::Dt).sub(&self.op(Op::LapNu)),
            Op::L2Tilde => {
                let lh = self.op(Op::LapH);
                self.op(Op::Heat).mul(&lh).add(&self.op(Op::D1).scale(self.re(self.sc.beta)))
            }
            Op::L2 => {
                let d3 = self.op(Op::D3);
                self.op(Op::L2Tilde).add(&self.op(Op::Dt).mul(&d3.mul(&d3)))
            }
        }
    }
}

/// Minimal field algebra shared by the per-mode jet representation and the
/// grid representation, so operator formulas are written once.
pub trait FieldOps: Clone {
    fn op(&self, op: Op) -> Self;
    fn ymul(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn scale(&self, k: C64) -> Self;
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }
    fn scale_re(&self, k: f64) -> Self {
        self.scale(C64::new(k, 0.0))
    }
}

/// One mode's profile together with its symbols.
#[derive(Debug, Clone)]
pub struct ModeField {
    pub sym: Arc<ModeSymbols<Jet>>,
    pub prof: ExpPoly<Jet>,
}

impl ModeField {
    pub fn new(sym: &Arc<ModeSymbols<Jet>>, prof: ExpPoly<Jet>) -> Self {
        ModeField { sym: sym.clone(), prof }
    }
}

impl FieldOps for ModeField {
    fn op(&self, op: Op) -> Self {
        ModeField { sym: self.sym.clone(), prof: self.prof.apply(&self.sym.op(op)) }
    }
    fn ymul(&self) -> Self {
        ModeField { sym: self.sym.clone(), prof: self.prof.ymul() }
    }
    fn add(&self, o: &Self) -> Self {
        ModeField { sym: self.sym.clone(), prof: self.prof.add(&o.prof) }
    }
    fn scale(&self, k: C64) -> Self {
        ModeField { sym: self.sym.clone(), prof: self.prof.scale(k) }
    }
}

/// Vector helpers over any [`FieldOps`]. Horizontal vectors are `[F; 2]`.
pub mod vec_ops {
    use super::*;

    /// v^⊥ = (−v₂, v₁)
    pub fn perp<F: FieldOps>(v: &[F; 2]) -> [F; 2] {
        [v[1].scale_re(-1.0), v[0].clone()]
    }
    /// ∇_h^⊥ p = (−∂₂p, ∂₁p)
    pub fn grad_perp<F: FieldOps>(p: &F) -> [F; 2] {
        [p.op(Op::D2).scale_re(-1.0), p.op(Op::D1)]
    }
    pub fn grad<F: FieldOps>(p: &F) -> [F; 2] {
        [p.op(Op::D1), p.op(Op::D2)]
    }
    /// ∇_h^⊥·v = −∂₂v₁ + ∂₁v₂
    pub fn curl<F: FieldOps>(v: &[F; 2]) -> F {
        v[1].op(Op::D1).sub(&v[0].op(Op::D2))
    }
    pub fn div<F: FieldOps>(v: &[F; 2]) -> F {
        v[0].op(Op::D1).add(&v[1].op(Op::D2))
    }
    pub fn map<F: FieldOps>(v: &[F; 2], f: impl Fn(&F) -> F) -> [F; 2] {
        [f(&v[0]), f(&v[1])]
    }
    pub fn add<F: FieldOps>(a: &[F; 2], b: &[F; 2]) -> [F; 2] {
        [a[0].add(&b[0]), a[1].add(&b[1])]
    }
    /// L¹v = (∂_t − Δ_ν)v + βy v^⊥
    pub fn l1<F: FieldOps>(v: &[F; 2], beta: f64) -> [F; 2] {
        let h = map(v, |f| f.op(Op::Heat));
        let r = map(&perp(v), |f| f.ymul().scale_re(beta));
        add(&h, &r)
    }
}

/// Periodic box and its Fourier modes. `lx`, `ly` are the periods.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModeGrid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl ModeGrid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> ModeGrid {
        assert!(nx % 2 == 0 && ny % 2 == 0, "mode counts must be even");
        ModeGrid { lx, ly, nx, ny }
    }
    pub fn signed(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }
    pub fn kx(&self, i: usize) -> f64 {
        2.0 * PI * Self::signed(i, self.nx) as f64 / self.lx
    }
    pub fn ky(&self, j: usize) -> f64 {
        2.0 * PI * Self::signed(j, self.ny) as f64 / self.ly
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Flat index, ξ_y fastest.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k / self.ny, k % self.ny)
    }
    pub fn xi(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.kx(i), self.ky(j))
    }
    pub fn is_nyquist(&self, k: usize) -> bool {
        let (i, j) = self.ij(k);
        i == self.nx / 2 || j == self.ny / 2
    }
    /// Index of −ξ.
    pub fn partner(&self, k: usize) -> usize {
        let (i, j) = self.ij(k);
        self.idx((self.nx - i) % self.nx, (self.ny - j) % self.ny)
    }
    /// Largest |ξ| retained by the 2/3 rule along each axis.
    pub fn dealias_radius(&self) -> f64 {
        (2.0 / 3.0) * PI * (self.nx as f64 / self.lx).min(self.ny as f64 / self.ly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Component {
    Scalar,
    Horizontal,
    Vector3,
}

/// Per-mode profiles on a [`ModeGrid`]. `comps[c][k]` is component c at mode k.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub grid: ModeGrid,
    pub omega: f64,
    pub kind: Component,
    pub comps: Vec<Vec<ExpPoly<C64>>>,
    pub sc: DerivedScales,
    /// Largest fraction of spectral energy found in the outer third during
    /// any y-multiplication that produced this field.
    pub alias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasWarning {
    pub outer_fraction: f64,
}

impl SpectralField {
    pub fn zeros(grid: ModeGrid, sc: DerivedScales, kind: Component) -> Self {
        let n = match kind {
            Component::Scalar => 1,
            Component::Horizontal => 2,
            Component::Vector3 => 3,
        };
        SpectralField {
            grid,
            omega: sc.omega,
            kind,
            comps: vec![vec![ExpPoly::zero(); grid.len()]; n],
            sc,
            alias: 0.0,
        }
    }

    pub fn component(&self, c: usize) -> SpectralField {
        SpectralField {
            grid: self.grid,
            omega: self.omega,
            kind: Component::Scalar,
            comps: vec![self.comps[c].clone()],
            sc: self.sc,
            alias: self.alias,
        }
    }

    fn map_modes(&self, f: impl Fn(usize, &ExpPoly<C64>) -> ExpPoly<C64> + Sync) -> Self {
        let mut out = self.clone();
        for comp in out.comps.iter_mut() {
            let new: Vec<_> = comp.iter().enumerate().map(|(k, p)| f(k, p)).collect();
            *comp = new;
        }
        out
    }

    pub fn symbols(&self, k: usize) -> ModeSymbols<C64> {
        let (x, y) = self.grid.xi(k);
        ModeSymbols::new(C64::new(x, 0.0), C64::new(y, 0.0), self.sc)
    }

    /// Exact per-mode action of a differential symbol.
    pub fn apply_diff(&self, op: Op) -> Self {
        self.map_modes(|k, p| p.apply(&self.symbols(k).op(op)))
    }

    /// Pseudo-spectral product with the periodic sawtooth y ∈ [−L_y/2, L_y/2):
    /// inverse transform in y for each ξ_x and each (rate, power of z),
    /// multiply by the sampled coordinate, transform back.
    pub fn multiply_by_y(&self) -> (SpectralField, Option<AliasWarning>) {
        let g = self.grid;
        let ny = g.ny;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(ny);
        let inv = planner.plan_fft_inverse(ny);
        let yv: Vec<f64> = (0..ny)
            .map(|j| {
                let y = j as f64 * g.ly / ny as f64;
                if j < ny / 2 {
                    y
                } else {
                    y - g.ly
                }
            })
            .collect();
        let cut = ny as f64 / 3.0;
        let (mut outer, mut total) = (0.0, 0.0);
        let mut out = self.clone();
        for (ci, comp) in self.comps.iter().enumerate() {
            for i in 0..g.nx {
                // rates shared along the row
                let mut keys: Vec<(C64, usize)> = vec![];
                for j in 0..ny {
                    for t in &comp[g.idx(i, j)].terms {
                        if !keys.iter().any(|(r, _)| same_rate(*r, t.rate)) {
                            keys.push((t.rate, 0));
                        }
                        let e = keys.iter_mut().find(|(r, _)| same_rate(*r, t.rate)).unwrap();
                        e.1 = e.1.max(t.poly.len());
                    }
                }
                let mut rows: Vec<ExpPoly<C64>> = vec![ExpPoly::zero(); ny];
                for &(rate, len) in &keys {
                    for n in 0..len {
                        let mut buf: Vec<C64> = (0..ny)
                            .map(|j| {
                                comp[g.idx(i, j)]
                                    .terms
                                    .iter()
                                    .find(|t| same_rate(t.rate, rate))
                                    .and_then(|t| t.poly.get(n).copied())
                                    .unwrap_or_default()
                            })
                            .collect();
                        for (j, v) in buf.iter().enumerate() {
                            let e = v.norm_sqr();
                            total += e;
                            if (ModeGrid::signed(j, ny).abs() as f64) > cut {
                                outer += e;
                            }
                        }
                        inv.process(&mut buf);
                        for (v, &y) in buf.iter_mut().zip(&yv) {
                            *v *= y;
                        }
                        fwd.process(&mut buf);
                        for (j, v) in buf.iter().enumerate() {
                            if j == ny / 2 {
                                continue;
                            }
                            let mut poly = vec![C64::new(0.0, 0.0); n + 1];
                            poly[n] = v / ny as f64;
                            rows[j] = rows[j].add(&ExpPoly::term(rate, poly));
                        }
                    }
                }
                for (j, r) in rows.into_iter().enumerate() {
                    out.comps[ci][g.idx(i, j)] = r;
                }
            }
        }
        let frac = if total > 0.0 { outer / total } else { 0.0 };
        out.alias = self.alias.max(frac);
        let warn = (frac > 1e-20).then_some(AliasWarning { outer_fraction: frac });
        (out, warn)
    }

    /// Values of every mode at height z (component c).
    pub fn mode_values(&self, c: usize, z: f64) -> Vec<C64> {
        self.comps[c].iter().map(|p| p.eval(z)).collect()
    }

    /// Largest relative violation of amplitude(−ξ) = conj(amplitude(ξ)),
    /// sampled at a few heights.
    pub fn reality_defect(&self) -> f64 {
        let zs = [0.0, 0.5, 1.0, 2.0];
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for comp in &self.comps {
            for k in 0..self.grid.len() {
                if self.grid.is_nyquist(k) {
                    continue;
                }
                let q = self.grid.partner(k);
                for &z in &zs {
                    let a = comp[k].eval(z);
                    let b = comp[q].eval(z);
                    worst = worst.max((a - b.conj()).norm());
                    scale = scale.max(a.norm());
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|p| p.is_zero()))
    }

    /// Columnar export: one header line, then (ξ_x, ξ_y, term, Re μ, Im μ,
    /// coefficient pairs) per row.
    pub fn write_columnar(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(
            w,
            "# Lx={} Ly={} Nx={} Ny={} omega={} components={}",
            self.grid.lx,
            self.grid.ly,
            self.grid.nx,
            self.grid.ny,
            self.omega,
            self.comps.len()
        )?;
        for (ci, comp) in self.comps.iter().enumerate() {
            for (k, p) in comp.iter().enumerate() {
                let (x, y) = self.grid.xi(k);
                for (ti, t) in p.terms.iter().enumerate() {
                    write!(w, "{ci} {x:.17e} {y:.17e} {ti} {:.17e} {:.17e}", t.rate.re, t.rate.im)?;
                    for c in &t.poly {
                        write!(w, " {:.17e} {:.17e}", c.re, c.im)?;
                    }
                    writeln!(w)?;
                }
            }
        }
        Ok(())
    }
}

impl FieldOps for SpectralField {
    fn op(&self, op: Op) -> Self {
        self.apply_diff(op)
    }
    fn ymul(&self) -> Self {
        self.multiply_by_y().0
    }
    fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(&o.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = x.add(y);
            }
        }
        out.alias = self.alias.max(o.alias);
        out
    }
    fn scale(&self, k: C64) -> Self {
        self.map_modes(|_, p| p.scale(k))
    }
}

/// Samples f(x_i, y_j) = (1/(L_xL_y)) Σ F̂ e^{i(ξ_x x_i + ξ_y y_j)} on the
/// regular grid x_i = i L_x/N_x, y_j = j L_y/N_y.
pub fn to_samples(grid: &ModeGrid, amps: &[C64]) -> Vec<C64> {
    let mut buf = amps.to_vec();
    fft2(grid, &mut buf, true);
    let k = 1.0 / (grid.lx * grid.ly);
    buf.iter().map(|v| v * k).collect()
}

/// Inverse of [`to_samples`].
pub fn from_samples(grid: &ModeGrid, samples: &[C64]) -> Vec<C64> {
    let mut buf = samples.to_vec();
    fft2(grid, &mut buf, false);
    let k = grid.lx * grid.ly / grid.len() as f64;
    buf.iter().map(|v| v * k).collect()
}

fn fft2(grid: &ModeGrid, buf: &mut [C64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (nx, ny) = (grid.nx, grid.ny);
    let py = if inverse { planner.plan_fft_inverse(ny) } else { planner.plan_fft_forward(ny) };
    for row in buf.chunks_mut(ny) {
        py.process(row);
    }
    let px = if inverse { planner.plan_fft_inverse(nx) } else { planner.plan_fft_forward(nx) };
    let mut col = vec![C64::new(0.0, 0.0); nx];
    for j in 0..ny {
        for i in 0..nx {
            col[i] = buf[i * ny + j];
        }
        px.process(&mut col);
        for i in 0..nx {
            buf[i * ny + j] = col[i];
        }
    }
}

// ---------------------------------------------------------------- forcing

/// Envelope in one variable, centred at `center`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Envelope {
    /// e^{−(t−t0)²/w²}
    Gaussian { width: f64, #[serde(default)] center: f64 },
    /// e^{−|t−t0|/w}
    Exponential { width: f64, #[serde(default)] center: f64 },
}

impl Envelope {
    /// Continuous Fourier transform ∫ g(t) e^{−iξt} dt as a jet in ξ.
    pub fn ft(&self, xi: Jet) -> Jet {
        let (base, t0) = match *self {
            Envelope::Gaussian { width: w, center } => {
                let q = (xi * xi).scale_re(-w * w / 4.0);
                (q.exp().scale_re(w * PI.sqrt()), center)
            }
            Envelope::Exponential { width: w, center } => {
                let den = Jet::real(1.0) + (xi * xi).scale_re(w * w);
                (Jet::real(2.0 * w) / den, center)
            }
        };
        if t0 == 0.0 {
            base
        } else {
            base * xi.scale(C64::new(0.0, -t0)).exp()
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Envelope::Gaussian { width, center } => (-((t - center) / width).powi(2)).exp(),
            Envelope::Exponential { width, center } => (-(t - center).abs() / width).exp(),
        }
    }
}

/// f_h = (a₁, a₂)·X(x)·Y(y)·e^{−γz}, where Y is an envelope optionally
/// multiplied by sin(k₀y).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ForcingRecipe {
    pub amplitude: [f64; 2],
    pub x_envelope: Envelope,
    pub y_envelope: Envelope,
    /// k₀ of the sin(k₀y) factor; 0 means no oscillation.
    #[serde(default)]
    pub y_wavenumber: f64,
    pub gamma: f64,
}

impl ForcingRecipe {
    pub fn zero() -> ForcingRecipe {
        ForcingRecipe {
            amplitude: [0.0, 0.0],
            x_envelope: Envelope::Gaussian { width: 1.0, center: 0.0 },
            y_envelope: Envelope::Gaussian { width: 1.0, center: 0.0 },
            y_wavenumber: 0.0,
            gamma: 1.0,
        }
    }

    /// Y-transform as a jet in ξ_y.
    pub fn y_ft(&self, xi_y: Jet) -> Jet {
        let k0 = self.y_wavenumber;
        if k0 == 0.0 {
            self.y_envelope.ft(xi_y)
        } else {
            let a = self.y_envelope.ft(xi_y - Jet::real(k0));
            let b = self.y_envelope.ft(xi_y + Jet::real(k0));
            (a - b).scale(C64::new(0.0, -0.5))
        }
    }

    /// Transforms of (f₁, f₂) at one mode, as z-profiles.
    pub fn mode_profiles(&self, xi_x: f64, xi_y: Jet) -> [ExpPoly<Jet>; 2] {
        let xy = self.x_envelope.ft(Jet::real(xi_x)) * self.y_ft(xi_y);
        let g = Jet::real(self.gamma);
        [
            ExpPoly::exp(g, xy.scale_re(self.amplitude[0])),
            ExpPoly::exp(g, xy.scale_re(self.amplitude[1])),
        ]
    }

    /// Physical value of (f₁, f₂) at a point of the unbounded domain.
    pub fn eval(&self, x: f64, y: f64, z: f64) -> [f64; 2] {
        let mut v = self.x_envelope.eval(x) * self.y_envelope.eval(y) * (-self.gamma * z).exp();
        if self.y_wavenumber != 0.0 {
            v *= (self.y_wavenumber * y).sin();
        }
        [self.amplitude[0] * v, self.amplitude[1] * v]
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == [0.0, 0.0]
    }
}

/// Truncation and discrete-hypothesis settings for ingestion.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IngestConfig {
    /// R = ε^{−κ}; `None` means κ = (a − b)/2 supplied by the caller.
    pub kappa: f64,
    /// Tail budget ε^N.
    pub tail_exponent: f64,
    /// Exponent Q of the discrete (H4) sum.
    pub h4_q: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IngestReport {
    pub radius: f64,
    pub retained_modes: usize,
    pub tail_relative: f64,
    pub tail_budget: f64,
    /// Modes with ξ_y = 0 and nonzero amplitude, left out of the solve.
    pub excluded_zero_xi_y: usize,
    pub excluded_energy_fraction: f64,
    /// Σ_{ξ_y≠0} |ξ_y|^{−Q} |F̂|² (reported, not gated).
    pub h4_sum: f64,
    /// max over sampled z of ‖F(·,z)‖ / (‖F(·,0)‖ e^{−γz}).
    pub h3_ratio: f64,
    pub reality_defect: f64,
}

/// Tabulate the forcing on the grid, truncate at R = ε^{−κ}, and run the
/// discrete hypothesis checks.
pub fn ingest_forcing(
    recipe: &ForcingRecipe,
    grid: &ModeGrid,
    sc: &DerivedScales,
    cfg: &IngestConfig,
) -> Result<(SpectralField, IngestReport)> {
    let radius = sc.epsilon.powf(-cfg.kappa);
    let mut field = SpectralField::zeros(*grid, *sc, Component::Horizontal);
    let (mut total, mut tail, mut excluded_e) = (0.0, 0.0, 0.0);
    let (mut retained, mut excluded, mut h4) = (0usize, 0usize, 0.0);
    let weight = 1.0 / (2.0 * recipe.gamma);
    for k in 0..grid.len() {
        let (x, y) = grid.xi(k);
        let [p1, p2] = recipe.mode_profiles(x, Jet::real(y));
        let a = p1.trace().value().norm_sqr() + p2.trace().value().norm_sqr();
        let e = a * weight;
        total += e;
        if (x * x + y * y).sqrt() > radius || grid.is_nyquist(k) {
            tail += e;
            continue;
        }
        if y == 0.0 && a > 0.0 {
            if sc.omega == 0.0 {
                return Err(Error::H4Violation(format!(
                    "mode xi=({x:.4}, 0) carries amplitude while omega = 0"
                )));
            }
            excluded += 1;
            excluded_e += e;
            continue;
        }
        if y != 0.0 {
            h4 += y.abs().powf(-cfg.h4_q) * e;
        }
        retained += 1;
        field.comps[0][k] = p1.base();
        field.comps[1][k] = p2.base();
    }
    let tail_rel = if total > 0.0 { (tail / total).sqrt() } else { 0.0 };
    let budget = sc.epsilon.powf(cfg.tail_exponent);
    if tail_rel > budget {
        return Err(Error::TailTooLarge { tail: tail_rel, budget });
    }
    // (H3) proxy: per-height L² norm against e^{−γz}
    let l2_at = |z: f64| -> f64 {
        field.comps.iter().flat_map(|c| c.iter()).map(|p| p.eval(z).norm_sqr()).sum::<f64>().sqrt()
    };
    let n0 = l2_at(0.0);
    let h3 = if n0 > 0.0 {
        [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&z| l2_at(z) / (n0 * (-recipe.gamma * z).exp()))
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let reality = field.reality_defect();
    Ok((
        field,
        IngestReport {
            radius,
            retained_modes: retained,
            tail_relative: tail_rel,
            tail_budget: budget,
            excluded_zero_xi_y: excluded,
            excluded_energy_fraction: if total > 0.0 { excluded_e / total } else { 0.0 },
            h4_sum: h4,
            h3_ratio: h3,
            reality_defect: reality,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regime::{validate, Parameters};
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scales() -> DerivedScales {
        validate(&Parameters::new(1e-2, 0.5, 0.0, 1.0, 2.0, -FRAC_PI_4)).unwrap()
    }

    #[test]
    fn dz_of_z_exp() {
        let p = ExpPoly::term(c(2.0, 0.0), vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let d = p.dz();
        assert_eq!(d.terms[0].poly, vec![c(1.0, 0.0), c(-2.0, 0.0)]);
    }

    #[test]
    fn d1_symbol_on_exponential() {
        let sc = scales();
        let sym = ModeSymbols::new(c(1.3, 0.0), c(0.4, 0.0), sc);
        let mu = c(2.0, 0.7);
        let r = ExpPoly::exp(mu, c(1.0, 0.0)).apply(&sym.op(Op::D1));
        let want = c(0.0, sc.c * 1.3) + mu * sc.s;
        assert!((r.trace() - want).norm() < 1e-14);
        let l = ExpPoly::exp(mu, c(1.0, 0.0)).apply(&sym.op(Op::Lap));
        let want = mu * mu - c(1.3 * 1.3 + 0.4 * 0.4, 0.0);
        assert!((l.trace() - want).norm() < 1e-13);
    }

    #[test]
    fn local_global_identities() {
        let sc = scales();
        let sym = ModeSymbols::new(c(0.7, 0.0), c(-1.1, 0.0), sc);
        let f = ExpPoly::term(c(1.5, 0.3), vec![c(1.0, 2.0), c(0.5, 0.0)])
            .add(&ExpPoly::exp(c(0.4, -1.0), c(-0.3, 0.2)));
        let d1 = f.apply(&sym.op(Op::D1));
        let d3 = f.apply(&sym.op(Op::D3));
        let dx = d1.scale(c(sc.c, 0.0)).add(&d3.scale(c(sc.s, 0.0)));
        let dz = d1.scale(c(-sc.s, 0.0)).add(&d3.scale(c(sc.c, 0.0)));
        for z in [0.0, 0.3, 1.7] {
            let a = f.apply(&sym.op(Op::Dx)).eval(z);
            assert!((dx.eval(z) - a).norm() <= 1e-12 * a.norm());
            let b = f.dz().eval(z);
            assert!((dz.eval(z) - b).norm() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn weighted_norm_closed_form() {
        // ∫(1+z²)e^{−2z}dz = 1/2 + 2/8
        let p = ExpPoly::exp(c(1.0, 3.0), c(1.0, 0.0));
        assert!((p.l2_sq_weighted() - 0.75).abs() < 1e-14);
    }

    #[test]
    fn ymul_of_jet_profile_matches_derivative() {
        // y·e^{−w²ξ²/4}: compare with i d/dξ by finite differences
        let xi = Jet::variable(0.8, 4);
        let w = 1.3;
        let g = (xi * xi).scale_re(-w * w / 4.0).exp();
        let mu = Jet::real(1.0) + xi * xi;
        let p = ExpPoly::exp(mu, g);
        let yp = p.ymul();
        let h = 1e-5;
        let f = |e: f64, z: f64| {
            let x = 0.8 + e;
            (-(w * w * x * x) / 4.0).exp() * (-(1.0 + x * x) * z).exp()
        };
        for z in [0.0, 0.5] {
            let fd = c(0.0, 1.0) * (f(h, z) - f(-h, z)) / (2.0 * h);
            assert!((yp.eval(z) - fd).norm() < 1e-8);
        }
    }

    #[test]
    fn fft_round_trip() {
        let g = ModeGrid::new(10.0, 12.0, 8, 16);
        let amps: Vec<C64> = (0..g.len()).map(|k| c((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
        let back = from_samples(&g, &to_samples(&g, &amps));
        for (a, b) in amps.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn ymul_on_constant_row_gives_sawtooth_spectrum() {
        let sc = scales();
        let g = ModeGrid::new(2.0 * PI, 2.0 * PI, 4, 8);
        let mut f = SpectralField::zeros(g, sc, Component::Scalar);
        f.comps[0][g.idx(0, 0)] = ExpPoly::exp(c(1.0, 0.0), c(g.ly, 0.0));
        let (y, _) = f.multiply_by_y();
        // samples of y·1 reproduce the sawtooth up to the dropped Nyquist mode
        let s = to_samples(&g, &y.mode_values(0, 0.0));
        let d: Vec<f64> = (0..g.ny)
            .map(|j| {
                let yj = ModeGrid::signed(j, g.ny) as f64 * g.ly / g.ny as f64;
                s[j].re - yj / g.lx
            })
            .collect();
        for (j, v) in d.iter().enumerate() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - sign * d[0]).abs() < 1e-12, "{j}: {v}");
        }
        let (yy, w) = y.multiply_by_y();
        assert!(w.is_some() && yy.alias > 0.0);
    }

    #[test]
    fn zero_recipe_gives_zero_field() {
        let sc = scales();
        let g = ModeGrid::new(20.0, 20.0, 16, 16);
        let cfg = IngestConfig { kappa: 0.25, tail_exponent: 2.0, h4_q: 4.0 };
        let (f, rep) = ingest_forcing(&ForcingRecipe::zero(), &g, &sc, &cfg).unwrap();
        assert!(f.is_zero());
        assert_eq!(rep.tail_relative, 0.0);
    }
}
