//! Run configuration, orchestration of the pipeline, field export and the
//! separation figure.

use crate::cascade::{assemble, Cascade, CascadeConfig, ModeSummary};
use crate::ekman_layer::{discard_rule, eigenvector_lambda1, hydrostatic_defect, layer_roots};
use crate::green_kernel::build_kernel;
use crate::munk_roots::{all_roots, quartic_coeffs, quartic_roots_with, SEPARATION_FLAG};
use crate::poly;
use crate::regime::{
    classify_frequency, derive_unchecked, validate, validate_relaxed, DerivedScales, FrequencyRegime, Parameters, Thresholds,
};
use crate::spectral_field::{ingest_forcing, Envelope, ForcingRecipe, IngestConfig, IngestReport, ModeGrid};
use crate::{Error, Result, C64};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Pass/fail levels applied to every run.
pub const TRACE_GATE: f64 = 1e-10;
pub const DIVERGENCE_GATE: f64 = 1e-10;
pub const DIRECT_CHECK_GATE: f64 = 1e-8;
/// Modes may fail individually (and are counted); a run where most fail is
/// rejected.
pub const MIN_SOLVED_FRACTION: f64 = 0.5;
/// Fraction of max|ψ| above which a connected region counts as a gyre.
pub const GYRE_FRACTION: f64 = 0.25;
pub const SLICE_FILE_PREFIX: &str = "psi_x3_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub e: f64,
    pub alpha_degrees: f64,
    #[serde(rename = "M", default = "default_m")]
    pub m: u32,
    #[serde(default = "default_theta_lo")]
    pub theta_lo: f64,
    #[serde(default = "default_theta_hi")]
    pub theta_hi: f64,
    /// Accept b ≤ (3a−d)/4 with a warning.
    #[serde(default)]
    pub relaxed: bool,
}

fn default_m() -> u32 {
    2
}
fn default_theta_lo() -> f64 {
    Thresholds::default().theta_lo
}
fn default_theta_hi() -> f64 {
    Thresholds::default().theta_hi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    Gaussian,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSection {
    #[serde(default = "default_kind")]
    pub envelope: EnvelopeKind,
    pub x_width: f64,
    #[serde(default)]
    pub x_center: f64,
    pub y_width: f64,
    #[serde(default)]
    pub y_center: f64,
    /// k₀ of the sin(k₀y) factor; 0 for none.
    #[serde(default)]
    pub y_wavenumber: f64,
    pub gamma: f64,
    pub amplitude: [f64; 2],
}

fn default_kind() -> EnvelopeKind {
    EnvelopeKind::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    /// Truncation order K.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Forcing truncation radius R = ε^{−kappa}.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_one")]
    pub tail_exponent: f64,
    #[serde(default = "default_one")]
    pub h4_q: f64,
    #[serde(default = "default_regularity")]
    pub regularity: u32,
    #[serde(default = "default_commutator")]
    pub commutator: f64,
    #[serde(default = "default_one")]
    pub budget_exponent: f64,
    /// Extra z levels for the amplitude table.
    #[serde(default)]
    pub z_samples: Vec<f64>,
    /// x₃ levels of the exported slices.
    #[serde(default = "default_x3")]
    pub x3: Vec<f64>,
    /// Length of the slice in x₁, measured from the coast.
    pub x1_span: f64,
    #[serde(default = "default_nx1")]
    pub nx1: usize,
}

fn default_order() -> usize {
    1
}
fn default_kappa() -> f64 {
    0.25
}
fn default_one() -> f64 {
    1.0
}
fn default_regularity() -> u32 {
    20
}
fn default_commutator() -> f64 {
    2.0
}
fn default_x3() -> Vec<f64> {
    vec![0.0]
}
fn default_nx1() -> usize {
    96
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Any of "slices", "amplitudes", "coefficients".
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    /// Free text copied to the manifest.
    #[serde(default)]
    pub label: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<String> {
    vec!["slices".into(), "amplitudes".into(), "coefficients".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub regime: RegimeSection,
    pub forcing: ForcingSection,
    pub grid: GridSection,
    pub solve: SolveSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn parameters(&self) -> Parameters {
        let r = &self.regime;
        Parameters { epsilon: r.epsilon, a: r.a, b: r.b, d: r.d, e: r.e, alpha: r.alpha_degrees.to_radians(), m: r.m }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds { theta_lo: self.regime.theta_lo, theta_hi: self.regime.theta_hi }
    }

    /// Validated scales and an optional warning.
    pub fn scales(&self) -> Result<(DerivedScales, Option<String>)> {
        let p = self.parameters();
        if self.regime.relaxed {
            validate_relaxed(&p)
        } else {
            validate(&p).map(|s| (s, None))
        }
    }

    pub fn recipe(&self) -> ForcingRecipe {
        let f = &self.forcing;
        let env = |width: f64, center: f64| match f.envelope {
            EnvelopeKind::Gaussian => Envelope::Gaussian { width, center },
            EnvelopeKind::Exponential => Envelope::Exponential { width, center },
        };
        ForcingRecipe {
            amplitude: f.amplitude,
            x_envelope: env(f.x_width, f.x_center),
            y_envelope: env(f.y_width, f.y_center),
            y_wavenumber: f.y_wavenumber,
            gamma: f.gamma,
        }
    }

    /// Grid, checked for a dealiasing margin: the truncation radius must stay
    /// inside 2/3 of the resolved band.
    pub fn grid(&self, sc: &DerivedScales) -> Result<ModeGrid> {
        let g = &self.grid;
        if g.nx < 4 || g.ny < 4 || g.nx % 2 == 1 || g.ny % 2 == 1 || !(g.lx > 0.0 && g.ly > 0.0) {
            return Err(Error::Config("grid needs even nx, ny ≥ 4 and positive lengths".into()));
        }
        let grid = ModeGrid::new(g.lx, g.ly, g.nx, g.ny);
        let r = sc.epsilon.powf(-self.solve.kappa);
        if r > grid.dealias_radius() {
            return Err(Error::Config(format!(
                "truncation radius {r:.4} exceeds the dealiasing radius {:.4}",
                grid.dealias_radius()
            )));
        }
        Ok(grid)
    }

    pub fn ingest(&self) -> IngestConfig {
        IngestConfig { kappa: self.solve.kappa, tail_exponent: self.solve.tail_exponent, h4_q: self.solve.h4_q }
    }

    pub fn cascade(&self, order: usize) -> CascadeConfig {
        CascadeConfig {
            order,
            regularity: self.solve.regularity,
            kappa: self.solve.commutator,
            thresholds: self.thresholds(),
            budget_exponent: self.solve.budget_exponent,
        }
    }
}

/// ψ on a regular (x₁, x₂) grid at fixed x₃. `psi[i*x2.len() + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    pub x3: f64,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub psi: Vec<f64>,
}

impl FieldSlice {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.psi[i * self.x2.len() + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.psi.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn write(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# x3={} nx={} ny={}", self.x3, self.x1.len(), self.x2.len());
        for (i, x1) in self.x1.iter().enumerate() {
            for (j, x2) in self.x2.iter().enumerate() {
                let _ = writeln!(s, "{x1:.10e} {x2:.10e} {:.16e}", self.at(i, j));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<FieldSlice> {
        let bad = |m: &str| Error::Io(format!("slice file: {m}"));
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| bad("empty"))?;
        let kv: HashMap<&str, &str> =
            head.trim_start_matches('#').split_whitespace().filter_map(|t| t.split_once('=')).collect();
        let num = |k: &str| kv.get(k).ok_or_else(|| bad(&format!("missing {k}")));
        let x3: f64 = num("x3")?.parse().map_err(|_| bad("x3"))?;
        let nx: usize = num("nx")?.parse().map_err(|_| bad("nx"))?;
        let ny: usize = num("ny")?.parse().map_err(|_| bad("ny"))?;
        let mut x1 = Vec::with_capacity(nx);
        let mut x2 = Vec::with_capacity(ny);
        let mut psi = Vec::with_capacity(nx * ny);
        for (n, l) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().map_err(|_| bad(l))).collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(bad(l));
            }
            if n % ny == 0 {
                x1.push(v[0]);
            }
            if n < ny {
                x2.push(v[1]);
            }
            psi.push(v[2]);
        }
        if psi.len() != nx * ny {
            return Err(bad("row count does not match header"));
        }
        Ok(FieldSlice { x3, x1, x2, psi })
    }
}

/// Sample ψ = Re Σ_{k≤K} ε^k p^k at fixed x₃, on x₁ cells of width
/// span/nx₁ starting at the coast and the full periodic x₂ range.
pub fn evaluate_slice(c: &Cascade, order: usize, x3: f64, span: f64, nx1: usize) -> FieldSlice {
    let (s, co) = (c.sc.s, c.sc.c);
    let g = c.grid;
    // coast: z = −s x₁ + c x₃ = 0; the fluid lies on the side where z grows
    let coast = co * x3 / s;
    let dir = if s < 0.0 { 1.0 } else { -1.0 };
    let h = span / nx1 as f64;
    let x1: Vec<f64> = (0..nx1).map(|i| coast + dir * (i as f64 + 0.5) * h).collect();
    let x2: Vec<f64> = (0..g.ny).map(|m| -g.ly / 2.0 + m as f64 * g.ly / g.ny as f64).collect();
    let eps = c.sc.epsilon;
    let modes: Vec<(&ModeSummary, f64, usize)> = c
        .modes
        .iter()
        .map(|m| {
            let (_, j) = g.ij(m.index);
            (m, m.xi.0, j)
        })
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(g.ny);
    let cols: Vec<Vec<f64>> = x1
        .par_iter()
        .map(|&x1v| {
            let z = -s * x1v + co * x3;
            let x = co * x1v + s * x3;
            let mut a = vec![C64::new(0.0, 0.0); g.ny];
            for (m, xi_x, j) in &modes {
                let mut v = C64::new(0.0, 0.0);
                for (k, p) in m.pressure.iter().take(order + 1).enumerate() {
                    v += p.eval(z) * eps.powi(k as i32);
                }
                a[*j] += v * C64::from_polar(1.0, xi_x * x);
            }
            // shift the y origin to −L_y/2
            for (j, v) in a.iter_mut().enumerate() {
                if ModeGrid::signed(j, g.ny) % 2 != 0 {
                    *v = -*v;
                }
            }
            fft.process(&mut a);
            a.iter().map(|v| v.re / (g.lx * g.ly)).collect()
        })
        .collect();
    FieldSlice { x3, x1, x2, psi: cols.concat() }
}

/// Open zero-level polylines by marching squares, linked across cells.
pub fn zero_isolines(sl: &FieldSlice) -> Vec<Vec<(f64, f64)>> {
    let (n1, n2) = (sl.x1.len(), sl.x2.len());
    if n1 < 2 || n2 < 2 {
        return vec![];
    }
    // edge key: (horizontal?, i, j); horizontal edges join (i,j)-(i+1,j)
    type Key = (bool, usize, usize);
    let pos = |v: f64| v > 0.0;
    let cross = |k: Key| -> Option<(f64, f64)> {
        let (a, b, pa, pb) = if k.0 {
            (sl.at(k.1, k.2), sl.at(k.1 + 1, k.2), (sl.x1[k.1], sl.x2[k.2]), (sl.x1[k.1 + 1], sl.x2[k.2]))
        } else {
            (sl.at(k.1, k.2), sl.at(k.1, k.2 + 1), (sl.x1[k.1], sl.x2[k.2]), (sl.x1[k.1], sl.x2[k.2 + 1]))
        };
        if pos(a) == pos(b) {
            return None;
        }
        let t = a / (a - b);
        Some((pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1)))
    };
    let mut adj: BTreeMap<Key, Vec<Key>> = BTreeMap::new();
    let mut link = |a: Key, b: Key| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for i in 0..n1 - 1 {
        for j in 0..n2 - 1 {
            // edges counter-clockwise: bottom, right, top, left
            let e = [(true, i, j), (false, i + 1, j), (true, i, j + 1), (false, i, j)];
            let hit: Vec<Key> = e.iter().copied().filter(|&k| cross(k).is_some()).collect();
            match hit.len() {
                2 => link(hit[0], hit[1]),
                4 => {
                    let centre = sl.at(i, j) + sl.at(i + 1, j) + sl.at(i + 1, j + 1) + sl.at(i, j + 1);
                    if pos(centre) == pos(sl.at(i, j)) {
                        link(e[0], e[1]);
                        link(e[2], e[3]);
                    } else {
                        link(e[0], e[3]);
                        link(e[1], e[2]);
                    }
                }
                _ => {}
            }
        }
    }
    let mut seen: BTreeMap<Key, bool> = BTreeMap::new();
    let mut out = vec![];
    let walk = |start: Key, seen: &mut BTreeMap<Key, bool>| -> Vec<Key> {
        let mut path = vec![start];
        seen.insert(start, true);
        let mut cur = start;
        while let Some(&next) = adj[&cur].iter().find(|k| !seen.contains_key(*k)) {
            seen.insert(next, true);
            path.push(next);
            cur = next;
        }
        if path.len() > 2 && adj[&cur].contains(&start) {
            path.push(start);
        }
        path
    };
    // open chains first (endpoints have one neighbour), then loops
    let ends: Vec<Key> = adj.iter().filter(|(_, v)| v.len() == 1).map(|(k, _)| *k).collect();
    for k in ends.into_iter().chain(adj.keys().copied().collect::<Vec<_>>()) {
        if !seen.contains_key(&k) {
            let p = walk(k, &mut seen);
            out.push(p.into_iter().filter_map(cross).collect::<Vec<_>>());
        }
    }
    out
}

pub fn polyline_length(l: &[(f64, f64)]) -> f64 {
    l.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
}

/// Longest zero isoline.
pub fn main_isoline(lines: &[Vec<(f64, f64)>]) -> Option<&Vec<(f64, f64)>> {
    lines.iter().max_by(|a, b| polyline_length(a).partial_cmp(&polyline_length(b)).unwrap())
}

/// Point of a line closest to the coast (smallest distance in x₁ from the
/// first slice column).
pub fn coastal_point(line: &[(f64, f64)], sl: &FieldSlice) -> Option<(f64, f64)> {
    let x0 = *sl.x1.first()?;
    line.iter().copied().min_by(|a, b| (a.0 - x0).abs().partial_cmp(&(b.0 - x0).abs()).unwrap())
}

/// Connected regions with ψ > f·max|ψ| and with ψ < −f·max|ψ|.
pub fn count_gyres(sl: &FieldSlice, frac: f64) -> (usize, usize) {
    let (n1, n2) = (sl.x1.len(), sl.x2.len());
    let lim = frac * sl.max_abs();
    if lim == 0.0 {
        return (0, 0);
    }
    let mut label = vec![0u8; n1 * n2];
    let mut counts = (0, 0);
    for start in 0..n1 * n2 {
        let v = sl.psi[start];
        let sign = if v > lim { 1 } else if v < -lim { 2 } else { 0 };
        if sign == 0 || label[start] != 0 {
            continue;
        }
        if sign == 1 {
            counts.0 += 1;
        } else {
            counts.1 += 1;
        }
        let mut stack = vec![start];
        label[start] = sign;
        while let Some(k) = stack.pop() {
            let (i, j) = (k / n2, k % n2);
            let mut nb = vec![];
            if i > 0 {
                nb.push(k - n2);
            }
            if i + 1 < n1 {
                nb.push(k + n2);
            }
            // periodic in x₂
            nb.push(i * n2 + (j + 1) % n2);
            nb.push(i * n2 + (j + n2 - 1) % n2);
            for q in nb {
                let w = sl.psi[q];
                let sq = if w > lim { 1 } else if w < -lim { 2 } else { 0 };
                if sq == sign && label[q] == 0 {
                    label[q] = sign;
                    stack.push(q);
                }
            }
        }
    }
    counts
}

/// Random western draws, alternating between the two frequency regimes:
/// fraction with the 2/2 sign split and the worst relative quartic residual.
#[derive(Debug, Clone, Serialize)]
pub struct RootSurvey {
    pub draws: usize,
    pub split_ok: usize,
    /// Draws where a root's real part is below its certified error bound, so
    /// the kernel builder would refuse the mode.
    pub uncertified: usize,
    pub worst_residual: f64,
    pub by_regime: BTreeMap<String, usize>,
    pub failures: Vec<String>,
}

/// One valid western parameter set whose frequency falls in `target`.
fn draw_parameters(rng: &mut StdRng, target: FrequencyRegime, th: &Thresholds) -> Option<(Parameters, DerivedScales)> {
    let (eps, a, d) = match target {
        // the mid band only opens up for large β/ν; ν is kept above ~1e-13 so
        // the damping part of the near-imaginary roots stays resolvable
        FrequencyRegime::MidFreq => {
            let a = rng.random_range(0.8..0.98);
            (10f64.powf(rng.random_range(-5.5..-3.5)), a, rng.random_range(1.2..2.5))
        }
        _ => {
            let a = rng.random_range(0.2..0.9);
            (10f64.powf(rng.random_range(-4.0..-1.5)), a, rng.random_range(0.0..1.5 * a))
        }
    };
    let e = d + rng.random_range(0.0..2.0);
    let alpha = -rng.random_range(10.0f64..80.0).to_radians();
    let base = derive_unchecked(&Parameters::new(eps, a, 0.0, d, e, alpha));
    let lo = th.theta_lo * base.low_threshold();
    let hi = th.theta_hi * base.high_threshold();
    let log_w = match target {
        FrequencyRegime::MidFreq if hi > 1.01 * lo => rng.random_range(lo.ln()..hi.ln()),
        FrequencyRegime::MidFreq => return None,
        _ => lo.ln() - rng.random_range(0.0..6.0),
    };
    let p = Parameters::new(eps, a, -log_w / eps.ln(), d, e, alpha);
    let (sc, _) = validate_relaxed(&p).ok()?;
    (classify_frequency(&sc, th) == target).then_some((p, sc))
}

pub fn root_survey(seed: u64, draws: usize) -> RootSurvey {
    let mut rng = StdRng::seed_from_u64(seed);
    let th = Thresholds::default();
    let mut out = RootSurvey {
        draws: 0,
        split_ok: 0,
        uncertified: 0,
        worst_residual: 0.0,
        by_regime: BTreeMap::new(),
        failures: vec![],
    };
    while out.draws < draws {
        let target = if out.draws % 2 == 0 { FrequencyRegime::LowFreq } else { FrequencyRegime::MidFreq };
        let Some((p, sc)) = draw_parameters(&mut rng, target, &th) else { continue };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let xi = (rng.random_range(-5.0..5.0), sign * rng.random_range(0.05..5.0));
        out.draws += 1;
        *out.by_regime.entry(format!("{target:?}")).or_insert(0) += 1;
        let q = quartic_coeffs(C64::new(xi.0, 0.0), C64::new(xi.1, 0.0), &sc);
        let roots = all_roots(xi, &sc);
        let res = roots.iter().map(|&z| poly::rel_residual(&q, z)).fold(0.0, f64::max);
        out.worst_residual = out.worst_residual.max(res);
        let n_plus = roots.iter().filter(|z| z.re > 0.0).count();
        let n_minus = roots.iter().filter(|z| z.re < 0.0).count();
        if roots.len() == 4 && n_plus == 2 && n_minus == 2 && res <= 1e-9 {
            out.split_ok += 1;
        } else {
            out.failures.push(format!("{n_plus}/{n_minus} split, residual {res:.3e} at {p:?} xi {xi:?}"));
        }
        if let Err(Error::PureImaginaryRoot(_)) = quartic_roots_with(xi, &sc, &th) {
            out.uncertified += 1;
        }
    }
    out
}

/// Files and gate results of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub files: Vec<String>,
    pub gates: BTreeMap<String, bool>,
    pub manifest: serde_json::Value,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.gates.values().all(|&v| v)
    }
}

fn write_file(dir: &Path, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    files.push(name.to_string());
    Ok(())
}

/// Every threshold and default a run depends on.
pub fn thresholds_used(cfg: &RunConfig) -> serde_json::Value {
    json!({
        "theta_lo": cfg.regime.theta_lo,
        "theta_hi": cfg.regime.theta_hi,
        "root_separation_flag": SEPARATION_FLAG,
        "kernel_jump_residual": 1e-8,
        "munk_trace_det_rel_min": 1e-12,
        "ekman_root_match": 0.3,
        "ekman_nullspace_det_rel_max": 1e-3,
        "ekman_epsilon_omega_max": 0.1,
        "trace_gate": TRACE_GATE,
        "divergence_gate": DIVERGENCE_GATE,
        "direct_check_gate": DIRECT_CHECK_GATE,
        "min_solved_fraction": MIN_SOLVED_FRACTION,
        "truncation_kappa": cfg.solve.kappa,
        "tail_exponent": cfg.solve.tail_exponent,
        "h4_q": cfg.solve.h4_q,
        "regularity": cfg.solve.regularity,
        "derivatives_per_order": 5,
        "commutator_coefficient": cfg.solve.commutator,
        "residual_budget_exponent": cfg.solve.budget_exponent,
        "gyre_fraction": GYRE_FRACTION,
    })
}

fn manifest(cfg: &RunConfig, command: &str, sc: &DerivedScales, warning: &Option<String>) -> serde_json::Value {
    let th = cfg.thresholds();
    json!({
        "tool": "tiltgyre",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "label": cfg.output.label,
        "config": cfg,
        "derived": sc,
        "frequency_regime": format!("{:?}", classify_frequency(sc, &th)),
        "low_threshold": sc.low_threshold(),
        "high_threshold": sc.high_threshold(),
        "warnings": warning.iter().collect::<Vec<_>>(),
        "thresholds": thresholds_used(cfg),
    })
}

fn finish(dir: &Path, mut m: serde_json::Value, files: Vec<String>, gates: BTreeMap<String, bool>) -> Result<RunOutcome> {
    let mut files = files;
    files.push("manifest.json".into());
    m["files"] = json!(files);
    m["gates"] = json!(gates);
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Io(e.to_string()))?;
    let mut dummy = vec![];
    write_file(dir, "manifest.json", &(text + "\n"), &mut dummy)?;
    Ok(RunOutcome { files, gates, manifest: m })
}

fn prepare(cfg: &RunConfig) -> Result<(DerivedScales, Option<String>, ModeGrid, IngestReport)> {
    let (sc, warn) = cfg.scales()?;
    let grid = cfg.grid(&sc)?;
    let (_, rep) = ingest_forcing(&cfg.recipe(), &grid, &sc, &cfg.ingest())?;
    Ok((sc, warn, grid, rep))
}

/// Modes inside the truncation radius, in grid order.
fn retained(cfg: &RunConfig, grid: &ModeGrid, sc: &DerivedScales) -> Vec<usize> {
    crate::cascade::select_modes(&cfg.recipe(), grid, sc, &cfg.ingest())
}

/// `check`: hypotheses, ingestion and a seeded root survey.
pub fn run_check(cfg: &RunConfig, out: &Path, seed: u64) -> Result<RunOutcome> {
    let (sc, warn, _, rep) = prepare(cfg)?;
    let survey = root_survey(seed, 1000);
    let mut m = manifest(cfg, "check", &sc, &warn);
    m["ingest"] = json!(rep);
    m["seed"] = json!(seed);
    m["root_survey"] = json!(survey);
    let mut gates = BTreeMap::new();
    gates.insert("root_split".into(), survey.split_ok == survey.draws);
    finish(out, m, vec![], gates)
}

/// `roots`: ξ, four roots, regime and separation per mode.
pub fn run_roots(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let (sc, warn, grid, _) = prepare(cfg)?;
    let th = cfg.thresholds();
    let modes = retained(cfg, &grid, &sc);
    let rows: Vec<String> = modes
        .par_iter()
        .map(|&k| {
            let xi = grid.xi(k);
            match quartic_roots_with(xi, &sc, &th) {
                Ok(r) => {
                    let mut s = format!("{:.10e} {:.10e}", xi.0, xi.1);
                    for z in r.all() {
                        let _ = write!(s, " {:.12e} {:.12e}", z.re, z.im);
                    }
                    let _ = write!(s, " {:?} {:.4e} {:.3e}", r.regime, r.separation, r.max_residual);
                    s
                }
                Err(e) => format!("{:.10e} {:.10e} error {}", xi.0, xi.1, e.qualified()),
            }
        })
        .collect();
    let mut text = String::from(
        "# xi_x xi_y re_mu1+ im_mu1+ re_mu2+ im_mu2+ re_mu1- im_mu1- re_mu2- im_mu2- regime separation residual\n",
    );
    for r in &rows {
        text.push_str(r);
        text.push('\n');
    }
    let mut files = vec![];
    write_file(out, "roots.txt", &text, &mut files)?;
    let errors = rows.iter().filter(|r| r.contains(" error ")).count();
    let mut m = manifest(cfg, "roots", &sc, &warn);
    m["modes"] = json!(rows.len());
    m["mode_errors"] = json!(errors);
    finish(out, m, files, BTreeMap::from([("roots_all_modes".to_string(), errors == 0)]))
}

/// `green`: kernel roots and coefficients per mode.
pub fn run_green(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let (sc, warn, grid, _) = prepare(cfg)?;
    let th = cfg.thresholds();
    let modes = retained(cfg, &grid, &sc);
    let rows: Vec<String> = modes
        .par_iter()
        .map(|&k| {
            let xi = grid.xi(k);
            let res = quartic_roots_with(xi, &sc, &th).and_then(|r| build_kernel(&r, &sc));
            match res {
                Ok(g) => {
                    let mut s = format!("{:.10e} {:.10e}", xi.0, xi.1);
                    for (mu, c) in g.mu_plus.iter().zip(&g.c_plus).chain(g.mu_minus.iter().zip(&g.c_minus)) {
                        let _ = write!(s, " {:.12e} {:.12e} {:.12e} {:.12e}", mu.re, mu.im, c.re, c.im);
                    }
                    s
                }
                Err(e) => format!("{:.10e} {:.10e} error {}", xi.0, xi.1, e.qualified()),
            }
        })
        .collect();
    let mut text = String::from("# xi_x xi_y then (re mu, im mu, re C, im C) for mu1+ mu2+ mu1- mu2-\n");
    for r in &rows {
        text.push_str(r);
        text.push('\n');
    }
    let mut files = vec![];
    write_file(out, "green.txt", &text, &mut files)?;
    let errors = rows.iter().filter(|r| r.contains(" error ")).count();
    let mut m = manifest(cfg, "green", &sc, &warn);
    m["modes"] = json!(rows.len());
    m["mode_errors"] = json!(errors);
    finish(out, m, files, BTreeMap::from([("kernel_all_modes".to_string(), errors == 0)]))
}

/// `ekman`: λ₁, λ₂, discard reason, eigenvector and hydrostatic defect.
pub fn run_ekman(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let (sc, warn, grid, _) = prepare(cfg)?;
    let th = cfg.thresholds();
    let modes = retained(cfg, &grid, &sc);
    let rows: Vec<String> = modes
        .par_iter()
        .map(|&k| {
            let xi = grid.xi(k);
            let row = || -> Result<String> {
                let lr = layer_roots(xi, sc.omega, &sc)?;
                let roots = quartic_roots_with(xi, &sc, &th)?;
                let why = discard_rule(lr.lambda2, &roots, roots.regime)?;
                let m = eigenvector_lambda1(xi, lr.lambda1, &sc)?;
                let mut s = format!("{:.10e} {:.10e}", xi.0, xi.1);
                for z in [lr.lambda1, lr.lambda2] {
                    let _ = write!(s, " {:.12e} {:.12e}", z.re, z.im);
                }
                let _ = write!(s, " {why:?}");
                for z in m.u {
                    let _ = write!(s, " {:.12e} {:.12e}", z.re, z.im);
                }
                let _ = write!(s, " {:.4e}", hydrostatic_defect(&m, xi, &sc));
                Ok(s)
            };
            row().unwrap_or_else(|e| format!("{:.10e} {:.10e} error {}", xi.0, xi.1, e.qualified()))
        })
        .collect();
    let mut text = String::from(
        "# xi_x xi_y re_l1 im_l1 re_l2 im_l2 discard (re,im) of Ux Uy Uz P R hydrostatic_defect\n",
    );
    for r in &rows {
        text.push_str(r);
        text.push('\n');
    }
    let mut files = vec![];
    write_file(out, "ekman.txt", &text, &mut files)?;
    let errors = rows.iter().filter(|r| r.contains(" error ")).count();
    let mut m = manifest(cfg, "ekman", &sc, &warn);
    m["modes"] = json!(rows.len());
    m["mode_errors"] = json!(errors);
    finish(out, m, files, BTreeMap::new())
}

fn amplitude_table(c: &Cascade, order: usize, zs: &[f64]) -> String {
    let mut s = String::from("# xi_x xi_y k term re_rate im_rate then (re, im) polynomial coefficients of p^k\n");
    if !zs.is_empty() {
        let _ = writeln!(s, "# z_samples {}", zs.iter().map(|z| z.to_string()).collect::<Vec<_>>().join(" "));
    }
    for m in &c.modes {
        for (k, p) in m.pressure.iter().take(order + 1).enumerate() {
            for (ti, t) in p.terms.iter().enumerate() {
                let _ = write!(s, "{:.10e} {:.10e} {k} {ti} {:.16e} {:.16e}", m.xi.0, m.xi.1, t.rate.re, t.rate.im);
                for v in &t.poly {
                    let _ = write!(s, " {:.16e} {:.16e}", v.re, v.im);
                }
                s.push('\n');
            }
            if !zs.is_empty() {
                let _ = write!(s, "# values {:.10e} {:.10e} {k}", m.xi.0, m.xi.1);
                for &z in zs {
                    let v = p.eval(z);
                    let _ = write!(s, " {:.16e} {:.16e}", v.re, v.im);
                }
                s.push('\n');
            }
        }
    }
    s
}

fn coefficient_table(c: &Cascade, order: usize) -> String {
    let mut s = String::from("# xi_x xi_y k re_c1 im_c1 re_c2 im_c2 re_cE im_cE\n");
    for m in &c.modes {
        for k in 0..=order.min(m.munk_coeffs.len() - 1) {
            let [a, b] = m.munk_coeffs[k];
            let e = m.ekman_coeffs[k];
            let _ = writeln!(
                s,
                "{:.10e} {:.10e} {k} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                m.xi.0, m.xi.1, a.re, a.im, b.re, b.im, e.re, e.im
            );
        }
    }
    s
}

fn slice_name(x3: f64) -> String {
    format!("{SLICE_FILE_PREFIX}{x3}.txt")
}

fn gates_for(c: &Cascade) -> BTreeMap<String, bool> {
    let r = &c.report;
    let mut g = BTreeMap::new();
    g.insert("no_slip".into(), r.orders.iter().all(|o| o.max_trace_ratio <= TRACE_GATE));
    g.insert("divergence_free".into(), r.orders.iter().all(|o| o.max_div_ratio <= DIVERGENCE_GATE));
    g.insert("direct_check".into(), r.residuals.iter().all(|o| o.max_direct_rel <= DIRECT_CHECK_GATE));
    g.insert("modes_solved".into(), r.modes_solved as f64 >= MIN_SOLVED_FRACTION * r.modes_total as f64);
    g
}

/// Build the expansion to `order` and write slices, tables and the manifest.
pub fn run_solve(cfg: &RunConfig, out: &Path, order: usize, command: &str) -> Result<(RunOutcome, Cascade)> {
    let (sc, warn, grid, rep) = prepare(cfg)?;
    let c = assemble(&cfg.recipe(), &grid, &sc, &cfg.ingest(), &cfg.cascade(order))?;
    let mut files = vec![];
    let want = |f: &str| cfg.output.formats.iter().any(|x| x == f);
    let mut slices = vec![];
    if want("slices") {
        for &x3 in &cfg.solve.x3 {
            let sl = evaluate_slice(&c, order, x3, cfg.solve.x1_span, cfg.solve.nx1);
            write_file(out, &slice_name(x3), &sl.write(), &mut files)?;
            let lines = zero_isolines(&sl);
            let (gp, gn) = count_gyres(&sl, GYRE_FRACTION);
            slices.push(json!({"x3": x3, "max_abs_psi": sl.max_abs(), "zero_isolines": lines.len(),
                               "gyres_positive": gp, "gyres_negative": gn}));
        }
    }
    if want("amplitudes") {
        write_file(out, "amplitudes.txt", &amplitude_table(&c, order, &cfg.solve.z_samples), &mut files)?;
    }
    if want("coefficients") {
        write_file(out, "coefficients.txt", &coefficient_table(&c, order), &mut files)?;
    }
    let mut m = manifest(cfg, command, &sc, &warn);
    m["order"] = json!(order);
    m["ingest"] = json!(rep);
    m["report"] = json!(c.report);
    m["slices"] = json!(slices);
    let gates = gates_for(&c);
    Ok((finish(out, m, files, gates)?, c))
}

/// `cascade --K n`: ledger as JSON plus a plain-text summary.
pub fn run_cascade(cfg: &RunConfig, out: &Path, order: usize) -> Result<RunOutcome> {
    let (o, c) = run_solve(cfg, out, order, "cascade")?;
    let mut files = o.files.clone();
    files.retain(|f| f != "manifest.json");
    let text = serde_json::to_string_pretty(&c.report).map_err(|e| Error::Io(e.to_string()))?;
    write_file(out, "ledger.json", &(text + "\n"), &mut files)?;
    write_file(out, "summary.txt", &summary(&c), &mut files)?;
    finish(out, o.manifest, files, o.gates)
}

pub fn summary(c: &Cascade) -> String {
    let r = &c.report;
    let mut s = String::new();
    let _ = writeln!(s, "epsilon {}  beta {:.4}  eps*beta {:.4e}", r.epsilon, r.beta, r.eps_beta);
    let _ = writeln!(s, "modes {} solved {}  excluded {:?}", r.modes_total, r.modes_solved, r.excluded);
    let _ = writeln!(s, "{:>2} {:>11} {:>9} {:>11} {:>11} {:>10} {:>10} {:>10}", "k", "size", "ratio", "max|c|/b^k", "max|cE|", "trace", "div", "qy");
    for o in &r.orders {
        let _ = writeln!(
            s,
            "{:>2} {:>11.4e} {:>9} {:>11.3e} {:>11.3e} {:>10.2e} {:>10.2e} {:>10}",
            o.k,
            o.size,
            o.size_ratio.map_or("-".into(), |v| format!("{v:.3e}")),
            o.coeff_over_beta_k,
            o.max_ekman_coeff,
            o.max_trace_ratio,
            o.max_div_ratio,
            o.max_qy_defect.map_or("-".into(), |v| format!("{v:.2e}"))
        );
    }
    let _ = writeln!(s, "{:>2} {:>11} {:>11} {:>11} {:>11} {:>9}", "K", "residual", "interior", "munk", "ekman", "budget");
    for q in &r.residuals {
        let _ = writeln!(
            s,
            "{:>2} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>9.1e}",
            q.k, q.energy, q.by_origin[0], q.by_origin[1], q.by_origin[2], q.budget
        );
    }
    for (k, v) in r.residual_ratios.iter().enumerate() {
        let _ = writeln!(s, "residual({})/residual({}) = {:.4e}  ({:.2} eps*beta)", k + 1, k, v, v / r.eps_beta);
    }
    s
}

/// Isolines and counts for one panel of the separation figure.
#[derive(Debug, Clone, Serialize)]
pub struct Panel {
    pub run: String,
    pub isolines: usize,
    pub main_length: f64,
    pub coastal_point: Option<(f64, f64)>,
    pub gyres: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct FigureSummary {
    pub reference: Panel,
    pub sloped: Panel,
    /// sloped coastal x₂ below the reference one
    pub separation_south: Option<bool>,
}

fn load_panel(dir: &Path, x3: f64) -> Result<FieldSlice> {
    let p = dir.join(slice_name(x3));
    let text = fs::read_to_string(&p).map_err(|_| Error::MissingRun(p.display().to_string()))?;
    FieldSlice::parse(&text)
}

fn isoline_text(lines: &[Vec<(f64, f64)>], main: Option<usize>) -> String {
    let mut s = String::from("# line x1 x2 (first line listed is the main isoline)\n");
    let mut order: Vec<usize> = (0..lines.len()).collect();
    if let Some(m) = main {
        order.retain(|&i| i != m);
        order.insert(0, m);
    }
    for (n, &i) in order.iter().enumerate() {
        for (a, b) in &lines[i] {
            let _ = writeln!(s, "{n} {a:.8e} {b:.8e}");
        }
    }
    s
}

/// Two-panel figure data from a near-flat reference run and a sloped run.
pub fn emit_separation_figure(reference: &Path, sloped: &Path, out: &Path, x3: f64) -> Result<FigureSummary> {
    let mut files = vec![];
    let mut panels = vec![];
    for (name, dir) in [("reference", reference), ("sloped", sloped)] {
        let sl = load_panel(dir, x3)?;
        let lines = zero_isolines(&sl);
        let main = main_isoline(&lines);
        let mi = main.and_then(|m| lines.iter().position(|l| std::ptr::eq(l, m)));
        write_file(out, &format!("{name}_psi.txt"), &sl.write(), &mut files)?;
        write_file(out, &format!("{name}_isolines.txt"), &isoline_text(&lines, mi), &mut files)?;
        panels.push(Panel {
            run: dir.display().to_string(),
            isolines: lines.len(),
            main_length: main.map_or(0.0, |m| polyline_length(m)),
            coastal_point: main.and_then(|m| coastal_point(m, &sl)),
            gyres: count_gyres(&sl, GYRE_FRACTION),
        });
    }
    let sloped_p = panels.pop().unwrap();
    let reference_p = panels.pop().unwrap();
    let south = match (reference_p.coastal_point, sloped_p.coastal_point) {
        (Some(a), Some(b)) => Some(b.1 < a.1),
        _ => None,
    };
    let fig = FigureSummary { reference: reference_p, sloped: sloped_p, separation_south: south };
    write_file(out, "plot_separation.py", PLOT_SCRIPT, &mut files)?;
    let text = serde_json::to_string_pretty(&fig).map_err(|e| Error::Io(e.to_string()))?;
    write_file(out, "figure.json", &(text + "\n"), &mut files)?;
    Ok(fig)
}

const PLOT_SCRIPT: &str = r#"# Two-panel plot of the separation figure. Run from this directory.
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(name):
    d = np.loadtxt(f"{name}_psi.txt")
    with open(f"{name}_psi.txt") as f:
        head = dict(t.split("=") for t in f.readline()[1:].split())
    nx, ny = int(head["nx"]), int(head["ny"])
    x1 = d[:, 0].reshape(nx, ny)
    x2 = d[:, 1].reshape(nx, ny)
    psi = d[:, 2].reshape(nx, ny)
    return x1, x2, psi


fig, axes = plt.subplots(1, 2, figsize=(10, 5), sharey=True)
for ax, name in zip(axes, ["reference", "sloped"]):
    x1, x2, psi = load(name)
    m = np.abs(psi).max() or 1.0
    ax.contourf(x1, x2, psi, levels=np.linspace(-m, m, 21), cmap="RdBu_r")
    iso = np.loadtxt(f"{name}_isolines.txt", ndmin=2)
    if iso.size:
        main = iso[iso[:, 0] == 0]
        ax.plot(main[:, 1], main[:, 2], "k-", lw=1.5)
    ax.set_title(name)
    ax.set_xlabel("x1")
axes[0].set_ylabel("x2")
fig.tight_layout()
fig.savefig("separation.png", dpi=150)
"#;
