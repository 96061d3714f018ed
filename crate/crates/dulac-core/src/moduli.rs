//! Horn-map sequences as truncated germ series, the `h ↔ g` exponential
//! relations, bound and symmetry checks, and equivalence normalization.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series;
use crate::C64;

/// Default truncation degree of horn maps.
pub const DEFAULT_DEGREE: usize = 8;

fn two_pi_i() -> C64 {
    C64::new(0.0, 2.0 * PI)
}

/// `Σ_{k=1}^{D} c_k t^k` valid on `|t| ≤ sigma`.
///
/// `coeffs[0]` is the linear coefficient. Cocycle series `g` use the same
/// container; for them `coeffs[0]` may vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GermSeries {
    pub coeffs: Vec<C64>,
    pub sigma: f64,
}

impl GermSeries {
    pub fn new(coeffs: Vec<C64>, sigma: f64) -> Self {
        Self { coeffs, sigma }
    }

    pub fn identity(degree: usize, sigma: f64) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); degree.max(1)];
        coeffs[0] = C64::new(1.0, 0.0);
        Self { coeffs, sigma }
    }

    pub fn zero(degree: usize, sigma: f64) -> Self {
        Self {
            coeffs: vec![C64::new(0.0, 0.0); degree.max(1)],
            sigma,
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// Linear coefficient `c₁`.
    pub fn c1(&self) -> C64 {
        self.coeffs[0]
    }

    /// Dense form with the zeroth coefficient prepended.
    pub fn dense(&self) -> Vec<C64> {
        let mut d = Vec::with_capacity(self.coeffs.len() + 1);
        d.push(C64::new(0.0, 0.0));
        d.extend_from_slice(&self.coeffs);
        d
    }

    fn from_dense(d: &[C64], degree: usize, sigma: f64) -> Self {
        let mut coeffs: Vec<C64> = d.iter().skip(1).take(degree).copied().collect();
        coeffs.resize(degree, C64::new(0.0, 0.0));
        Self { coeffs, sigma }
    }

    pub fn eval(&self, t: C64) -> C64 {
        series::eval(&self.coeffs, t) * t
    }

    pub fn eval_derivative(&self, t: C64) -> C64 {
        series::eval_derivative(&self.dense(), t)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// True when all nonlinear coefficients vanish.
    pub fn is_linear(&self) -> bool {
        self.coeffs.iter().skip(1).all(|c| c.norm() == 0.0)
    }

    /// Compositional inverse, same degree.
    pub fn inverse(&self) -> Self {
        let d = series::revert(&self.dense(), self.degree());
        Self::from_dense(&d, self.degree(), self.sigma)
    }

    /// Coefficients with conjugated values, i.e. the series of `t ↦ conj(h(conj t))`.
    pub fn reflected(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
            sigma: self.sigma,
        }
    }
}

/// Which intersection petal a horn map belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Zero,
    Infty,
}

/// `g` with `h(t) = t·e^{2πi g(t)}` (infty) or `h^{-1}(t) = t·e^{2πi g(t)}` (zero), degree `D − 1`.
pub fn g_from_h(h: &GermSeries, which: Which) -> Result<GermSeries> {
    let c1 = h.c1();
    if (c1 - 1.0).norm() > 1e-12 {
        return Err(Error::NonTangent { c1 });
    }
    let d = h.degree();
    let base = match which {
        Which::Infty => h.clone(),
        Which::Zero => h.inverse(),
    };
    // h(t)/t − 1 as a series vanishing at 0
    let mut u = vec![C64::new(0.0, 0.0)];
    u.extend_from_slice(&base.coeffs[1..]);
    let l = series::log1p(&u, d - 1);
    let g: Vec<C64> = l.iter().map(|c| c / two_pi_i()).collect();
    Ok(GermSeries::from_dense(&g, (d - 1).max(1), h.sigma))
}

/// Inverse of [`g_from_h`], degree `deg g + 1`.
pub fn h_from_g(g: &GermSeries, which: Which) -> GermSeries {
    let d = g.degree() + 1;
    let s: Vec<C64> = g.dense().iter().map(|c| c * two_pi_i()).collect();
    let e = series::exp(&s, d - 1);
    // t·e^{2πi g(t)}
    let mut dense = vec![C64::new(0.0, 0.0)];
    dense.extend(e);
    let h = GermSeries::from_dense(&dense, d, g.sigma);
    match which {
        Which::Infty => h,
        Which::Zero => h.inverse(),
    }
}

/// The horn-map pair at one index.
#[derive(Debug, Clone, PartialEq)]
pub struct HornPair {
    pub h0: GermSeries,
    pub hinf: GermSeries,
}

/// Horn maps for `j ∈ [−J, J]`; missing indices are the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct HornMapSequence {
    pub window: i32,
    pub degree: usize,
    pub entries: BTreeMap<i32, HornPair>,
}

/// Defaults for entries absent from a moduli file.
const DEFAULT_SIGMA: f64 = 0.5;

impl HornMapSequence {
    pub fn identity(window: i32, degree: usize) -> Self {
        Self {
            window,
            degree,
            entries: BTreeMap::new(),
        }
    }

    pub fn pair(&self, j: i32) -> HornPair {
        self.entries.get(&j).cloned().unwrap_or_else(|| HornPair {
            h0: GermSeries::identity(self.degree, DEFAULT_SIGMA),
            hinf: GermSeries::identity(self.degree, DEFAULT_SIGMA),
        })
    }

    pub fn get(&self, j: i32, which: Which) -> GermSeries {
        let p = self.pair(j);
        match which {
            Which::Zero => p.h0,
            Which::Infty => p.hinf,
        }
    }

    /// Sets one horn map given by its cocycle series.
    pub fn set_from_g(&mut self, j: i32, which: Which, g: &GermSeries) {
        let h = h_from_g(g, which);
        let mut p = self.pair(j);
        match which {
            Which::Zero => p.h0 = h,
            Which::Infty => p.hinf = h,
        }
        self.entries.insert(j, p);
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i32> {
        -self.window..=self.window
    }

    /// Tangency, positivity of radii and window bounds.
    pub fn validate(&self) -> Result<()> {
        for (&j, p) in &self.entries {
            if j.abs() > self.window {
                return Err(Error::Invalid(format!("entry j={j} outside window {}", self.window)));
            }
            for h in [&p.h0, &p.hinf] {
                if (h.c1() - 1.0).norm() > 1e-12 {
                    return Err(Error::NonTangent { c1: h.c1() });
                }
                if !(h.sigma > 0.0) || h.coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Invalid(format!("entry j={j} has bad radius or coefficients")));
                }
            }
        }
        Ok(())
    }

    /// Cocycle series `(g₀ʲ, g∞ʲ)` for every index whose pair is not the identity.
    pub fn cocycle(&self) -> Result<BTreeMap<i32, (GermSeries, GermSeries)>> {
        let mut out = BTreeMap::new();
        for (&j, p) in &self.entries {
            let g0 = g_from_h(&p.h0, Which::Zero)?;
            let ginf = g_from_h(&p.hinf, Which::Infty)?;
            if !(g0.is_zero() && ginf.is_zero()) {
                out.insert(j, (g0, ginf));
            }
        }
        Ok(out)
    }

    /// Checks `σ_j ≥ K₁·exp(−K·e^{C·s(j)})` with `s(j) = √|j|` (quadratic) or `|j|` (linear).
    pub fn check_radii(&self, linear: bool, k1: f64, k: f64, c: f64) -> bool {
        self.entries.iter().all(|(&j, p)| {
            let s = if linear {
                f64::from(j.abs())
            } else {
                f64::from(j.abs()).sqrt()
            };
            let bound = k1 * (-k * (c * s).exp()).exp();
            p.h0.sigma >= bound && p.hinf.sigma >= bound
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModuliFile {
    #[serde(rename = "J")]
    window: i32,
    #[serde(default)]
    degree: Option<usize>,
    entries: Vec<ModuliEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModuliEntry {
    j: i32,
    h0: Vec<[f64; 2]>,
    hinf: Vec<[f64; 2]>,
    sigma: f64,
}

fn tail_to_series(tail: &[[f64; 2]], degree: usize, sigma: f64) -> GermSeries {
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    coeffs.extend(tail.iter().map(|[re, im]| C64::new(*re, *im)));
    coeffs.resize(degree.max(coeffs.len()), C64::new(0.0, 0.0));
    GermSeries { coeffs, sigma }
}

impl HornMapSequence {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModuliFile =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("moduli JSON: {e}")))?;
        let longest = file
            .entries
            .iter()
            .map(|e| e.h0.len().max(e.hinf.len()) + 1)
            .max()
            .unwrap_or(0);
        let degree = file.degree.unwrap_or(DEFAULT_DEGREE).max(longest).max(2);
        let mut seq = Self::identity(file.window, degree);
        for e in file.entries {
            let pair = HornPair {
                h0: tail_to_series(&e.h0, degree, e.sigma),
                hinf: tail_to_series(&e.hinf, degree, e.sigma),
            };
            seq.entries.insert(e.j, pair);
        }
        seq.validate()?;
        Ok(seq)
    }

    pub fn to_json(&self) -> String {
        let tail = |h: &GermSeries| h.coeffs[1..].iter().map(|c| [c.re, c.im]).collect();
        let file = ModuliFile {
            window: self.window,
            degree: Some(self.degree),
            entries: self
                .entries
                .iter()
                .map(|(&j, p)| ModuliEntry {
                    j,
                    h0: tail(&p.h0),
                    hinf: tail(&p.hinf),
                    sigma: p.h0.sigma.min(p.hinf.sigma),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("moduli serialize")
    }
}

/// Result of [`check_symmetry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub max_deviation: f64,
    pub symmetric: bool,
    /// Indices whose mirror `1 − j` lies outside the window.
    pub partial_window: Vec<i32>,
}

/// Compares `(h₀^{1−j})^{-1}` with the reflection of `h∞ʲ` coefficientwise.
pub fn check_symmetry(seq: &HornMapSequence, tol: f64) -> SymmetryReport {
    let mut max_deviation = 0.0f64;
    let mut partial = Vec::new();
    for j in seq.indices() {
        let mirror = 1 - j;
        if mirror.abs() > seq.window {
            if !seq.pair(j).hinf.is_linear() {
                partial.push(j);
            }
            continue;
        }
        let lhs = seq.get(mirror, Which::Zero).inverse();
        let rhs = seq.get(j, Which::Infty).reflected();
        let n = lhs.degree().max(rhs.degree());
        for k in 0..n {
            let a = lhs.coeffs.get(k).copied().unwrap_or_default();
            let b = rhs.coeffs.get(k).copied().unwrap_or_default();
            max_deviation = max_deviation.max((a - b).norm());
        }
    }
    SymmetryReport {
        max_deviation,
        symmetric: max_deviation <= tol && partial.is_empty(),
        partial_window: partial,
    }
}

/// Suprema `(d₁, d₂)` of `|h(t) − c₁t|/|t|²` and `|h'(t) − c₁|/|t|` over `|t| ≤ σ`.
///
/// Both quotients are analytic in the disc, so sampling the boundary circle suffices.
pub fn uniform_bounds(h: &GermSeries, samples: usize) -> (f64, f64) {
    let c1 = h.c1();
    let mut d1 = 0.0f64;
    let mut d2 = 0.0f64;
    for q in 0..samples {
        let t = C64::from_polar(h.sigma, 2.0 * PI * q as f64 / samples as f64);
        d1 = d1.max((h.eval(t) - c1 * t).norm() / t.norm_sqr());
        d2 = d2.max((h.eval_derivative(t) - c1).norm() / t.norm());
    }
    (d1, d2)
}

pub fn check_uniform_bounds(seq: &HornMapSequence) -> (f64, f64) {
    let mut d = (0.0f64, 0.0f64);
    for j in seq.indices() {
        let p = seq.pair(j);
        for h in [&p.h0, &p.hinf] {
            let (a, b) = uniform_bounds(h, 256);
            d = (d.0.max(a), d.1.max(b));
        }
    }
    d
}

/// Scalars `β_j, γ_j` with `h₀ʲ(t) = β_{j−1}·k₀ʲ(γ_j t)` and `h∞ʲ(t) = γ_j·k∞ʲ(β_j t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceScalars {
    /// `β_j` for `j = −J−1 ..= J`.
    pub beta: BTreeMap<i32, C64>,
    /// `γ_j` for `j = −J ..= J`.
    pub gamma: BTreeMap<i32, C64>,
    /// Largest weighted coefficient mismatch after applying the scalars.
    pub residual: f64,
}

/// Relative threshold below which a weighted coefficient counts as absent.
const SIGNIFICANT: f64 = 1e-9;

enum Link {
    /// `u_i·u_{i+1} = r` with no further information.
    Product(C64),
    /// Finitely many admissible pairs `(u_i, u_{i+1})`.
    Pairs(Vec<(C64, C64)>),
    Impossible,
}

fn link(h: &GermSeries, k: &GermSeries, tol: f64) -> Link {
    let kc1 = k.c1();
    if kc1.norm() == 0.0 || h.c1().norm() == 0.0 {
        return Link::Impossible;
    }
    let r = h.c1() / kc1;
    let sigma = h.sigma.min(k.sigma);
    let scale = |n: usize| sigma.powi(n as i32 - 1);
    // Nonlinear orders n ≥ 2 present in k, with u_{i+1}^{n−1} = h_n/(k_n·r).
    let mut orders = Vec::new();
    for n in 2..=k.degree().min(h.degree()) {
        let kn = k.coeffs[n - 1];
        let hn = h.coeffs[n - 1];
        if kn.norm() * scale(n) > tol.max(SIGNIFICANT) * kc1.norm() {
            orders.push((n, hn / (kn * r)));
        } else if hn.norm() * scale(n) > tol.max(SIGNIFICANT) * h.c1().norm() {
            return Link::Impossible;
        }
    }
    // The most significant nonlinear order fixes u_{i+1} up to roots of unity.
    let Some(&(n, v)) = orders
        .iter()
        .max_by(|a, b| (a.1.norm() * scale(a.0)).total_cmp(&(b.1.norm() * scale(b.0))))
    else {
        return Link::Product(r);
    };
    if v.norm() == 0.0 {
        return Link::Impossible;
    }
    let p = (n - 1) as f64;
    let base = v.powf(1.0 / p);
    let pairs = (0..(n - 1))
        .map(|q| base * C64::from_polar(1.0, 2.0 * PI * q as f64 / p))
        .map(|u1| (r / u1, u1))
        .collect();
    Link::Pairs(pairs)
}

fn mismatch(h: &GermSeries, k: &GermSeries, ui: C64, ui1: C64) -> f64 {
    let sigma = h.sigma.min(k.sigma);
    let n = h.degree().max(k.degree());
    let mut worst = 0.0f64;
    for idx in 0..n {
        let hn = h.coeffs.get(idx).copied().unwrap_or_default();
        let kn = k.coeffs.get(idx).copied().unwrap_or_default();
        let pred = ui * ui1.powi(idx as i32 + 1) * kn;
        let w = sigma.powi(idx as i32);
        worst = worst.max((hn - pred).norm() * w / h.c1().norm().max(1e-300));
    }
    worst
}

/// Solves for equivalence scalars mapping `b` onto `a`, or `None` when the
/// sequences are not equivalent within `tol`.
///
/// The unknowns form a chain `β_{−J−1}, γ_{−J}, β_{−J}, …, γ_J, β_J`; each horn
/// map couples two neighbours. Links with nonlinear parts fix their pair up to
/// roots of unity, linear links only fix the product. Branches are searched
/// depth-first.
pub fn equivalence_normalize(
    a: &HornMapSequence,
    b: &HornMapSequence,
    tol: f64,
) -> Option<EquivalenceScalars> {
    if a.window != b.window {
        return None;
    }
    let mut maps = Vec::new();
    for j in a.indices() {
        maps.push((a.get(j, Which::Zero), b.get(j, Which::Zero)));
        maps.push((a.get(j, Which::Infty), b.get(j, Which::Infty)));
    }
    let mut links = Vec::with_capacity(maps.len());
    for (h, k) in &maps {
        match link(h, k, tol) {
            Link::Impossible => return None,
            l => links.push(l),
        }
    }
    let mut chain: Vec<Option<C64>> = vec![None; links.len() + 1];
    if !search(&links, &maps, 0, &mut chain, tol) {
        return None;
    }
    let values = resolve_free(&links, &chain);
    let residual = maps
        .iter()
        .enumerate()
        .map(|(i, (h, k))| mismatch(h, k, values[i], values[i + 1]))
        .fold(0.0, f64::max);
    let mut beta = BTreeMap::new();
    let mut gamma = BTreeMap::new();
    for (idx, v) in values.iter().enumerate() {
        // even positions are β_{j}, j = −J−1 + idx/2; odd are γ_j, j = −J + (idx−1)/2
        if idx % 2 == 0 {
            beta.insert(-a.window - 1 + (idx / 2) as i32, *v);
        } else {
            gamma.insert(-a.window + ((idx - 1) / 2) as i32, *v);
        }
    }
    Some(EquivalenceScalars { beta, gamma, residual })
}

fn close(x: C64, y: C64) -> bool {
    (x - y).norm() <= 1e-6 * x.norm().max(y.norm())
}

fn search(
    links: &[Link],
    maps: &[(GermSeries, GermSeries)],
    i: usize,
    chain: &mut Vec<Option<C64>>,
    tol: f64,
) -> bool {
    if i == links.len() {
        return true;
    }
    match &links[i] {
        Link::Product(r) => {
            let saved = chain[i + 1];
            chain[i + 1] = chain[i].map(|u| r / u);
            let (h, k) = &maps[i];
            let ok = match (chain[i], chain[i + 1]) {
                (Some(u), Some(v)) => mismatch(h, k, u, v) <= tol,
                _ => true,
            };
            if ok && search(links, maps, i + 1, chain, tol) {
                return true;
            }
            chain[i + 1] = saved;
            false
        }
        Link::Pairs(pairs) => {
            let (h, k) = &maps[i];
            for &(u, v) in pairs {
                if let Some(prev) = chain[i] {
                    if !close(prev, u) {
                        continue;
                    }
                }
                if mismatch(h, k, u, v) > tol {
                    continue;
                }
                let saved_i = chain[i];
                if saved_i.is_none() && !backfill_consistent(links, maps, chain, i, u, tol) {
                    continue;
                }
                chain[i] = Some(u);
                chain[i + 1] = Some(v);
                if search(links, maps, i + 1, chain, tol) {
                    return true;
                }
                chain[i] = saved_i;
                chain[i + 1] = None;
            }
            false
        }
        Link::Impossible => false,
    }
}

/// Back-propagates a newly fixed value through the preceding free product links.
fn backfill_consistent(
    links: &[Link],
    maps: &[(GermSeries, GermSeries)],
    chain: &[Option<C64>],
    i: usize,
    u: C64,
    tol: f64,
) -> bool {
    let mut v = u;
    let mut idx = i;
    while idx > 0 && chain[idx - 1].is_none() {
        let Link::Product(r) = &links[idx - 1] else {
            break;
        };
        let prev = r / v;
        let (h, k) = &maps[idx - 1];
        if mismatch(h, k, prev, v) > tol {
            return false;
        }
        v = prev;
        idx -= 1;
    }
    true
}

fn resolve_free(links: &[Link], chain: &[Option<C64>]) -> Vec<C64> {
    let n = chain.len();
    let mut values: Vec<Option<C64>> = chain.to_vec();
    // propagate backwards from fixed values through product links
    for i in (0..n - 1).rev() {
        if values[i].is_none() {
            if let (Some(next), Link::Product(r)) = (values[i + 1], &links[i]) {
                values[i] = Some(r / next);
            }
        }
    }
    if values[0].is_none() {
        values[0] = Some(C64::new(1.0, 0.0));
    }
    for i in 0..n - 1 {
        if values[i + 1].is_none() {
            let r = match &links[i] {
                Link::Product(r) => *r,
                _ => C64::new(1.0, 0.0),
            };
            values[i + 1] = Some(r / values[i].unwrap());
        }
    }
    values.into_iter().map(|v| v.unwrap()).collect()
}

/// Applies scalars to `k`, producing `h` per the equivalence relations.
pub fn apply_equivalence(k: &HornMapSequence, s: &EquivalenceScalars) -> HornMapSequence {
    let scale = |g: &GermSeries, u: C64, v: C64| GermSeries {
        coeffs: g
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| u * v.powi(i as i32 + 1) * c)
            .collect(),
        sigma: g.sigma,
    };
    let one = C64::new(1.0, 0.0);
    let mut out = HornMapSequence::identity(k.window, k.degree);
    for j in k.indices() {
        let p = k.pair(j);
        let bprev = s.beta.get(&(j - 1)).copied().unwrap_or(one);
        let g = s.gamma.get(&j).copied().unwrap_or(one);
        let bj = s.beta.get(&j).copied().unwrap_or(one);
        out.entries.insert(
            j,
            HornPair {
                h0: scale(&p.h0, bprev, g),
                hinf: scale(&p.hinf, g, bj),
            },
        );
    }
    out
}
