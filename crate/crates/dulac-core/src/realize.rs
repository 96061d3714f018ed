//! Successive Fatou-coordinate approximations realizing a horn-map sequence,
//! germ recovery from the Abel equation, and the checks run on the result.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{verify_log_gevrey, BoundKind, GevreyConfig, GevreyReport};
use crate::cauchy_heine::{CHConfig, Field, PetalFunctionAtlas};
use crate::error::{Error, Result};
use crate::moduli::{check_uniform_bounds, GermSeries, HornMapSequence, Which};
use crate::normal_form::{f0, psi_nf, psi_nf_diff, solve_displacement, FormalClass, Germ};
use crate::surface::{central_line, DomainSpec, PetalId};
use crate::C64;

/// `exp(sign·2πi·ψ)` with `Re ψ` reduced modulo 1 first.
pub fn orbit_coordinate(psi: C64, sign: f64) -> C64 {
    let phase = 2.0 * PI * sign * (psi.re - psi.re.round());
    C64::from_polar((-2.0 * PI * sign * psi.im).exp(), phase)
}

/// The plus petal whose Fatou coordinate parametrizes the orbit space on an
/// intersection petal, and the sign of the exponent used there.
pub fn orbit_chart(which: Which, j: i32) -> (PetalId, f64) {
    match which {
        Which::Infty => (PetalId::plus(j), -1.0),
        Which::Zero => (PetalId::plus(j - 1), 1.0),
    }
}

/// The intersection petal carrying a horn map.
pub fn horn_petal(which: Which, j: i32) -> PetalId {
    match which {
        Which::Infty => PetalId::infty(j),
        Which::Zero => PetalId::zero(j),
    }
}

/// Sample grid placed in each petal strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Chebyshev points in `Re ζ` per row.
    pub n_re: usize,
    /// Rows, uniform in `Im ζ`.
    pub n_im: usize,
    /// Distance of the first column from the domain boundary.
    pub offset: f64,
    /// Extent in `Re ζ`.
    pub width: f64,
    /// Distance kept from the strip edges.
    pub margin: f64,
    /// Radius around line endpoints left out of the grid.
    pub exclusion: f64,
    /// Rows start where the orbit coordinate of the surrounding intersection petal is below this.
    pub max_tau: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_re: 6,
            n_im: 5,
            offset: 0.3,
            width: 4.0,
            margin: 0.1,
            exclusion: 0.05,
            max_tau: 0.25,
        }
    }
}

/// Search range and step for the first admissible column of a row.
const ROW_SEARCH: (f64, f64) = (12.0, 0.05);

/// `|τ|` of the intersection petal whose strip contains `Im ζ`, from `Ψ_nf`.
pub fn model_orbit_modulus(class: &FormalClass, zeta: C64) -> f64 {
    // V∞ʲ covers ((2j−1)π, 2jπ), V₀ʲ covers ((2j−2)π, (2j−1)π)
    let k = (zeta.im / PI).floor() as i64;
    let sign = if k.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    orbit_coordinate(psi_nf(class, zeta), sign).norm()
}

impl GridSpec {
    pub fn points(&self, domain: &DomainSpec, class: &FormalClass, petal: PetalId) -> Vec<C64> {
        let c = petal.center();
        let hw = petal.half_width() - self.margin;
        let mut out = Vec::with_capacity(self.n_re * self.n_im);
        for k in 0..self.n_im {
            let y = if self.n_im == 1 {
                c
            } else {
                c - hw + 2.0 * hw * k as f64 / (self.n_im - 1) as f64
            };
            let start = domain.boundary_re(y) + self.offset;
            let mut x0 = start;
            while model_orbit_modulus(class, C64::new(x0, y)) > self.max_tau {
                x0 += ROW_SEARCH.1;
                if x0 > start + ROW_SEARCH.0 {
                    break;
                }
            }
            if x0 > start + ROW_SEARCH.0 {
                continue;
            }
            for i in 0..self.n_re {
                let s = (PI * (i as f64 + 0.5) / self.n_re as f64).cos();
                out.push(C64::new(x0 + 0.5 * self.width * (1.0 - s), y));
            }
        }
        let ends = endpoints(domain, petal);
        out.retain(|z| ends.iter().all(|e| (z - e).norm() >= self.exclusion));
        out
    }
}

fn endpoints(domain: &DomainSpec, petal: PetalId) -> Vec<C64> {
    let j = petal.j;
    [PetalId::zero(j), PetalId::infty(j), PetalId::zero(j + 1), PetalId::infty(j - 1)]
        .into_iter()
        .filter_map(|p| central_line(domain, p).ok())
        .map(|l| l.endpoint)
        .collect()
}

/// Parameters of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterationConfig {
    pub max_steps: usize,
    /// Stop once `sup|e^{2πiRⁿ} − e^{2πiRⁿ⁻¹}|` falls below this.
    pub tol: f64,
    /// Steps taken before the tolerance may stop the iteration, so that ratios are logged.
    pub min_steps: usize,
    /// How many times the domain may be moved right by one unit.
    pub max_shrinks: usize,
    pub grid: GridSpec,
    pub ch: CHConfig,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            max_steps: 15,
            tol: 1e-8,
            min_steps: 4,
            max_shrinks: 10,
            grid: GridSpec::default(),
            ch: CHConfig::default(),
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_steps == 0 {
            return Err(Error::Invalid("tolerance and max_steps must be positive".into()));
        }
        if !(self.grid.exclusion > 0.0) || self.grid.n_re == 0 || self.grid.n_im == 0 {
            return Err(Error::Invalid("grid needs points and a positive exclusion radius".into()));
        }
        self.ch.validate()
    }
}

/// Fatou coordinates `Ψ_j^± = Ψ_nf + R_j^±` of a realized sequence.
#[derive(Clone)]
pub struct FatouAtlas {
    pub class: FormalClass,
    pub domain: DomainSpec,
    pub moduli: HornMapSequence,
    pub atlas: PetalFunctionAtlas,
    /// `d_n` for `n = 1, 2, …`.
    pub deltas: Vec<f64>,
    /// Times the domain was moved right before the run succeeded.
    pub shrinks: usize,
    pub grid: GridSpec,
}

impl FatouAtlas {
    pub fn r(&self, petal: PetalId, zeta: C64) -> Result<C64> {
        self.atlas.r(petal, zeta)
    }

    pub fn psi(&self, petal: PetalId, zeta: C64) -> Result<C64> {
        Ok(psi_nf(&self.class, zeta) + self.atlas.r(petal, zeta)?)
    }

    pub fn window(&self) -> i32 {
        self.moduli.window
    }

    /// Plus petals `−J−1..=J` and minus petals `−J..=J`.
    pub fn big_petals(&self) -> Vec<PetalId> {
        big_petals(self.window())
    }

    /// Largest logged ratio `d_{n+1}/d_n` for `n ≥ 2`.
    pub fn q_estimate(&self) -> Option<f64> {
        self.deltas
            .windows(2)
            .skip(1)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .reduce(f64::max)
    }

    /// `R₋ʲ − R₊ʲ − g∞ʲ(τ)` on `V∞ʲ`, `R₊^{j−1} − R₋ʲ − g₀ʲ(τ)` on `V₀ʲ`.
    pub fn cocycle_residual(&self, which: Which, j: i32, zeta: C64) -> Result<f64> {
        let g = cocycle_series(&self.moduli, which, j)?;
        let (chart, sign) = orbit_chart(which, j);
        let tau = orbit_coordinate(self.psi(chart, zeta)?, sign);
        let (lower, upper) = horn_petal(which, j).parents().expect("intersection petal");
        let jump = self.r(lower, zeta)? - self.r(upper, zeta)?;
        Ok((jump - g.eval(tau)).norm())
    }

    /// Largest cocycle residual over the intersection grids of the window.
    pub fn cocycle_residual_max(&self) -> Result<f64> {
        let mut tasks = Vec::new();
        for j in self.moduli.indices() {
            for which in [Which::Zero, Which::Infty] {
                for z in self.grid.points(&self.domain, &self.class, horn_petal(which, j)) {
                    tasks.push((which, j, z));
                }
            }
        }
        let vals: Vec<f64> = tasks
            .par_iter()
            .map(|&(w, j, z)| self.cocycle_residual(w, j, z))
            .collect::<Result<_>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }
}

fn big_petals(window: i32) -> Vec<PetalId> {
    let mut v: Vec<PetalId> = (-window - 1..=window).map(PetalId::plus).collect();
    v.extend((-window..=window).map(PetalId::minus));
    v
}

/// `g` for one horn map; `g₀` is taken from the inverse of `h₀`.
fn cocycle_series(moduli: &HornMapSequence, which: Which, j: i32) -> Result<GermSeries> {
    crate::moduli::g_from_h(&moduli.get(j, which), which)
}

/// Smallest ratio `σ_j/|τ|` over the points where the cocycle is evaluated.
fn domain_fits(moduli: &HornMapSequence, class: &FormalClass, domain: &DomainSpec, cfg: &IterationConfig) -> Result<()> {
    for j in moduli.indices() {
        for which in [Which::Zero, Which::Infty] {
            let g = cocycle_series(moduli, which, j)?;
            if g.is_zero() {
                continue;
            }
            let petal = horn_petal(which, j);
            let (_, sign) = orbit_chart(which, j);
            let line = central_line(domain, petal)?;
            for dy in [-2.0 * cfg.ch.eps, 0.0, 2.0 * cfg.ch.eps] {
                let y = line.height + dy;
                let x0 = domain.boundary_re(y);
                for k in 0..=24 {
                    let z = C64::new(x0 + 0.25 * f64::from(k), y);
                    let tau = orbit_coordinate(psi_nf(class, z), sign).norm();
                    if !(tau < g.sigma) {
                        return Err(Error::DomainTooLarge {
                            petal,
                            tau,
                            sigma: g.sigma,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

fn nan() -> C64 {
    C64::new(f64::NAN, f64::NAN)
}

/// Cocycle `ⁿ⁻¹G` built from the previous petal functions.
fn cocycle_fields(
    moduli: &HornMapSequence,
    class: FormalClass,
    prev: &Arc<PetalFunctionAtlas>,
) -> Result<Vec<(PetalId, Field)>> {
    let mut fields: Vec<(PetalId, Field)> = Vec::new();
    for j in moduli.indices() {
        for which in [Which::Zero, Which::Infty] {
            let g = cocycle_series(moduli, which, j)?;
            if g.is_zero() {
                continue;
            }
            let (chart, sign) = orbit_chart(which, j);
            let prev = Arc::clone(prev);
            let field: Field = Arc::new(move |w: C64| match prev.r_internal(chart, w) {
                Ok(r) => g.eval(orbit_coordinate(psi_nf(&class, w) + r, sign)),
                Err(_) => nan(),
            });
            fields.push((horn_petal(which, j), field));
        }
    }
    Ok(fields)
}

fn sup_delta(prev: &PetalFunctionAtlas, next: &PetalFunctionAtlas, grid: &[(PetalId, C64)]) -> Result<f64> {
    let vals: Vec<f64> = grid
        .par_iter()
        .map(|&(p, z)| {
            let a = prev.r_internal(p, z)?;
            let b = next.r_internal(p, z)?;
            let two_pi_i = C64::new(0.0, 2.0 * PI);
            // |e^{2πib} − e^{2πia}| without cancellation
            let d = (two_pi_i * (b - a)).exp_m1().norm() * (two_pi_i * a).exp().norm();
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let mut sup = 0.0f64;
    for v in vals {
        if !v.is_finite() {
            return Err(Error::Invalid("non-finite petal function on the grid".into()));
        }
        sup = sup.max(v);
    }
    Ok(sup)
}

pub(crate) trait ExpM1 {
    fn exp_m1(self) -> Self;
}

impl ExpM1 for C64 {
    /// `e^z − 1`, accurate for small `|z|`.
    fn exp_m1(self) -> C64 {
        // e^{x+iy} − 1 = (e^x − 1)cos y − 2 sin²(y/2) + i e^x sin y
        let (x, y) = (self.re, self.im);
        let s = (0.5 * y).sin();
        C64::new(x.exp_m1() * y.cos() - 2.0 * s * s, x.exp() * y.sin())
    }
}

fn iterate_on(
    moduli: &HornMapSequence,
    class: FormalClass,
    domain: DomainSpec,
    cfg: &IterationConfig,
) -> Result<(PetalFunctionAtlas, Vec<f64>)> {
    let grid: Vec<(PetalId, C64)> = big_petals(moduli.window)
        .into_iter()
        .flat_map(|p| cfg.grid.points(&domain, &class, p).into_iter().map(move |z| (p, z)))
        .collect();
    let mut prev = Arc::new(PetalFunctionAtlas::zero(domain, cfg.ch, moduli.window));
    let mut deltas = Vec::new();
    let mut rising = 0;
    for step in 1..=cfg.max_steps {
        let fields = cocycle_fields(moduli, class, &prev)?;
        let next = PetalFunctionAtlas::build(domain, cfg.ch, moduli.window, fields)?;
        let d = sup_delta(&prev, &next, &grid)?;
        deltas.push(d);
        if let [.., a, b] = deltas[..] {
            rising = if b >= a && a > 0.0 { rising + 1 } else { 0 };
            if rising >= 3 {
                return Err(Error::Divergence {
                    step,
                    ratios: deltas.windows(2).map(|w| w[1] / w[0]).collect(),
                });
            }
        }
        let done = d == 0.0 || (d < cfg.tol && step >= cfg.min_steps);
        prev = Arc::new(next);
        if done {
            return Ok((Arc::unwrap_or_clone(prev), deltas));
        }
    }
    Err(Error::NoConvergence {
        steps: cfg.max_steps,
        delta: deltas.last().copied().unwrap_or(f64::NAN),
    })
}

/// Runs the iteration `R⁰ = 0, Rⁿ = CH(ⁿ⁻¹G)`, moving the domain right when
/// the orbit coordinate leaves the moduli discs or the iteration stops contracting.
pub fn iterate_fatou(
    moduli: &HornMapSequence,
    class: FormalClass,
    domain: DomainSpec,
    cfg: &IterationConfig,
) -> Result<FatouAtlas> {
    cfg.validate()?;
    domain.validate()?;
    moduli.validate()?;
    let (d1, d2) = check_uniform_bounds(moduli);
    if !(d1.is_finite() && d2.is_finite()) {
        return Err(Error::Invalid("horn maps violate the uniform bounds".into()));
    }
    let mut current = domain;
    let mut last_err = None;
    for shrinks in 0..=cfg.max_shrinks {
        let attempt = domain_fits(moduli, &class, &current, cfg)
            .and_then(|_| iterate_on(moduli, class, current, cfg));
        match attempt {
            Ok((atlas, deltas)) => {
                return Ok(FatouAtlas {
                    class,
                    domain: current,
                    moduli: moduli.clone(),
                    atlas,
                    deltas,
                    shrinks,
                    grid: cfg.grid,
                })
            }
            Err(e @ (Error::DomainTooLarge { .. } | Error::Divergence { .. })) => {
                last_err = Some(e);
                current = current.shifted(1.0);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// The germ `f = (Ψ)^{-1}(Ψ + 1)` defined petalwise, preferring plus petals on overlaps.
#[derive(Clone)]
pub struct RealizedGerm {
    pub fatou: FatouAtlas,
    /// Distance from an odd multiple of `π` below which the minus petal is used.
    pub margin: f64,
}

const ABEL_ITERATIONS: usize = 40;

impl RealizedGerm {
    pub fn class(&self) -> FormalClass {
        self.fatou.class
    }

    /// Plus petal containing `ζ`, or the minus petal when `Im ζ` is near its center.
    pub fn petal_for(&self, zeta: C64) -> PetalId {
        let j = (zeta.im / (2.0 * PI)).round() as i32;
        if (zeta.im - 2.0 * PI * f64::from(j)).abs() < PI - self.margin {
            PetalId::plus(j)
        } else {
            PetalId::minus(((zeta.im / PI + 1.0) / 2.0).round() as i32)
        }
    }

    /// Solves `Ψ(w) = Ψ(ζ) + sign` on `petal`; returns `w` and `R(ζ) − R(w)`.
    fn step_on(&self, petal: PetalId, zeta: C64, sign: f64) -> Result<(C64, C64)> {
        let class = self.fatou.class;
        let atlas = &self.fatou.atlas;
        let r0 = atlas.r_internal(petal, zeta)?;
        let mut w = zeta + solve_displacement(&class, zeta, C64::new(sign, 0.0))?;
        let mut rw = atlas.r_internal(petal, w)?;
        for _ in 0..ABEL_ITERATIONS {
            let next = zeta + solve_displacement(&class, zeta, sign + r0 - rw)?;
            let step = (next - w).norm();
            w = next;
            rw = atlas.r_internal(petal, w)?;
            if step <= 1e-15 * w.norm() {
                return Ok((w, r0 - rw));
            }
        }
        let residual = (psi_nf_diff(&class, zeta, w - zeta) + rw - r0 - sign).norm();
        if residual < 1e-12 {
            Ok((w, r0 - rw))
        } else {
            Err(Error::InversionFailure { last: w, residual })
        }
    }

    /// `f` computed with the Fatou coordinate of `petal`.
    pub fn apply_on(&self, petal: PetalId, zeta: C64) -> Result<C64> {
        Ok(self.step_on(petal, zeta, 1.0)?.0)
    }

    pub fn apply_inverse_on(&self, petal: PetalId, zeta: C64) -> Result<C64> {
        Ok(self.step_on(petal, zeta, -1.0)?.0)
    }

    /// `|Ψ(f(ζ)) − Ψ(ζ) − 1|` on `petal`.
    pub fn abel_residual(&self, petal: PetalId, zeta: C64) -> Result<f64> {
        let class = self.fatou.class;
        let w = self.apply_on(petal, zeta)?;
        let atlas = &self.fatou.atlas;
        let d = psi_nf_diff(&class, zeta, w - zeta) + atlas.r_internal(petal, w)? - atlas.r_internal(petal, zeta)?;
        Ok((d - 1.0).norm())
    }

    /// `|f_lower − f_upper|` on an intersection petal.
    pub fn gluing_residual(&self, petal: PetalId, zeta: C64) -> Result<f64> {
        let (lower, upper) = petal
            .parents()
            .ok_or_else(|| Error::NotIntersectionPetal { petal })?;
        Ok((self.apply_on(lower, zeta)? - self.apply_on(upper, zeta)?).norm())
    }
}

impl Germ for RealizedGerm {
    fn apply(&self, zeta: C64) -> Result<C64> {
        self.apply_on(self.petal_for(zeta), zeta)
    }

    fn apply_inverse(&self, zeta: C64) -> Result<C64> {
        self.apply_inverse_on(self.petal_for(zeta), zeta)
    }

    // Ψ_nf(f) − Ψ_nf − 1 = R(ζ) − R(f) by the Abel equation, without cancellation.
    fn model_defect(&self, _class: &FormalClass, zeta: C64) -> Result<C64> {
        Ok(self.step_on(self.petal_for(zeta), zeta, 1.0)?.1)
    }

    fn inverse_model_defect(&self, _class: &FormalClass, zeta: C64) -> Result<C64> {
        Ok(self.step_on(self.petal_for(zeta), zeta, -1.0)?.1)
    }

    fn orbit_step(&self, _class: &FormalClass, zeta: C64, forward: bool) -> Result<(C64, C64)> {
        let sign = if forward { 1.0 } else { -1.0 };
        self.step_on(self.petal_for(zeta), zeta, sign)
    }
}

/// Evaluates `f` in the petal with the nearest center, plus petals winning ties.
pub fn recover_germ(fatou: FatouAtlas) -> RealizedGerm {
    RealizedGerm {
        fatou,
        margin: 0.5 * PI,
    }
}

/// Outcome of [`check_r_plus_invariance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub max_im: f64,
    pub samples: usize,
}

/// `sup |Im f(x)|` over real `x` in `V₊⁰`.
pub fn check_r_plus_invariance(germ: &RealizedGerm, grid: &[f64]) -> Result<InvarianceReport> {
    let vals: Vec<f64> = grid
        .par_iter()
        .map(|&x| germ.apply_on(PetalId::plus(0), C64::new(x, 0.0)).map(|w| w.im.abs()))
        .collect::<Result<_>>()?;
    Ok(InvarianceReport {
        max_im: vals.iter().copied().fold(0.0, f64::max),
        samples: vals.len(),
    })
}

/// Real sample points `Re Γ(0) + 0.3 .. + 6` for the invariance check.
pub fn real_grid(domain: &DomainSpec, n: usize) -> Vec<f64> {
    let x0 = domain.boundary_re(0.0) + 0.3;
    (0..n).map(|k| x0 + 6.0 * k as f64 / (n.max(2) - 1) as f64).collect()
}

/// JSON run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: usize,
    pub deltas: Vec<f64>,
    pub q_estimate: Option<f64>,
    pub cocycle_residual_max: f64,
    pub abel_residual_max: f64,
    pub gluing_residual_max: f64,
    /// `sup |f − f0|` over the big-petal grids.
    pub model_residual_max: f64,
    pub rplus_invariance: Option<f64>,
    pub domain: DomainSpec,
    pub shrinks: usize,
    pub tail: f64,
    pub gevrey: Option<GevreyReport>,
    pub gevrey_weak: Option<GevreyReport>,
    /// `"log_gevrey"` on linear domains, `"quadratic_weak only"` on quadratic ones.
    pub gevrey_kind: Option<String>,
}

/// Abel, gluing and model residuals of a realized germ over its grids.
pub fn germ_residuals(germ: &RealizedGerm) -> Result<(f64, f64, f64)> {
    let fatou = &germ.fatou;
    let class = fatou.class;
    let big: Vec<(PetalId, C64)> = fatou
        .big_petals()
        .into_iter()
        .flat_map(|p| fatou.grid.points(&fatou.domain, &class, p).into_iter().map(move |z| (p, z)))
        .collect();
    let per_point: Vec<(f64, f64)> = big
        .par_iter()
        .map(|&(p, z)| {
            let abel = germ.abel_residual(p, z)?;
            let model = (germ.apply_on(p, z)? - f0(&class, z)?).norm();
            Ok((abel, model))
        })
        .collect::<Result<_>>()?;
    let mut inter = Vec::new();
    for j in fatou.moduli.indices() {
        for which in [Which::Zero, Which::Infty] {
            let petal = horn_petal(which, j);
            inter.extend(fatou.grid.points(&fatou.domain, &class, petal).into_iter().map(|z| (petal, z)));
        }
    }
    let gluing: Vec<f64> = inter
        .par_iter()
        .map(|&(p, z)| germ.gluing_residual(p, z))
        .collect::<Result<_>>()?;
    let abel = per_point.iter().map(|v| v.0).fold(0.0, f64::max);
    let model = per_point.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok((abel, gluing.into_iter().fold(0.0, f64::max), model))
}

/// Gevrey conformance of `R̆(ℓ) = R₊⁰(1/ℓ)` against the asymptotic coefficients.
pub fn gevrey_reports(fatou: &FatouAtlas, cfg: &GevreyConfig) -> Result<(GevreyReport, GevreyReport)> {
    let a = fatou.atlas.asymptotic_coeffs(cfg.n_max);
    // in ℓ: b_0 = 0, b_k = a_{k−1}
    let mut b = vec![C64::new(0.0, 0.0)];
    b.extend(a);
    let f = |l: C64| fatou.r(PetalId::plus(0), l.inv());
    let strong = verify_log_gevrey(f, &b, cfg)?;
    let weak_cfg = GevreyConfig {
        kind: BoundKind::QuadraticWeak,
        ..cfg.clone()
    };
    let weak = verify_log_gevrey(f, &b, &weak_cfg)?;
    Ok((strong, weak))
}

/// Builds the run report; `invariance` is computed only when requested.
pub fn run_report(germ: &RealizedGerm, invariance: bool, gevrey: Option<&GevreyConfig>) -> Result<RunReport> {
    let fatou = &germ.fatou;
    let (abel, gluing, model) = germ_residuals(germ)?;
    let rplus = if invariance {
        Some(check_r_plus_invariance(germ, &real_grid(&fatou.domain, 25))?.max_im)
    } else {
        None
    };
    let (gevrey, gevrey_weak, gevrey_kind) = match gevrey {
        Some(cfg) => {
            let (s, w) = gevrey_reports(fatou, cfg)?;
            let kind = if fatou.domain.is_linear() {
                "log_gevrey"
            } else {
                "quadratic_weak only"
            };
            (Some(s), Some(w), Some(kind.to_string()))
        }
        None => (None, None, None),
    };
    Ok(RunReport {
        steps: fatou.deltas.len(),
        deltas: fatou.deltas.clone(),
        q_estimate: fatou.q_estimate(),
        cocycle_residual_max: fatou.cocycle_residual_max()?,
        abel_residual_max: abel,
        gluing_residual_max: gluing,
        model_residual_max: model,
        rplus_invariance: rplus,
        domain: fatou.domain,
        shrinks: fatou.shrinks,
        tail: fatou.atlas.tail(),
        gevrey,
        gevrey_weak,
        gevrey_kind,
    })
}

/// Full pipeline on a linear domain, including the log-Gevrey verification.
pub fn realize_linear(
    moduli: &HornMapSequence,
    class: FormalClass,
    domain: DomainSpec,
    cfg: &IterationConfig,
    gevrey: &GevreyConfig,
) -> Result<(RealizedGerm, GevreyReport)> {
    if !domain.is_linear() {
        return Err(Error::Invalid("realize_linear needs a linear domain".into()));
    }
    let germ = recover_germ(iterate_fatou(moduli, class, domain, cfg)?);
    let (strong, _) = gevrey_reports(&germ.fatou, gevrey)?;
    Ok((germ, strong))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moduli::HornMapSequence;

    fn single_mode(amp: f64) -> HornMapSequence {
        let mut seq = HornMapSequence::identity(2, 4);
        let g = GermSeries::new(vec![C64::new(amp, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)], 0.5);
        seq.set_from_g(0, Which::Infty, &g);
        seq
    }

    #[test]
    fn orbit_coordinate_reduces_phase() {
        let psi = C64::new(1e6 + 0.25, -0.1);
        let tau = orbit_coordinate(psi, -1.0);
        let direct = (C64::new(0.0, -2.0 * PI) * C64::new(0.25, -0.1)).exp();
        assert!((tau - direct).norm() < 1e-12);
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let seq = HornMapSequence::identity(2, 4);
        let class = FormalClass::new(0, 0.0);
        let fatou = iterate_fatou(&seq, class, DomainSpec::linear(1.0, 1.0), &IterationConfig::default()).unwrap();
        assert_eq!(fatou.deltas, vec![0.0]);
        assert!(fatou.atlas.is_zero());
        let germ = recover_germ(fatou);
        let z = C64::new(3.0, 0.4);
        assert!((germ.apply(z).unwrap() - f0(&class, z).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn expm1_small_arguments() {
        let z = C64::new(1e-20, -3e-19);
        assert!((z.exp_m1() - z).norm() < 1e-35);
        let w = C64::new(0.3, 1.2);
        assert!((w.exp_m1() - (w.exp() - 1.0)).norm() < 1e-15);
    }

    #[test]
    fn single_mode_contracts_and_glues() {
        let seq = single_mode(0.05);
        let class = FormalClass::new(0, 0.0);
        let cfg = IterationConfig::default();
        let fatou = iterate_fatou(&seq, class, DomainSpec::linear(2.0, 0.0), &cfg).unwrap();
        assert!(fatou.deltas.len() <= cfg.max_steps);
        assert!(fatou.q_estimate().unwrap() < 1.0, "{:?}", fatou.deltas);
        let germ = recover_germ(fatou);
        let line = central_line(&germ.fatou.domain, PetalId::infty(0)).unwrap();
        let z = line.at(line.x_start + 1.0) + C64::new(0.0, 0.3);
        assert!(germ.abel_residual(PetalId::plus(0), z).unwrap() < 1e-9);
        assert!(germ.gluing_residual(PetalId::infty(0), z).unwrap() < 1e-6);
    }

    #[test]
    fn petal_choice_prefers_plus() {
        let germ = recover_germ(
            iterate_fatou(
                &HornMapSequence::identity(1, 4),
                FormalClass::new(0, 0.0),
                DomainSpec::linear(1.0, 1.0),
                &IterationConfig::default(),
            )
            .unwrap(),
        );
        assert_eq!(germ.petal_for(C64::new(3.0, 1.5)), PetalId::plus(0));
        assert_eq!(germ.petal_for(C64::new(3.0, 3.0)), PetalId::minus(1));
        assert_eq!(germ.petal_for(C64::new(3.0, -PI + 0.01)), PetalId::minus(0));
        assert_eq!(germ.petal_for(C64::new(3.0, 2.0 * PI - 1.0)), PetalId::plus(1));
    }
}
