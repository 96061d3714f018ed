//! Cauchy-Heine integrals along the center lines of intersection petals,
//! their continuation by contour deformation, and the petal functions
//! `R_j^±` realizing a cocycle.
//!
//! Lines are oriented from their boundary endpoint towards `+∞`, so
//! `F(ζ) = (1/2πi)∫ G(w)/(w − ζ) dw` jumps by `F_above − F_below = G`.
//! Petal functions sum `T = −F` over all lines, which gives
//! `R₋ʲ − R₊ʲ = G∞ʲ` on `V∞ʲ` and `R₊^{j−1} − R₋ʲ = G₀ʲ` on `V₀ʲ`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{Contour, ContourOptions, Path, ORDER};
use crate::surface::{central_line, DomainSpec, HalfLine, PetalId, PetalKind};
use crate::C64;

/// A cocycle component `ζ ↦ G(ζ)` on an intersection petal.
pub type Field = Arc<dyn Fn(C64) -> C64 + Send + Sync>;

/// Distance below which internal evaluations treat a point as the line endpoint.
const INTERNAL_EXCLUSION: f64 = 1e-12;
/// Points closer than this to the domain boundary use the direct formula in region 3.
const BOUNDARY_GAP: f64 = 1e-10;

fn inv_two_pi_i() -> C64 {
    C64::new(0.0, -1.0 / (2.0 * PI))
}

/// Quadrature and deformation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CHConfig {
    /// Truncation length `L` of each half-line.
    pub length: f64,
    /// Gauss nodes per unit length before adaptive refinement.
    pub nodes_per_unit: f64,
    /// Half-width `ε` of the strip around a critical line handled by deformation.
    pub eps: f64,
    /// Acceptable truncation tail.
    pub tail_tol: f64,
    /// Relative Legendre-tail tolerance for panels.
    pub rel_tol: f64,
    /// Exclusion radius around the singular endpoints for public evaluation.
    pub exclusion: f64,
}

impl Default for CHConfig {
    fn default() -> Self {
        Self {
            length: 25.0,
            nodes_per_unit: 32.0,
            eps: 0.25,
            tail_tol: 1e-10,
            rel_tol: 1e-13,
            exclusion: 1e-3,
        }
    }
}

impl CHConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < FRAC_PI_4) {
            return Err(Error::Invalid(format!("eps must lie in (0, pi/4), got {}", self.eps)));
        }
        if !(self.length > 0.0 && self.nodes_per_unit >= 1.0 && self.rel_tol > 0.0) {
            return Err(Error::Invalid("length, node density and tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn contour_options(&self) -> ContourOptions {
        ContourOptions {
            panel_length: ORDER as f64 / self.nodes_per_unit,
            rel_tol: self.rel_tol,
            ..ContourOptions::default()
        }
    }

    /// Same configuration with doubled node density and tighter tolerance.
    pub fn refined(&self) -> Self {
        Self {
            nodes_per_unit: 2.0 * self.nodes_per_unit,
            rel_tol: self.rel_tol * 0.01,
            ..*self
        }
    }
}

/// Which one-sided continuation of a line integral is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Above,
    Below,
}

impl Branch {
    /// Branch used by a petal with the given center for a line at `height`.
    pub fn for_center(center: f64, height: f64) -> Self {
        if center > height {
            Branch::Above
        } else {
            Branch::Below
        }
    }
}

fn too_close(line: &HalfLine, zeta: C64, radius: f64) -> bool {
    (zeta.im - line.height).abs() < radius && zeta.re > line.x_start - radius
}

/// `(1/2πi)∫ G(w)/(w − ζ) dw` over the truncated half-line.
pub fn ch_line_integral<G>(g: &G, line: &HalfLine, zeta: C64, cfg: &CHConfig) -> Result<C64>
where
    G: Fn(C64) -> C64 + Sync,
{
    if too_close(line, zeta, 0.5 * cfg.eps) {
        return Err(Error::TooClose {
            zeta,
            distance: (zeta.im - line.height).abs(),
        });
    }
    let c = Contour::half_line(line.height, line.x_start, cfg.length, &cfg.contour_options(), g);
    Ok(c.cauchy(zeta)? * inv_two_pi_i())
}

/// Boundary arc from the line endpoint to height `height ∓ 2ε`, followed by the shifted half-line.
///
/// `Branch::Above` pushes the contour down, so the result continues the
/// integral from above the line.
pub fn deformed_contour<G>(
    g: &G,
    domain: &DomainSpec,
    line: &HalfLine,
    branch: Branch,
    cfg: &CHConfig,
) -> Result<Contour>
where
    G: Fn(C64) -> C64 + Sync,
{
    let shift = match branch {
        Branch::Above => -2.0 * cfg.eps,
        Branch::Below => 2.0 * cfg.eps,
    };
    let y2 = line.height + shift;
    if shift.abs() >= FRAC_PI_2 {
        return Err(Error::InvalidShift { height: y2 });
    }
    let opts = cfg.contour_options();
    let arc = domain
        .boundary_arc(line.height, y2)
        .into_iter()
        .map(|piece| Contour::segment(Path::Boundary(*domain), piece.t0, piece.t1, &opts, g))
        .reduce(Contour::concat)
        .expect("arc has at least one piece");
    let x2 = domain.boundary_re(y2);
    let shifted = Contour::half_line(y2, x2, cfg.length + (line.x_start - x2).max(0.0), &opts, g);
    Ok(arc.concat(shifted))
}

/// Continuation of [`ch_line_integral`] from the `branch` side, valid up to `2ε` across the line.
pub fn ch_deformed<G>(
    g: &G,
    domain: &DomainSpec,
    line: &HalfLine,
    zeta: C64,
    cfg: &CHConfig,
    branch: Branch,
) -> Result<C64>
where
    G: Fn(C64) -> C64 + Sync,
{
    let c = deformed_contour(g, domain, line, branch, cfg)?;
    Ok(c.cauchy(zeta)? * inv_two_pi_i())
}

/// Position of a point relative to the two critical lines of a big petal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionInfo {
    /// 1 between the critical lines, 2 beyond one of them, 3 within `ε` of one.
    pub region: u8,
    /// The critical line involved in regions 2 and 3.
    pub line: Option<PetalId>,
}

/// The two intersection petals whose center lines cross a big petal, lower first.
pub fn critical_lines(petal: PetalId) -> Option<(PetalId, PetalId)> {
    match petal.kind {
        PetalKind::Plus => Some((PetalId::infty(petal.j), PetalId::zero(petal.j + 1))),
        PetalKind::Minus => Some((PetalId::zero(petal.j), PetalId::infty(petal.j))),
        _ => None,
    }
}

pub fn region_classify(zeta: C64, petal: PetalId, eps: f64) -> RegionInfo {
    let Some((low, high)) = critical_lines(petal) else {
        return RegionInfo { region: 1, line: None };
    };
    let (yl, yh) = (low.center(), high.center());
    let y = zeta.im;
    if (y - yl).abs() <= eps {
        RegionInfo { region: 3, line: Some(low) }
    } else if (y - yh).abs() <= eps {
        RegionInfo { region: 3, line: Some(high) }
    } else if y < yl {
        RegionInfo { region: 2, line: Some(low) }
    } else if y > yh {
        RegionInfo { region: 2, line: Some(high) }
    } else {
        RegionInfo { region: 1, line: None }
    }
}

/// Flatness parameters `|G(ζ)| ≤ C·exp(−M·e^{m·Re ζ})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    pub c: f64,
    pub big_m: f64,
    pub order: f64,
}

impl Flatness {
    pub fn bound(&self, x: f64) -> f64 {
        self.c * (-self.big_m * (self.order * x).exp()).exp()
    }
}

/// Cocycle components on the window's intersection petals.
#[derive(Clone)]
pub struct CocycleField {
    pub window: i32,
    pub fields: Vec<(PetalId, Field)>,
    pub flatness: Option<Flatness>,
}

impl CocycleField {
    pub fn zero(window: i32) -> Self {
        Self {
            window,
            fields: Vec::new(),
            flatness: None,
        }
    }
}

/// One active line with cached integrand values on its three contours.
pub struct CocycleLine {
    pub petal: PetalId,
    pub line: HalfLine,
    pub field: Field,
    main: Contour,
    down: Contour,
    up: Contour,
}

impl CocycleLine {
    fn build(domain: &DomainSpec, petal: PetalId, field: Field, cfg: &CHConfig) -> Result<Option<Self>> {
        let line = central_line(domain, petal)?;
        let g = |w: C64| field(w);
        let opts = cfg.contour_options();
        let main = Contour::half_line(line.height, line.x_start, cfg.length, &opts, &g);
        if !main.is_finite() {
            return Err(Error::Invalid(format!("non-finite cocycle values on {petal}")));
        }
        if main.panels.iter().all(|p| p.max_abs() == 0.0) {
            return Ok(None);
        }
        let (down, up) = rayon::join(
            || deformed_contour(&g, domain, &line, Branch::Above, cfg),
            || deformed_contour(&g, domain, &line, Branch::Below, cfg),
        );
        let (down, up) = (down?, up?);
        if !(down.is_finite() && up.is_finite()) {
            return Err(Error::Invalid(format!("non-finite cocycle values near {petal}")));
        }
        Ok(Some(Self {
            petal,
            line,
            field: field.clone(),
            main,
            down,
            up,
        }))
    }

    pub fn g(&self, zeta: C64) -> C64 {
        (self.field)(zeta)
    }

    pub fn main_contour(&self) -> &Contour {
        &self.main
    }

    pub fn tail(&self) -> f64 {
        self.main.tail.max(self.down.tail).max(self.up.tail)
    }

    pub fn unresolved(&self) -> usize {
        self.main.unresolved + self.down.unresolved + self.up.unresolved
    }

    /// `T = −F` continued from the `branch` side.
    fn transform(&self, domain: &DomainSpec, zeta: C64, branch: Branch, eps: f64) -> Result<C64> {
        let dy = zeta.im - self.line.height;
        let near_line = dy.abs() <= eps;
        if near_line && zeta.re - domain.boundary_re(zeta.im) > BOUNDARY_GAP {
            let c = match branch {
                Branch::Above => &self.down,
                Branch::Below => &self.up,
            };
            return Ok(-c.cauchy(zeta)? * inv_two_pi_i());
        }
        let direct = -self.main.cauchy(zeta)? * inv_two_pi_i();
        Ok(match branch {
            Branch::Above if dy < 0.0 => direct - self.g(zeta),
            Branch::Below if dy > 0.0 => direct + self.g(zeta),
            _ => direct,
        })
    }
}

/// Petal functions `R_j^±` of a realized cocycle.
#[derive(Clone)]
pub struct PetalFunctionAtlas {
    pub domain: DomainSpec,
    pub cfg: CHConfig,
    pub window: i32,
    pub lines: Arc<Vec<CocycleLine>>,
}

impl PetalFunctionAtlas {
    pub fn zero(domain: DomainSpec, cfg: CHConfig, window: i32) -> Self {
        Self {
            domain,
            cfg,
            window,
            lines: Arc::new(Vec::new()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lines.is_empty()
    }

    /// Builds all lines in parallel; lines whose field vanishes are dropped.
    pub fn build(domain: DomainSpec, cfg: CHConfig, window: i32, fields: Vec<(PetalId, Field)>) -> Result<Self> {
        cfg.validate()?;
        domain.validate()?;
        let built: Vec<Option<CocycleLine>> = fields
            .into_par_iter()
            .map(|(petal, field)| CocycleLine::build(&domain, petal, field, &cfg))
            .collect::<Result<_>>()?;
        Ok(Self {
            domain,
            cfg,
            window,
            lines: Arc::new(built.into_iter().flatten().collect()),
        })
    }

    pub fn line(&self, petal: PetalId) -> Option<&CocycleLine> {
        self.lines.iter().find(|l| l.petal == petal)
    }

    /// The cocycle component on an intersection petal, zero when inactive.
    pub fn g(&self, petal: PetalId, zeta: C64) -> C64 {
        self.line(petal).map_or(C64::new(0.0, 0.0), |l| l.g(zeta))
    }

    fn check_endpoints(&self, zeta: C64, radius: f64) -> Result<()> {
        for l in self.lines.iter() {
            let d = (zeta - l.line.endpoint).norm();
            if d < radius {
                return Err(Error::SingularPoint {
                    endpoint: l.line.endpoint,
                    distance: d,
                });
            }
        }
        Ok(())
    }

    /// `R_P(ζ)` for a plus or minus petal.
    pub fn r(&self, petal: PetalId, zeta: C64) -> Result<C64> {
        self.check_endpoints(zeta, self.cfg.exclusion)?;
        self.r_internal(petal, zeta)
    }

    /// As [`Self::r`] but only rejecting points that coincide with an endpoint.
    pub fn r_internal(&self, petal: PetalId, zeta: C64) -> Result<C64> {
        if petal.is_intersection() {
            return Err(Error::Invalid(format!("{petal} is not a plus or minus petal")));
        }
        self.check_endpoints(zeta, INTERNAL_EXCLUSION)?;
        let center = petal.center();
        let mut acc = C64::new(0.0, 0.0);
        for l in self.lines.iter() {
            let branch = Branch::for_center(center, l.line.height);
            acc += l.transform(&self.domain, zeta, branch, self.cfg.eps)?;
        }
        Ok(acc)
    }

    /// The cocycle identity defect on an intersection petal.
    pub fn jump_residual(&self, petal: PetalId, zeta: C64) -> Result<C64> {
        let (lower, upper) = petal
            .parents()
            .ok_or_else(|| Error::Invalid(format!("{petal} is not an intersection petal")))?;
        let g = self.g(petal, zeta);
        match petal.kind {
            // V₀ʲ = V₊^{j−1} ∩ V₋ʲ: R₊^{j−1} − R₋ʲ = G₀ʲ
            PetalKind::Zero => Ok(self.r(lower, zeta)? - self.r(upper, zeta)? - g),
            // V∞ʲ = V₋ʲ ∩ V₊ʲ: R₋ʲ − R₊ʲ = G∞ʲ
            _ => Ok(self.r(lower, zeta)? - self.r(upper, zeta)? - g),
        }
    }

    pub fn region(&self, petal: PetalId, zeta: C64) -> RegionInfo {
        region_classify(zeta, petal, self.cfg.eps)
    }

    /// Largest truncation tail over all contours.
    pub fn tail(&self) -> f64 {
        self.lines.iter().map(CocycleLine::tail).fold(0.0, f64::max)
    }

    /// Coefficients `a_p` with `R ~ Σ a_p ζ^{−p−1}`, identical on all petals.
    pub fn asymptotic_coeffs(&self, order: usize) -> Vec<C64> {
        (0..=order)
            .map(|p| {
                self.lines
                    .iter()
                    .map(|l| l.main.moment(p as i32))
                    .sum::<C64>()
                    * inv_two_pi_i()
            })
            .collect()
    }
}

/// Realizes a cocycle by Cauchy-Heine integrals over the window's lines.
pub fn realize_cocycle(
    cocycle: &CocycleField,
    domain: &DomainSpec,
    cfg: &CHConfig,
) -> Result<PetalFunctionAtlas> {
    if let Some(flat) = cocycle.flatness {
        for (petal, field) in &cocycle.fields {
            let line = central_line(domain, *petal)?;
            for k in 0..20 {
                let x = line.x_start + 0.5 + 0.25 * f64::from(k);
                let v = field(line.at(x)).norm();
                if v > flat.bound(x) * (1.0 + 1e-9) {
                    return Err(Error::Invalid(format!(
                        "cocycle on {petal} violates the flatness bound at Re = {x}"
                    )));
                }
            }
        }
    }
    PetalFunctionAtlas::build(*domain, *cfg, cocycle.window, cocycle.fields.clone())
}
