//! Fatou coordinates of a germ from orbit sums, horn maps read off by circle
//! sampling, and the round trip through realization.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moduli::{
    apply_equivalence, equivalence_normalize, g_from_h, h_from_g, EquivalenceScalars, GermSeries, HornMapSequence,
    Which,
};
use crate::normal_form::{psi_nf, psi_nf_inverse, FormalClass, Germ};
use crate::realize::{horn_petal, ExpM1, iterate_fatou, model_orbit_modulus, orbit_chart, recover_germ, FatouAtlas, IterationConfig};
use crate::series::KahanSum;
use crate::surface::{central_line, DomainSpec, PetalId, PetalKind};
use crate::C64;

/// Estimate of the orbit-sum remainder `R(ζ_N)` after truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    /// Drop the remainder.
    None,
    /// `R(ζ) ≈ a/ζ + b/ζ²`, fitted to partial sums at a quarter, half and all of the orbit.
    InverseZeta,
    /// `R(ζ) ≈ a·e^{−ζ}`, for germs analytic at the origin.
    Exponential,
}

/// Truncation of orbit sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitConfig {
    pub max_iter: usize,
    /// Stop once a defect falls below this.
    pub threshold: f64,
    pub tail: TailModel,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            max_iter: 200_000,
            threshold: 1e-13,
            tail: TailModel::None,
        }
    }
}

impl OrbitConfig {
    /// Short orbits with a tail estimate, for germs whose defect decays like `1/ζ²`.
    pub fn slow_decay() -> Self {
        Self {
            max_iter: 1200,
            threshold: 1e-13,
            tail: TailModel::InverseZeta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || self.max_iter < 100 {
            return Err(Error::Invalid(format!(
                "orbit config needs threshold > 0 and max_iter >= 100, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `R(ζ_N)` from `R(ζ₀) = S_k + a/ζ_k + b/ζ_k²` at three orbit points.
fn inverse_zeta_tail(anchors: &[(C64, C64)]) -> Result<C64> {
    let one = C64::new(1.0, 0.0);
    let m = Matrix3::from_fn(|i, j| {
        let u = anchors[i].0.inv();
        match j {
            0 => one,
            1 => -u,
            _ => -u * u,
        }
    });
    let rhs = Vector3::from_fn(|i, _| anchors[i].1);
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Invalid("degenerate orbit tail fit".into()))?;
    let u = anchors[2].0.inv();
    Ok(x[1] * u + x[2] * u * u)
}

/// A Fatou coordinate `Ψ = Ψ_nf + R` on one petal.
pub trait FatouCoordinate: Sync {
    fn petal(&self) -> PetalId;

    fn r(&self, zeta: C64) -> Result<C64>;
}

/// Why an orbit sum stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitStop {
    Threshold,
    MaxIter,
}

/// One orbit point with its defect and the running sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitStep {
    pub k: usize,
    pub zeta: C64,
    pub defect: C64,
    pub partial: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub petal: PetalId,
    pub start: C64,
    pub steps: Vec<OrbitStep>,
    pub stop: OrbitStop,
    pub tail: C64,
    pub r: C64,
}

/// Orbit-sum Fatou coordinate of a germ on a plus (forward orbits) or minus
/// (backward orbits) petal.
pub struct OrbitFatou<'a, G: Germ + ?Sized> {
    pub germ: &'a G,
    pub class: FormalClass,
    pub petal: PetalId,
    pub cfg: OrbitConfig,
}

pub fn fatou_from_germ<'a, G: Germ + ?Sized>(
    germ: &'a G,
    class: FormalClass,
    petal: PetalId,
    cfg: OrbitConfig,
) -> Result<OrbitFatou<'a, G>> {
    cfg.validate()?;
    if !matches!(petal.kind, PetalKind::Plus | PetalKind::Minus) {
        return Err(Error::Invalid(format!("orbit sums need a plus or minus petal, got {petal}")));
    }
    Ok(OrbitFatou { germ, class, petal, cfg })
}

impl<G: Germ + ?Sized> OrbitFatou<'_, G> {
    fn run(&self, zeta: C64, mut record: Option<&mut Vec<OrbitStep>>) -> Result<(C64, C64, OrbitStop)> {
        let petal = self.petal;
        if !petal.strip_contains(zeta.im, 0.0) {
            return Err(Error::Escape { petal, length: 0, zeta });
        }
        let forward = petal.kind == PetalKind::Plus;
        let n = self.cfg.max_iter;
        let marks = [n / 4, n / 2];
        // (ζ_k, Σ_{i<k} δ_i) at the marks
        let mut anchors = Vec::with_capacity(3);
        let mut sum = KahanSum::default();
        let mut z = zeta;
        for k in 0..n {
            if marks.contains(&k) {
                anchors.push((z, sum.value()));
            }
            let (w, d) = self.germ.orbit_step(&self.class, z, forward)?;
            sum.add(d);
            if let Some(rec) = record.as_deref_mut() {
                rec.push(OrbitStep {
                    k,
                    zeta: z,
                    defect: d,
                    partial: sum.value(),
                });
            }
            if d.norm() < self.cfg.threshold {
                return Ok((sum.value(), C64::new(0.0, 0.0), OrbitStop::Threshold));
            }
            if !w.is_finite() || !petal.strip_contains(w.im, 0.0) {
                return Err(Error::Escape {
                    petal,
                    length: k + 1,
                    zeta: w,
                });
            }
            if k + 1 == self.cfg.max_iter {
                anchors.push((w, sum.value()));
                let tail = match self.cfg.tail {
                    TailModel::None => C64::new(0.0, 0.0),
                    TailModel::InverseZeta => inverse_zeta_tail(&anchors)?,
                    TailModel::Exponential => d / (w - z).exp_m1(),
                };
                return Ok((sum.value() + tail, tail, OrbitStop::MaxIter));
            }
            z = w;
        }
        unreachable!("max_iter >= 100")
    }

    /// The orbit sum with every step recorded.
    pub fn trace(&self, zeta: C64) -> Result<OrbitTrace> {
        let mut steps = Vec::new();
        let (r, tail, stop) = self.run(zeta, Some(&mut steps))?;
        Ok(OrbitTrace {
            petal: self.petal,
            start: zeta,
            steps,
            stop,
            tail,
            r,
        })
    }

    pub fn psi(&self, zeta: C64) -> Result<C64> {
        Ok(psi_nf(&self.class, zeta) + self.r(zeta)?)
    }

    /// `|Ψ(f^{±1}(ζ)) − Ψ(ζ) ∓ 1|` in the orbit direction of the petal.
    pub fn abel_residual(&self, zeta: C64) -> Result<f64> {
        let forward = self.petal.kind == PetalKind::Plus;
        let (w, d) = self.germ.orbit_step(&self.class, zeta, forward)?;
        Ok((self.r(zeta)? - self.r(w)? - d).norm())
    }
}

impl<G: Germ + ?Sized> FatouCoordinate for OrbitFatou<'_, G> {
    fn petal(&self) -> PetalId {
        self.petal
    }

    fn r(&self, zeta: C64) -> Result<C64> {
        Ok(self.run(zeta, None)?.0)
    }
}

/// A petal of a realized atlas seen as a Fatou coordinate.
pub struct AtlasFatou<'a> {
    pub fatou: &'a FatouAtlas,
    pub petal: PetalId,
}

impl FatouCoordinate for AtlasFatou<'_> {
    fn petal(&self) -> PetalId {
        self.petal
    }

    fn r(&self, zeta: C64) -> Result<C64> {
        self.fatou.r(self.petal, zeta)
    }
}

/// Circle sampling of horn maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HornConfig {
    /// Degree `D` of the recovered horn maps.
    pub degree: usize,
    /// Points on the sampling circle, at least `4D`.
    pub samples: usize,
    /// Sampling radius; chosen from the domain when absent.
    pub radius: Option<f64>,
    /// Where the anchor search starts, measured from the start of the central line.
    pub anchor_offset: f64,
    /// Anchor step of the automatic radius search.
    pub anchor_step: f64,
    /// Distance kept from strip edges and the domain boundary.
    pub margin: f64,
    /// Radius around line endpoints that samples avoid.
    pub exclusion: f64,
    /// Circles smaller than this are not sampled; the horn map is reported unresolved.
    pub min_radius: f64,
    /// Step size at which the fixed-point inversion stops.
    pub inversion_tol: f64,
    pub max_inversion_iter: usize,
    /// Largest accepted `|Ψ(ζ) − w|` of an inverted sample.
    pub residual_tol: f64,
}

impl Default for HornConfig {
    fn default() -> Self {
        Self {
            degree: 4,
            samples: 32,
            radius: None,
            anchor_offset: 0.05,
            anchor_step: 0.05,
            margin: 0.05,
            exclusion: 0.05,
            min_radius: 1e-6,
            inversion_tol: 1e-13,
            max_inversion_iter: 40,
            residual_tol: 1e-6,
        }
    }
}

/// Anchor positions tried before giving up.
const MAX_ANCHOR_MOVES: usize = 400;

impl HornConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.degree >= 2
            && self.samples >= 4 * self.degree
            && self.radius.map_or(true, |r| r > 0.0 && r < 1.0)
            && self.anchor_step > 0.0
            && self.margin >= 0.0
            && self.min_radius > 0.0
            && self.inversion_tol > 0.0
            && self.max_inversion_iter > 0
            && self.residual_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad horn-map sampling config {self:?}")))
        }
    }
}

/// A horn map recovered on one intersection petal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HornMapFit {
    pub j: i32,
    pub which: Which,
    pub h: GermSeries,
    /// False when the orbit space on this petal is below `min_radius` everywhere in
    /// the domain; `h` is then the identity.
    pub resolved: bool,
    /// Constant Fourier mode of the cocycle; `e^{2πi c₀}` is the linear coefficient of `h^{±1}`.
    pub c0: C64,
    /// Nonconstant part of the cocycle.
    pub g: GermSeries,
    pub radius: f64,
    pub anchor: C64,
    pub max_inversion_residual: f64,
    /// `|c₁ − 1|`; large values are reported, not rejected.
    pub tangency_defect: f64,
}

/// Sample targets `w_q` with `exp(sign·2πi w_q)` on the circle of radius `r`.
fn targets(anchor_psi: C64, r: f64, sign: f64, q: usize) -> Vec<C64> {
    let im = -sign * r.ln() / (2.0 * PI);
    (0..q)
        .map(|k| C64::new(anchor_psi.re - 0.5 + k as f64 / q as f64, im))
        .collect()
}

/// Model preimages of the targets, continued from the anchor outwards.
fn model_points(class: &FormalClass, anchor: C64, ws: &[C64]) -> Result<Vec<C64>> {
    let q = ws.len();
    let mid = q / 2;
    let mut out = vec![C64::new(0.0, 0.0); q];
    out[mid] = psi_nf_inverse(class, ws[mid], anchor)?;
    for k in (mid + 1)..q {
        out[k] = psi_nf_inverse(class, ws[k], out[k - 1])?;
    }
    for k in (0..mid).rev() {
        out[k] = psi_nf_inverse(class, ws[k], out[k + 1])?;
    }
    Ok(out)
}

fn admissible(domain: &DomainSpec, petal: PetalId, pts: &[C64], ends: &[C64], cfg: &HornConfig) -> bool {
    pts.iter().all(|z| {
        petal.strip_contains(z.im, cfg.margin)
            && domain.contains(*z - cfg.margin).unwrap_or(false)
            && ends.iter().all(|e| (z - e).norm() >= cfg.exclusion)
    })
}

/// Line endpoints near an intersection petal.
fn nearby_endpoints(domain: &DomainSpec, petal: PetalId) -> Vec<C64> {
    let j = petal.j;
    [
        PetalId::zero(j),
        PetalId::infty(j),
        PetalId::zero(j + 1),
        PetalId::infty(j - 1),
    ]
    .into_iter()
    .filter_map(|p| central_line(domain, p).ok())
    .map(|l| l.endpoint)
    .collect()
}

/// Anchor on the central line, the radius and the model sample points.
fn place_circle(
    class: &FormalClass,
    domain: &DomainSpec,
    which: Which,
    j: i32,
    cfg: &HornConfig,
) -> Result<Option<(C64, f64, Vec<C64>)>> {
    let petal = horn_petal(which, j);
    let (_, sign) = orbit_chart(which, j);
    let line = central_line(domain, petal)?;
    let ends = nearby_endpoints(domain, petal);
    let x0 = line.x_start + cfg.anchor_offset;
    let tau = |x: f64| model_orbit_modulus(class, line.at(x));
    let try_anchor = |x: f64, r: f64| -> Option<(C64, f64, Vec<C64>)> {
        let anchor = line.at(x);
        let ws = targets(psi_nf(class, anchor), r, sign, cfg.samples);
        let pts = model_points(class, anchor, &ws).ok()?;
        admissible(domain, petal, &pts, &ends, cfg).then_some((anchor, r, pts))
    };
    match cfg.radius {
        Some(r) => {
            if tau(x0) < r {
                return Err(Error::Invalid(format!(
                    "radius {r} exceeds the orbit coordinate {:e} at the start of {petal}",
                    tau(x0)
                )));
            }
            // |τ| decreases along the central line
            let (mut lo, mut hi) = (x0, x0 + 1.0);
            while tau(hi) > r {
                hi += 1.0;
                if hi > x0 + 50.0 {
                    return Err(Error::Invalid(format!("radius {r} not reached on {petal}")));
                }
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if tau(mid) > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            try_anchor(0.5 * (lo + hi), r)
                .map(Some)
                .ok_or_else(|| Error::Invalid(format!("samples of radius {r} leave {petal}")))
        }
        None => {
            for k in 0..MAX_ANCHOR_MOVES {
                let x = x0 + cfg.anchor_step * k as f64;
                let r = tau(x);
                if !(r >= cfg.min_radius) {
                    return Ok(None);
                }
                if let Some(found) = try_anchor(x, r) {
                    return Ok(Some(found));
                }
            }
            Ok(None)
        }
    }
}

/// Solves `Ψ_nf(ζ) + R(ζ) = w` by fixed-point iteration from `seed`.
fn invert(class: &FormalClass, fatou: &dyn FatouCoordinate, w: C64, seed: C64, cfg: &HornConfig) -> Result<(C64, f64)> {
    let mut zeta = seed;
    for _ in 0..cfg.max_inversion_iter {
        let r = fatou.r(zeta)?;
        let next = psi_nf_inverse(class, w - r, zeta)?;
        let step = (next - zeta).norm();
        zeta = next;
        if step <= cfg.inversion_tol * zeta.norm().max(1.0) {
            break;
        }
    }
    let residual = (psi_nf(class, zeta) + fatou.r(zeta)? - w).norm();
    if residual <= cfg.residual_tol * w.norm().max(1.0) {
        Ok((zeta, residual))
    } else {
        Err(Error::InversionFailure { last: zeta, residual })
    }
}

/// Horn map on `V∞ʲ` or `V₀ʲ` from the Fatou coordinates of its two parent petals.
///
/// `chart` is the plus petal parametrizing the orbit space there (see
/// [`orbit_chart`]) and `other` the minus petal. The cocycle `Ψ_other − Ψ_chart`
/// (or its negative on zero petals) is sampled on a circle `|τ| = r` and expanded
/// by a discrete Fourier transform.
#[allow(clippy::too_many_arguments)]
pub fn horn_maps_from_fatou(
    chart: &dyn FatouCoordinate,
    other: &dyn FatouCoordinate,
    class: &FormalClass,
    domain: &DomainSpec,
    which: Which,
    j: i32,
    cfg: &HornConfig,
) -> Result<HornMapFit> {
    cfg.validate()?;
    let (chart_petal, sign) = orbit_chart(which, j);
    if chart.petal() != chart_petal || other.petal() != PetalId::minus(j) {
        return Err(Error::Invalid(format!(
            "horn map {which:?} {j} needs Fatou coordinates on {chart_petal} and {}",
            PetalId::minus(j)
        )));
    }
    let Some((anchor, r, seeds)) = place_circle(class, domain, which, j, cfg)? else {
        let line = central_line(domain, horn_petal(which, j))?;
        let r = model_orbit_modulus(class, line.endpoint).max(f64::MIN_POSITIVE);
        return Ok(HornMapFit {
            j,
            which,
            h: GermSeries::identity(cfg.degree, r),
            resolved: false,
            c0: C64::new(0.0, 0.0),
            g: GermSeries::zero(cfg.degree - 1, r),
            radius: 0.0,
            anchor: C64::new(f64::NAN, f64::NAN),
            max_inversion_residual: 0.0,
            tangency_defect: 0.0,
        });
    };
    let ws = targets(psi_nf(class, anchor), r, sign, cfg.samples);
    let samples: Vec<(C64, f64)> = ws
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(&w, &seed)| {
            let (zeta, residual) = invert(class, chart, w, seed, cfg)?;
            let cross = psi_nf(class, zeta) + other.r(zeta)? - w;
            let g = match which {
                Which::Infty => cross,
                Which::Zero => -cross,
            };
            Ok((g, residual))
        })
        .collect::<Result<_>>()?;
    let q = cfg.samples as f64;
    let d = cfg.degree;
    let mut coeffs = vec![C64::new(0.0, 0.0); d];
    for (k, c) in coeffs.iter_mut().enumerate() {
        for (&(g, _), &w) in samples.iter().zip(&ws) {
            let tau = (C64::new(0.0, sign * 2.0 * PI) * w).exp();
            *c += g / tau.powi(k as i32);
        }
        *c /= q;
    }
    let c0 = coeffs[0];
    let g = GermSeries::new(coeffs[1..].to_vec(), r);
    let lambda = (C64::new(0.0, 2.0 * PI) * c0).exp();
    let tangent = h_from_g(&g, Which::Infty);
    let scaled = GermSeries::new(tangent.coeffs.iter().map(|c| c * lambda).collect(), r);
    let h = match which {
        Which::Infty => scaled,
        Which::Zero => scaled.inverse(),
    };
    let tangency_defect = (h.c1() - 1.0).norm();
    let max_inversion_residual = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(HornMapFit {
        j,
        which,
        h,
        resolved: true,
        c0,
        g,
        radius: r,
        anchor,
        max_inversion_residual,
        tangency_defect,
    })
}

/// All horn maps of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub sequence: HornMapSequence,
    pub fits: Vec<HornMapFit>,
}

fn extract_with<'a, F>(
    make: F,
    class: &FormalClass,
    domain: &DomainSpec,
    window: i32,
    cfg: &HornConfig,
) -> Result<Extraction>
where
    F: Fn(PetalId) -> Result<Box<dyn FatouCoordinate + 'a>>,
{
    let mut sequence = HornMapSequence::identity(window, cfg.degree);
    let mut fits = Vec::new();
    for j in -window..=window {
        let other = make(PetalId::minus(j))?;
        for which in [Which::Zero, Which::Infty] {
            let chart = make(orbit_chart(which, j).0)?;
            let fit = horn_maps_from_fatou(chart.as_ref(), other.as_ref(), class, domain, which, j, cfg)?;
            let mut pair = sequence.pair(j);
            match which {
                Which::Zero => pair.h0 = fit.h.clone(),
                Which::Infty => pair.hinf = fit.h.clone(),
            }
            sequence.entries.insert(j, pair);
            fits.push(fit);
        }
    }
    Ok(Extraction { sequence, fits })
}

/// Horn maps of a germ on `j ∈ [−window, window]` from orbit-sum Fatou coordinates.
pub fn extract_horn_maps<G: Germ + ?Sized>(
    germ: &G,
    class: &FormalClass,
    domain: &DomainSpec,
    window: i32,
    orbit: &OrbitConfig,
    cfg: &HornConfig,
) -> Result<Extraction> {
    orbit.validate()?;
    extract_with(
        |petal| Ok(Box::new(fatou_from_germ(germ, *class, petal, *orbit)?) as Box<dyn FatouCoordinate>),
        class,
        domain,
        window,
        cfg,
    )
}

/// Horn maps read directly off a realized atlas.
pub fn horn_maps_from_atlas(fatou: &FatouAtlas, cfg: &HornConfig) -> Result<Extraction> {
    extract_with(
        |petal| Ok(Box::new(AtlasFatou { fatou, petal }) as Box<dyn FatouCoordinate>),
        &fatou.class,
        &fatou.domain,
        fatou.window(),
        cfg,
    )
}

/// Per-coefficient comparison after equivalence normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientError {
    pub j: i32,
    pub which: Which,
    /// Power of `t`.
    pub k: usize,
    pub input: C64,
    pub extracted: C64,
    pub abs_error: f64,
    /// Error relative to `|input|`, or absolute when the input coefficient vanishes.
    pub rel_error: f64,
}

/// Raw cocycle coefficients of one extracted horn map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCocycle {
    pub j: i32,
    pub which: Which,
    pub c0: C64,
    /// `g₁, g₂, …` of the extracted cocycle.
    pub g: Vec<C64>,
    /// Same for the input.
    pub input_g: Vec<C64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundtripConfig {
    pub iteration: IterationConfig,
    pub orbit: OrbitConfig,
    pub horn: HornConfig,
    /// Tolerance of the equivalence search.
    pub tol: f64,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        Self {
            iteration: IterationConfig::default(),
            orbit: OrbitConfig::slow_decay(),
            horn: HornConfig::default(),
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub domain: DomainSpec,
    pub iteration_steps: usize,
    pub shrinks: usize,
    pub equivalent: bool,
    pub scalars: Option<EquivalenceScalars>,
    pub errors: Vec<CoefficientError>,
    /// Largest absolute coefficient error.
    pub max_error: f64,
    pub max_rel_error: f64,
    pub raw: Vec<RawCocycle>,
    /// Largest raw cocycle coefficient error against the input.
    pub max_raw_error: f64,
    pub max_inversion_residual: f64,
}

/// Compares extracted horn maps with the input, normalizing by the equivalence scalars.
pub fn compare_sequences(input: &HornMapSequence, extraction: &Extraction, tol: f64) -> Result<RoundtripComparison> {
    let scalars = equivalence_normalize(input, &extraction.sequence, tol);
    let mapped = scalars
        .as_ref()
        .map(|s| apply_equivalence(&extraction.sequence, s))
        .unwrap_or_else(|| extraction.sequence.clone());
    let mut errors = Vec::new();
    for j in input.indices() {
        for which in [Which::Zero, Which::Infty] {
            let a = input.get(j, which);
            let b = mapped.get(j, which);
            for k in 0..a.degree().min(b.degree()) {
                let abs_error = (a.coeffs[k] - b.coeffs[k]).norm();
                let scale = a.coeffs[k].norm();
                errors.push(CoefficientError {
                    j,
                    which,
                    k: k + 1,
                    input: a.coeffs[k],
                    extracted: b.coeffs[k],
                    abs_error,
                    rel_error: if scale > 0.0 { abs_error / scale } else { abs_error },
                });
            }
        }
    }
    let mut raw = Vec::new();
    for fit in &extraction.fits {
        let input_g = g_from_h(&input.get(fit.j, fit.which), fit.which)?;
        raw.push(RawCocycle {
            j: fit.j,
            which: fit.which,
            c0: fit.c0,
            g: fit.g.coeffs.clone(),
            input_g: input_g.coeffs,
            radius: fit.radius,
        });
    }
    let max_raw_error = raw
        .iter()
        .flat_map(|r| {
            let mut v: Vec<f64> = r.g.iter().zip(&r.input_g).map(|(a, b)| (a - b).norm()).collect();
            v.push(r.c0.norm());
            v
        })
        .fold(0.0, f64::max);
    Ok(RoundtripComparison {
        equivalent: scalars.is_some(),
        max_error: errors.iter().map(|e| e.abs_error).fold(0.0, f64::max),
        max_rel_error: errors.iter().map(|e| e.rel_error).fold(0.0, f64::max),
        scalars,
        errors,
        raw,
        max_raw_error,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripComparison {
    pub equivalent: bool,
    pub scalars: Option<EquivalenceScalars>,
    pub errors: Vec<CoefficientError>,
    /// Largest absolute coefficient error.
    pub max_error: f64,
    pub max_rel_error: f64,
    pub raw: Vec<RawCocycle>,
    pub max_raw_error: f64,
}

/// Realizes `moduli`, recovers the germ, extracts its horn maps from orbit sums
/// and compares them with the input.
pub fn roundtrip(
    moduli: &HornMapSequence,
    class: FormalClass,
    domain: DomainSpec,
    cfg: &RoundtripConfig,
) -> Result<RoundtripReport> {
    moduli.validate()?;
    let fatou = iterate_fatou(moduli, class, domain, &cfg.iteration)?;
    let steps = fatou.deltas.len();
    let shrinks = fatou.shrinks;
    let domain = fatou.domain;
    let germ = recover_germ(fatou);
    let extraction = extract_horn_maps(&germ, &class, &domain, moduli.window, &cfg.orbit, &cfg.horn)?;
    let cmp = compare_sequences(moduli, &extraction, cfg.tol)?;
    Ok(RoundtripReport {
        domain,
        iteration_steps: steps,
        shrinks,
        equivalent: cmp.equivalent,
        scalars: cmp.scalars,
        errors: cmp.errors,
        max_error: cmp.max_error,
        max_rel_error: cmp.max_rel_error,
        raw: cmp.raw,
        max_raw_error: cmp.max_raw_error,
        max_inversion_residual: extraction
            .fits
            .iter()
            .map(|f| f.max_inversion_residual)
            .fold(0.0, f64::max),
    })
}
