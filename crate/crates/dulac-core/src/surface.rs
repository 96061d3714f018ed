//! Standard quadratic and linear domains in the logarithmic chart `ζ = −log z`,
//! their boundaries, and the strip description of the petal cover.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-12;

/// `z = e^{−ζ}`.
pub fn to_z(zeta: C64) -> C64 {
    (-zeta).exp()
}

/// `ζ = −log z` on the principal branch.
pub fn from_z(z: C64) -> C64 {
    -z.ln()
}

/// `ℓ = 1/ζ`.
pub fn ell(zeta: C64) -> C64 {
    zeta.inv()
}

/// Geometry of a standard domain in the log chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainSpec {
    /// `φ(ℂ⁺ ∖ K̄(0,R)) + shift` with `φ(x) = x + C(x+1)^{1/2}`.
    Quadratic {
        #[serde(rename = "C")]
        c: f64,
        #[serde(rename = "R")]
        r: f64,
        /// Horizontal translation applied when the domain is shrunk.
        #[serde(default, skip_serializing_if = "is_zero")]
        shift: f64,
    },
    /// `b − a·Re ζ < Im ζ < −b + a·Re ζ`.
    Linear { a: f64, b: f64 },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl DomainSpec {
    pub fn quadratic(c: f64, r: f64) -> Self {
        DomainSpec::Quadratic { c, r, shift: 0.0 }
    }

    pub fn linear(a: f64, b: f64) -> Self {
        DomainSpec::Linear { a, b }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DomainSpec::Quadratic { c, r, shift } => {
                c > 0.0 && r > 0.0 && shift.is_finite() && c.is_finite() && r.is_finite()
            }
            DomainSpec::Linear { a, b } => a > 0.0 && b >= 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad domain parameters {self:?}")))
        }
    }

    /// The same domain with its left boundary moved right by `dx`.
    pub fn shifted(&self, dx: f64) -> Self {
        match *self {
            DomainSpec::Quadratic { c, r, shift } => DomainSpec::Quadratic {
                c,
                r,
                shift: shift + dx,
            },
            DomainSpec::Linear { a, b } => DomainSpec::Linear { a, b: b + a * dx },
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, DomainSpec::Linear { .. })
    }

    /// Strict membership.
    pub fn contains(&self, zeta: C64) -> Result<bool> {
        match *self {
            DomainSpec::Linear { a, b } => {
                let bound = -b + a * zeta.re;
                Ok(zeta.im < bound && zeta.im > -bound)
            }
            DomainSpec::Quadratic { c, r, shift } => {
                let w = zeta - shift;
                // Re φ(x) > Re x > 0 on the preimage, so the left half-plane is outside.
                if w.re <= 0.0 {
                    return Ok(false);
                }
                let x = phi_inverse(c, w)?;
                Ok(x.re > 0.0 && x.norm() > r)
            }
        }
    }

    /// Real part of the boundary point at height `y`.
    pub fn boundary_re(&self, y: f64) -> f64 {
        match *self {
            DomainSpec::Linear { a, b } => (b + y.abs()) / a,
            DomainSpec::Quadratic { .. } => self.boundary_point(self.boundary_param(y)).re,
        }
    }

    /// Boundary parameter `t` of the point at height `y`.
    ///
    /// For the linear kind the parameter is the height itself.
    pub fn boundary_param(&self, y: f64) -> f64 {
        match *self {
            DomainSpec::Linear { .. } => y,
            DomainSpec::Quadratic { .. } => {
                let im = |t: f64| self.boundary_point(t).im - y;
                let mut lo = y.min(0.0) - 1.0;
                let mut hi = y.max(0.0) + 1.0;
                while im(lo) > 0.0 {
                    lo = 2.0 * lo - 1.0;
                }
                while im(hi) < 0.0 {
                    hi = 2.0 * hi + 1.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if im(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Boundary curve `Γ(t)`, increasing in height.
    pub fn boundary_point(&self, t: f64) -> C64 {
        match *self {
            DomainSpec::Linear { a, b } => C64::new((b + t.abs()) / a, t),
            DomainSpec::Quadratic { c, r, shift } => phi(c, preimage_boundary(r, t)) + shift,
        }
    }

    /// `Γ'(t)`.
    pub fn boundary_derivative(&self, t: f64) -> C64 {
        match *self {
            DomainSpec::Linear { a, .. } => C64::new(t.signum() / a, 1.0),
            DomainSpec::Quadratic { c, r, .. } => {
                let x = preimage_boundary(r, t);
                let dx = if t.abs() >= r {
                    C64::i()
                } else {
                    C64::i() * FRAC_PI_2 / r * x
                };
                phi_derivative(c, x) * dx
            }
        }
    }

    /// Boundary portion between heights `y0` and `y1`, split where the curve is not smooth.
    pub fn boundary_arc(&self, y0: f64, y1: f64) -> Vec<ArcPiece> {
        let t0 = self.boundary_param(y0);
        let t1 = self.boundary_param(y1);
        let kinks: Vec<f64> = match *self {
            DomainSpec::Linear { .. } => vec![0.0],
            DomainSpec::Quadratic { r, .. } => vec![-r, r],
        };
        let (lo, hi) = (t0.min(t1), t0.max(t1));
        let mut cuts = vec![t0];
        let mut inner: Vec<f64> = kinks.into_iter().filter(|&k| k > lo && k < hi).collect();
        if t1 < t0 {
            inner.reverse();
        }
        cuts.extend(inner);
        cuts.push(t1);
        cuts.windows(2)
            .map(|w| ArcPiece {
                domain: *self,
                t0: w[0],
                t1: w[1],
            })
            .collect()
    }

    /// Left end `Re ζ` of the domain on the real axis.
    pub fn real_floor(&self) -> f64 {
        self.boundary_re(0.0)
    }
}

/// A smooth piece of the domain boundary, `t ∈ [t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcPiece {
    pub domain: DomainSpec,
    pub t0: f64,
    pub t1: f64,
}

impl ArcPiece {
    pub fn point(&self, t: f64) -> C64 {
        self.domain.boundary_point(t)
    }

    pub fn derivative(&self, t: f64) -> C64 {
        self.domain.boundary_derivative(t)
    }
}

/// `φ(x) = x + C(x+1)^{1/2}`.
pub fn phi(c: f64, x: C64) -> C64 {
    x + c * (x + 1.0).sqrt()
}

pub fn phi_derivative(c: f64, x: C64) -> C64 {
    1.0 + c / (2.0 * (x + 1.0).sqrt())
}

/// Newton inversion of `φ`, seeded at `w − C√w`.
pub fn phi_inverse(c: f64, w: C64) -> Result<C64> {
    let mut x = w - c * w.sqrt();
    for _ in 0..NEWTON_MAX_ITER {
        let res = phi(c, x) - w;
        if res.norm() <= NEWTON_TOL * (1.0 + w.norm()) {
            return Ok(x);
        }
        let step = res / phi_derivative(c, x);
        x -= step;
        if !x.is_finite() {
            break;
        }
    }
    let res = phi(c, x) - w;
    if res.norm() <= NEWTON_TOL * (1.0 + w.norm()) {
        Ok(x)
    } else {
        Err(Error::IndeterminateBoundary { zeta: w })
    }
}

fn preimage_boundary(r: f64, t: f64) -> C64 {
    if t.abs() >= r {
        C64::new(0.0, t)
    } else {
        C64::from_polar(r, FRAC_PI_2 * t / r)
    }
}

/// Which of the four petal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PetalKind {
    Plus,
    Minus,
    Zero,
    Infty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PetalId {
    pub j: i32,
    pub kind: PetalKind,
}

impl PetalId {
    pub fn plus(j: i32) -> Self {
        Self { j, kind: PetalKind::Plus }
    }
    pub fn minus(j: i32) -> Self {
        Self { j, kind: PetalKind::Minus }
    }
    pub fn zero(j: i32) -> Self {
        Self { j, kind: PetalKind::Zero }
    }
    pub fn infty(j: i32) -> Self {
        Self { j, kind: PetalKind::Infty }
    }

    /// Height of the strip center.
    pub fn center(&self) -> f64 {
        let j = f64::from(self.j);
        match self.kind {
            PetalKind::Plus => 2.0 * j * PI,
            PetalKind::Minus => (2.0 * j - 1.0) * PI,
            PetalKind::Zero => (4.0 * j - 3.0) * FRAC_PI_2,
            PetalKind::Infty => (4.0 * j - 1.0) * FRAC_PI_2,
        }
    }

    pub fn half_width(&self) -> f64 {
        match self.kind {
            PetalKind::Plus | PetalKind::Minus => PI,
            PetalKind::Zero | PetalKind::Infty => FRAC_PI_2,
        }
    }

    pub fn is_intersection(&self) -> bool {
        matches!(self.kind, PetalKind::Zero | PetalKind::Infty)
    }

    /// The two big petals whose overlap this intersection petal is, lower one first.
    pub fn parents(&self) -> Option<(PetalId, PetalId)> {
        match self.kind {
            PetalKind::Zero => Some((PetalId::plus(self.j - 1), PetalId::minus(self.j))),
            PetalKind::Infty => Some((PetalId::minus(self.j), PetalId::plus(self.j))),
            _ => None,
        }
    }

    /// Whether `y` lies in the open strip shrunk by `margin` on each side.
    pub fn strip_contains(&self, y: f64, margin: f64) -> bool {
        (y - self.center()).abs() < self.half_width() - margin
    }
}

impl fmt::Display for PetalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.kind {
            PetalKind::Plus => "+",
            PetalKind::Minus => "-",
            PetalKind::Zero => "0",
            PetalKind::Infty => "inf",
        };
        write!(f, "V{s}[{}]", self.j)
    }
}

impl FromStr for PetalId {
    type Err = Error;

    /// `plus:j`, `minus:j`, `zero:j` or `infty:j`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("petal must look like plus:0, got {s:?}"));
        let (kind, j) = s.split_once(':').ok_or_else(bad)?;
        let j: i32 = j.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "plus" => Ok(PetalId::plus(j)),
            "minus" => Ok(PetalId::minus(j)),
            "zero" => Ok(PetalId::zero(j)),
            "infty" => Ok(PetalId::infty(j)),
            _ => Err(bad()),
        }
    }
}

impl FromStr for DomainSpec {
    type Err = Error;

    /// `linear:a,b` or `quadratic:C,R`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("domain must look like linear:2,0 or quadratic:1,1, got {s:?}"));
        let (kind, params) = s.split_once(':').ok_or_else(bad)?;
        let (p, q) = params.split_once(',').ok_or_else(bad)?;
        let p: f64 = p.trim().parse().map_err(|_| bad())?;
        let q: f64 = q.trim().parse().map_err(|_| bad())?;
        let d = match kind.trim() {
            "linear" => DomainSpec::linear(p, q),
            "quadratic" => DomainSpec::quadratic(p, q),
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Membership in the petal strip (shrunk by `margin`) intersected with the domain.
///
/// Points where quadratic membership is undetermined count as outside.
pub fn petal_contains(domain: &DomainSpec, petal: PetalId, zeta: C64, margin: f64) -> bool {
    petal.strip_contains(zeta.im, margin) && domain.contains(zeta).unwrap_or(false)
}

/// Half-line bisecting an intersection petal, starting on the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfLine {
    pub height: f64,
    pub x_start: f64,
    /// Singular endpoint `x_start + i·height`.
    pub endpoint: C64,
}

impl HalfLine {
    pub fn new(height: f64, x_start: f64) -> Self {
        Self {
            height,
            x_start,
            endpoint: C64::new(x_start, height),
        }
    }

    pub fn at(&self, x: f64) -> C64 {
        C64::new(x, self.height)
    }
}

pub fn central_line(domain: &DomainSpec, petal: PetalId) -> Result<HalfLine> {
    if !petal.is_intersection() {
        return Err(Error::NotIntersectionPetal { petal });
    }
    let height = petal.center();
    let x_start = domain.boundary_re(height);
    if !x_start.is_finite() {
        return Err(Error::EmptyLine { petal });
    }
    Ok(HalfLine::new(height, x_start))
}
