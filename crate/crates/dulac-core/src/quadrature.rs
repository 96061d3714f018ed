//! Composite Gauss-Legendre contours with cached integrand values.
//!
//! A [`Contour`] stores, per panel, the integrand values at 16 Gauss nodes
//! and their Legendre coefficients. The coefficients give the integrand at
//! arbitrary points of the panel, which is what near-singular refinement of
//! Cauchy kernels needs.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::series::KahanSum;
use crate::surface::DomainSpec;
use crate::C64;

pub const ORDER: usize = 16;
const MAX_SUBDIVISION: usize = 48;

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub fn unit_rule(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("positive order"));
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

struct Rule {
    /// Nodes on `[−1, 1]`.
    x: [f64; ORDER],
    w: [f64; ORDER],
    /// `P_k(x_i)·(2k+1)/2·w_i`, the discrete Legendre transform.
    transform: [[f64; ORDER]; ORDER],
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let pairs = unit_rule(ORDER);
        let mut x = [0.0; ORDER];
        let mut w = [0.0; ORDER];
        for (i, &(xi, wi)) in pairs.iter().enumerate() {
            x[i] = 2.0 * xi - 1.0;
            w[i] = 2.0 * wi;
        }
        let mut transform = [[0.0; ORDER]; ORDER];
        for i in 0..ORDER {
            let p = legendre_values(x[i]);
            for k in 0..ORDER {
                transform[k][i] = p[k] * (2.0 * k as f64 + 1.0) / 2.0 * w[i];
            }
        }
        Rule { x, w, transform }
    })
}

fn legendre_values(x: f64) -> [f64; ORDER] {
    let mut p = [0.0; ORDER];
    p[0] = 1.0;
    p[1] = x;
    for k in 1..ORDER - 1 {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
    }
    p
}

/// Curve carrying a contour, parametrized by a real `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Path {
    /// `w = t + i·height`.
    Horizontal { height: f64 },
    /// `w = Γ(t)`, the domain boundary.
    Boundary(DomainSpec),
}

impl Path {
    pub fn point(&self, t: f64) -> C64 {
        match self {
            Path::Horizontal { height } => C64::new(t, *height),
            Path::Boundary(d) => d.boundary_point(t),
        }
    }

    pub fn derivative(&self, t: f64) -> C64 {
        match self {
            Path::Horizontal { .. } => C64::new(1.0, 0.0),
            Path::Boundary(d) => d.boundary_derivative(t),
        }
    }
}

/// One Gauss panel over `t ∈ [ta, tb]` (possibly `tb < ta`).
#[derive(Debug, Clone)]
pub struct Panel {
    pub ta: f64,
    pub tb: f64,
    pub points: [C64; ORDER],
    /// Quadrature weight times `dw/dt`.
    pub dw: [C64; ORDER],
    pub values: [C64; ORDER],
    coeffs: [C64; ORDER],
    ends: (C64, C64),
    path: Path,
}

impl Panel {
    fn build<F>(path: &Path, ta: f64, tb: f64, f: &F) -> Panel
    where
        F: Fn(C64) -> C64 + Sync,
    {
        let r = rule();
        let half = 0.5 * (tb - ta);
        let mid = 0.5 * (ta + tb);
        let mut points = [C64::new(0.0, 0.0); ORDER];
        let mut dw = [C64::new(0.0, 0.0); ORDER];
        for i in 0..ORDER {
            let t = mid + half * r.x[i];
            points[i] = path.point(t);
            dw[i] = path.derivative(t) * (r.w[i] * half);
        }
        let vals: Vec<C64> = points.par_iter().map(|&p| f(p)).collect();
        let mut values = [C64::new(0.0, 0.0); ORDER];
        values.copy_from_slice(&vals);
        let mut coeffs = [C64::new(0.0, 0.0); ORDER];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            *ck = (0..ORDER).map(|i| r.transform[k][i] * values[i]).sum();
        }
        Panel {
            ta,
            tb,
            points,
            dw,
            values,
            coeffs,
            ends: (path.point(ta), path.point(tb)),
            path: *path,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Whether the last two Legendre coefficients are below `rel` of the panel's scale.
    fn resolved(&self, rel: f64) -> bool {
        let scale = self.max_abs();
        scale == 0.0 || self.coeffs[ORDER - 1].norm() + self.coeffs[ORDER - 2].norm() <= rel * scale
    }

    /// Integrand at local coordinate `s ∈ [−1, 1]` from the Legendre expansion.
    pub fn interpolate(&self, s: f64) -> C64 {
        let p = legendre_values(s);
        self.coeffs.iter().zip(p.iter()).map(|(c, pk)| c * pk).sum()
    }

    fn chord(&self) -> f64 {
        (self.ends.1 - self.ends.0).norm()
    }

    fn distance(&self, zeta: C64) -> f64 {
        let seg = segment_distance(self.ends.0, self.ends.1, zeta);
        let nodes = self
            .points
            .iter()
            .map(|p| (p - zeta).norm())
            .fold(f64::INFINITY, f64::min);
        seg.min(nodes)
    }
}

fn segment_distance(a: C64, b: C64, p: C64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a) * d.conj()).re / len2;
    (p - (a + d * s.clamp(0.0, 1.0))).norm()
}

/// Building parameters for contours.
#[derive(Debug, Clone, Copy)]
pub struct ContourOptions {
    /// Initial panel length in the parameter.
    pub panel_length: f64,
    /// Relative Legendre-tail tolerance for accepting a panel.
    pub rel_tol: f64,
    /// Smallest panel length before a panel is accepted unresolved.
    pub min_length: f64,
    /// Half-lines stop once panel values fall below this fraction of the running maximum.
    pub truncation: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self {
            panel_length: 0.5,
            rel_tol: 1e-13,
            min_length: 1e-7,
            truncation: 1e-20,
        }
    }
}

/// A cached contour integral.
#[derive(Debug, Clone)]
pub struct Contour {
    pub path: Path,
    pub panels: Vec<Panel>,
    /// Estimated size of the neglected part beyond the last panel.
    pub tail: f64,
    /// Number of panels accepted without meeting the tolerance.
    pub unresolved: usize,
}

impl Contour {
    /// Horizontal half-line from `x0` to at most `x0 + max_len`, truncated once values are negligible.
    pub fn half_line<F>(height: f64, x0: f64, max_len: f64, opts: &ContourOptions, f: &F) -> Contour
    where
        F: Fn(C64) -> C64 + Sync,
    {
        let path = Path::Horizontal { height };
        let end = x0 + max_len;
        let mut panels: Vec<Panel> = Vec::new();
        let mut unresolved = 0;
        let mut scale = 0.0f64;
        let mut a = x0;
        let mut h = opts.panel_length;
        let mut tail = 0.0;
        while a < end {
            let mut len = h.min(end - a);
            let panel = loop {
                let p = Panel::build(&path, a, a + len, f);
                if p.resolved(opts.rel_tol) {
                    break p;
                }
                if len <= opts.min_length {
                    unresolved += 1;
                    break p;
                }
                len *= 0.5;
            };
            let size = panel.max_abs();
            scale = scale.max(size);
            a += len;
            h = (2.0 * len).min(opts.panel_length);
            let negligible = size <= opts.truncation * scale;
            let last_len = len;
            panels.push(panel);
            if negligible {
                tail = size * last_len;
                break;
            }
            if a >= end {
                // Truncated by length: bound the rest by the last panel's decay.
                let n = panels.len();
                let last = panels[n - 1].values[ORDER - 1].norm();
                let prev = if n > 1 {
                    panels[n - 2].values[ORDER - 1].norm()
                } else {
                    panels[n - 1].values[0].norm()
                };
                let ratio = if prev > 0.0 { last / prev } else { 0.0 };
                tail = if ratio < 1.0 {
                    last * last_len / (1.0 - ratio)
                } else {
                    f64::INFINITY
                };
            }
        }
        Contour {
            path,
            panels,
            tail,
            unresolved,
        }
    }

    /// Finite piece `t ∈ [t0, t1]` of `path`, refined by bisection.
    pub fn segment<F>(path: Path, t0: f64, t1: f64, opts: &ContourOptions, f: &F) -> Contour
    where
        F: Fn(C64) -> C64 + Sync,
    {
        let mut panels = Vec::new();
        let mut unresolved = 0;
        if t0 == t1 {
            return Contour {
                path,
                panels,
                tail: 0.0,
                unresolved,
            };
        }
        let n0 = ((t1 - t0).abs() / opts.panel_length).ceil().max(1.0) as usize;
        let mut stack: Vec<(f64, f64)> = (0..n0)
            .rev()
            .map(|k| {
                let a = t0 + (t1 - t0) * k as f64 / n0 as f64;
                let b = t0 + (t1 - t0) * (k + 1) as f64 / n0 as f64;
                (a, b)
            })
            .collect();
        while let Some((a, b)) = stack.pop() {
            let p = Panel::build(&path, a, b, f);
            if p.resolved(opts.rel_tol) {
                panels.push(p);
            } else if (b - a).abs() <= opts.min_length {
                unresolved += 1;
                panels.push(p);
            } else {
                let m = 0.5 * (a + b);
                stack.push((m, b));
                stack.push((a, m));
            }
        }
        Contour {
            path,
            panels,
            tail: 0.0,
            unresolved,
        }
    }

    pub fn concat(mut self, other: Contour) -> Contour {
        self.tail += other.tail;
        self.unresolved += other.unresolved;
        self.panels.extend(other.panels);
        self
    }

    /// Whether every cached integrand value is finite.
    pub fn is_finite(&self) -> bool {
        self.panels.iter().all(|p| p.values.iter().all(|v| v.is_finite()))
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    /// Node count.
    pub fn len(&self) -> usize {
        self.panels.len() * ORDER
    }

    /// `∫ G(w) dw`.
    pub fn integral(&self) -> C64 {
        self.moment(0)
    }

    /// `∫ G(w) w^p dw`.
    pub fn moment(&self, p: i32) -> C64 {
        let mut s = KahanSum::default();
        for panel in &self.panels {
            for i in 0..ORDER {
                s.add(panel.values[i] * panel.dw[i] * panel.points[i].powi(p));
            }
        }
        s.value()
    }

    /// `∫ G(w)/(w − ζ) dw` with panel subdivision near `ζ`.
    pub fn cauchy(&self, zeta: C64) -> Result<C64> {
        let mut s = KahanSum::default();
        for panel in &self.panels {
            let d = panel.distance(zeta);
            let chord = panel.chord();
            if d >= 2.0 * chord {
                for i in 0..ORDER {
                    if panel.values[i] != C64::new(0.0, 0.0) {
                        s.add(panel.values[i] * panel.dw[i] / (panel.points[i] - zeta));
                    }
                }
            } else {
                if d <= 1e-13 * chord.max(1e-300) {
                    return Err(Error::TooClose { zeta, distance: d });
                }
                if panel.max_abs() == 0.0 {
                    continue;
                }
                Self::refine(panel, -1.0, 1.0, zeta, 0, &mut s);
            }
        }
        Ok(s.value())
    }

    fn refine(panel: &Panel, s0: f64, s1: f64, zeta: C64, depth: usize, acc: &mut KahanSum) {
        let r = rule();
        let t = |s: f64| 0.5 * (panel.ta + panel.tb) + 0.5 * (panel.tb - panel.ta) * s;
        let path = &panel.path;
        let a = path.point(t(s0));
        let b = path.point(t(s1));
        let chord = (b - a).norm();
        let sm = 0.5 * (s0 + s1);
        let dist = segment_distance(a, b, zeta).min((path.point(t(sm)) - zeta).norm());
        if dist >= 2.0 * chord || depth >= MAX_SUBDIVISION {
            let half = 0.5 * (s1 - s0);
            let dt = 0.5 * (panel.tb - panel.ta);
            for i in 0..ORDER {
                let s = sm + half * r.x[i];
                let w = path.point(t(s));
                let g = panel.interpolate(s);
                let dw = path.derivative(t(s)) * (r.w[i] * half * dt);
                acc.add(g * dw / (w - zeta));
            }
        } else {
            Self::refine(panel, s0, sm, zeta, depth + 1, acc);
            Self::refine(panel, sm, s1, zeta, depth + 1, acc);
        }
    }

    /// Samples `(w, G(w))` at all nodes, for export and diagnostics.
    pub fn nodes(&self) -> impl Iterator<Item = (C64, C64)> + '_ {
        self.panels
            .iter()
            .flat_map(|p| p.points.iter().copied().zip(p.values.iter().copied()))
    }
}
