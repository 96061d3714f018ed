//! The formal class `(2, m, ρ)`, the explicit Fatou coordinate `Ψ_nf` of the
//! model, the model germ `f0` and prenormalization checks.
//!
//! `Ψ_nf(ζ) = A_m(ζ) − ζ + (ρ − m/2)·log ζ` where `A_m` is the constant-free
//! antiderivative of `e^w w^m`. With this log coefficient the time-1 map of
//! the model field is prenormalized, `f0(z) = z − z²ℓ^m + ρz³ℓ^{2m+1} + …`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::unit_rule;
use crate::series::KahanSum;
use crate::surface::{from_z, to_z};
use crate::C64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Below this modulus `A_{-1}` always uses its power series.
const EI_SERIES_RADIUS: f64 = 30.0;

/// Formal invariants with `α = 2` fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormalClass {
    pub m: i32,
    pub rho: f64,
}

impl FormalClass {
    pub fn new(m: i32, rho: f64) -> Self {
        Self { m, rho }
    }

    /// Coefficient of `log ζ` in `Ψ_nf`.
    pub fn log_coeff(&self) -> f64 {
        self.rho - f64::from(self.m) / 2.0
    }
}

/// Antiderivative of `e^w w^m` without additive constant.
pub fn antiderivative(m: i32, zeta: C64) -> C64 {
    if m >= 0 {
        // e^ζ Σ (−1)^i m!/(m−i)! ζ^{m−i}
        let mut falling = 1.0;
        let mut poly = zeta.powi(m);
        for i in 1..=m {
            falling *= f64::from(m - i + 1);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            poly += sign * falling * zeta.powi(m - i);
        }
        zeta.exp() * poly
    } else {
        let mut a = exp_integral(zeta);
        let e = zeta.exp();
        // A_{k} = (e^ζ ζ^{k+1} − A_{k+1})/(k+1) stepping k = −2, −3, …
        for k in (m..=-2).rev() {
            let kp1 = f64::from(k + 1);
            a = (e * zeta.powi(k + 1) - a) / kp1;
        }
        a
    }
}

/// `log ζ + Σ_{k≥1} ζ^k/(k·k!)`, an antiderivative of `e^ζ/ζ`.
pub fn exp_integral(zeta: C64) -> C64 {
    let r = zeta.norm();
    // The power series loses about e^{|ζ| − Re ζ} to cancellation.
    if r < EI_SERIES_RADIUS || (r - zeta.re < 18.0 && r < 700.0) {
        exp_integral_series(zeta)
    } else {
        exp_integral_asymptotic(zeta)
    }
}

fn exp_integral_series(zeta: C64) -> C64 {
    let mut sum = KahanSum::default();
    let mut term = C64::new(1.0, 0.0);
    for k in 1..4000u32 {
        term *= zeta / f64::from(k);
        let add = term / f64::from(k);
        sum.add(add);
        if f64::from(k) > zeta.norm() && add.norm() <= 1e-18 * sum.value().norm() {
            break;
        }
    }
    sum.value() + zeta.ln()
}

fn exp_integral_asymptotic(zeta: C64) -> C64 {
    let inv = zeta.inv();
    let mut series = C64::new(1.0, 0.0);
    let mut term = C64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..(zeta.norm() as usize) {
        term *= inv * k as f64;
        let t = term.norm();
        if t > last || t < 1e-18 {
            break;
        }
        last = t;
        series += term;
    }
    let stokes = if zeta.im > 0.0 {
        std::f64::consts::PI
    } else if zeta.im < 0.0 {
        -std::f64::consts::PI
    } else {
        0.0
    };
    zeta.exp() * inv * series + C64::new(-EULER_GAMMA, stokes)
}

/// `Ψ_nf(ζ)` on the principal branch of `log ζ`.
pub fn psi_nf(class: &FormalClass, zeta: C64) -> C64 {
    antiderivative(class.m, zeta) - zeta + class.log_coeff() * zeta.ln()
}

/// `Ψ_nf'(ζ) = e^ζ ζ^m − 1 + (ρ − m/2)/ζ`.
pub fn psi_nf_derivative(class: &FormalClass, zeta: C64) -> C64 {
    zeta.exp() * zeta.powi(class.m) - 1.0 + class.log_coeff() / zeta
}

fn gl8() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| unit_rule(8))
}

/// `Ψ_nf(ζ + Δ) − Ψ_nf(ζ)` with relative accuracy also for tiny `Δ`.
pub fn psi_nf_diff(class: &FormalClass, zeta: C64, delta: C64) -> C64 {
    if delta.norm() <= 0.5 {
        let mut acc = C64::new(0.0, 0.0);
        for &(s, w) in gl8() {
            acc += w * psi_nf_derivative(class, zeta + delta * s);
        }
        acc * delta
    } else {
        psi_nf(class, zeta + delta) - psi_nf(class, zeta)
    }
}

/// Newton solve of `Ψ_nf(ζ) = w` from `seed`.
pub fn psi_nf_inverse(class: &FormalClass, w: C64, seed: C64) -> Result<C64> {
    let tol = 1e-12 * w.norm().max(1.0);
    let mut zeta = seed;
    let mut res = psi_nf(class, zeta) - w;
    for _ in 0..100 {
        if res.norm() < tol {
            return Ok(zeta);
        }
        let mut step = res / psi_nf_derivative(class, zeta);
        if step.norm() > 2.0 {
            step *= 2.0 / step.norm();
        }
        zeta -= step;
        if !zeta.is_finite() {
            break;
        }
        res = psi_nf(class, zeta) - w;
    }
    if res.norm() < tol {
        Ok(zeta)
    } else {
        Err(Error::InversionFailure {
            last: zeta,
            residual: res.norm(),
        })
    }
}

/// Solves `Ψ_nf(ζ + Δ) − Ψ_nf(ζ) = shift` for the displacement `Δ`.
pub fn solve_displacement(class: &FormalClass, zeta: C64, shift: C64) -> Result<C64> {
    let mut delta = shift / psi_nf_derivative(class, zeta);
    for _ in 0..60 {
        let res = psi_nf_diff(class, zeta, delta) - shift;
        let step = res / psi_nf_derivative(class, zeta + delta);
        delta -= step;
        if !delta.is_finite() {
            break;
        }
        if step.norm() <= 1e-15 * delta.norm() {
            return Ok(delta);
        }
    }
    let res = psi_nf_diff(class, zeta, delta) - shift;
    if delta.is_finite() && res.norm() <= 1e-12 * shift.norm().max(1.0) {
        Ok(delta)
    } else {
        Err(Error::InversionFailure {
            last: zeta + delta,
            residual: res.norm(),
        })
    }
}

/// Time-1 map of the model field in the log chart.
pub fn f0(class: &FormalClass, zeta: C64) -> Result<C64> {
    Ok(zeta + solve_displacement(class, zeta, C64::new(1.0, 0.0))?)
}

pub fn f0_inverse(class: &FormalClass, zeta: C64) -> Result<C64> {
    Ok(zeta + solve_displacement(class, zeta, C64::new(-1.0, 0.0))?)
}

/// `(α−1)^{−m/(α−1)} · z^{1/(α−1)}` on the principal branch.
pub fn normalize_alpha(alpha: f64, m: i32, z: C64) -> Result<C64> {
    if !(alpha > 1.0) {
        return Err(Error::Invalid(format!("alpha must exceed 1, got {alpha}")));
    }
    let p = alpha - 1.0;
    Ok(p.powf(-f64::from(m) / p) * z.powf(1.0 / p))
}

/// A parabolic germ acting in the log chart.
pub trait Germ: Send + Sync {
    fn apply(&self, zeta: C64) -> Result<C64>;

    fn apply_inverse(&self, zeta: C64) -> Result<C64>;

    /// `Ψ_nf(f(ζ)) − Ψ_nf(ζ) − 1`.
    fn model_defect(&self, class: &FormalClass, zeta: C64) -> Result<C64> {
        let w = self.apply(zeta)?;
        Ok(psi_nf_diff(class, zeta, w - zeta) - 1.0)
    }

    /// Same as [`Germ::model_defect`] for the inverse germ, `Ψ_nf(f^{-1}(ζ)) − Ψ_nf(ζ) + 1`.
    fn inverse_model_defect(&self, class: &FormalClass, zeta: C64) -> Result<C64> {
        let w = self.apply_inverse(zeta)?;
        Ok(psi_nf_diff(class, zeta, w - zeta) + 1.0)
    }

    /// `(f^{±1}(ζ), defect)` in one evaluation, for orbit sums.
    fn orbit_step(&self, class: &FormalClass, zeta: C64, forward: bool) -> Result<(C64, C64)> {
        let (w, unit) = if forward {
            (self.apply(zeta)?, 1.0)
        } else {
            (self.apply_inverse(zeta)?, -1.0)
        };
        Ok((w, psi_nf_diff(class, zeta, w - zeta) - unit))
    }
}

/// The model `f0` itself.
#[derive(Debug, Clone, Copy)]
pub struct ModelGerm(pub FormalClass);

impl Germ for ModelGerm {
    fn apply(&self, zeta: C64) -> Result<C64> {
        f0(&self.0, zeta)
    }
    fn apply_inverse(&self, zeta: C64) -> Result<C64> {
        f0_inverse(&self.0, zeta)
    }
    fn model_defect(&self, _class: &FormalClass, _zeta: C64) -> Result<C64> {
        Ok(C64::new(0.0, 0.0))
    }
    fn inverse_model_defect(&self, _class: &FormalClass, _zeta: C64) -> Result<C64> {
        Ok(C64::new(0.0, 0.0))
    }
    fn orbit_step(&self, _class: &FormalClass, zeta: C64, forward: bool) -> Result<(C64, C64)> {
        let w = if forward { self.apply(zeta)? } else { self.apply_inverse(zeta)? };
        Ok((w, C64::new(0.0, 0.0)))
    }
}

/// Lifts a germ given in the `z` chart, `ζ ↦ ζ − log(f(z)/z)`.
pub struct ZGerm<F> {
    f: F,
}

impl<F> ZGerm<F>
where
    F: Fn(C64) -> C64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> Germ for ZGerm<F>
where
    F: Fn(C64) -> C64 + Send + Sync,
{
    fn apply(&self, zeta: C64) -> Result<C64> {
        let z = to_z(zeta);
        let fz = (self.f)(z);
        let w = zeta - (fz / z).ln();
        if w.is_finite() {
            Ok(w)
        } else {
            Err(Error::OutOfDomain { zeta })
        }
    }

    fn apply_inverse(&self, zeta: C64) -> Result<C64> {
        // f is a small perturbation of the identity in ζ, so the fixed-point map contracts.
        let mut w = zeta;
        for _ in 0..200 {
            let step = self.apply(w)? - zeta;
            w -= step;
            if step.norm() <= 1e-16 * w.norm() {
                return Ok(w);
            }
        }
        let residual = (self.apply(w)? - zeta).norm();
        if residual <= 1e-13 * zeta.norm() {
            Ok(w)
        } else {
            Err(Error::InversionFailure { last: w, residual })
        }
    }
}

/// Outcome of [`prenormalized_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrenormReport {
    /// Largest `|f(z) − z + z²ℓ^m − ρz³ℓ^{2m+1}|` on the grid.
    pub max_residual: f64,
    /// Largest residual divided by `|z³ℓ^{2m+2}|`.
    pub fitted_c: f64,
    pub pass: bool,
}

/// Compares a `z`-chart germ against the prenormalized form on `grid` (points `z`).
pub fn prenormalized_check<F>(f: F, class: &FormalClass, grid: &[C64], bound: f64) -> PrenormReport
where
    F: Fn(C64) -> C64,
{
    let mut max_residual = 0.0f64;
    let mut fitted_c = 0.0f64;
    for &z in grid {
        let l = from_z(z).inv();
        let lm = l.powi(class.m);
        let expected = z - z * z * lm + class.rho * z.powi(3) * l.powi(2 * class.m + 1);
        let res = ((f)(z) - expected).norm();
        max_residual = max_residual.max(res);
        fitted_c = fitted_c.max(res / (z.powi(3) * l.powi(2 * class.m + 2)).norm());
    }
    PrenormReport {
        max_residual,
        fitted_c,
        pass: fitted_c.is_finite() && fitted_c <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn rk4_time_one(class: &FormalClass, z0: C64, steps: usize) -> C64 {
        let field = |z: C64| {
            let l = from_z(z).inv();
            let lm = l.powi(class.m);
            let c = class.log_coeff();
            -z * z * lm / (1.0 - z * lm + c * z * lm * l)
        };
        let h = 1.0 / steps as f64;
        let mut z = z0;
        for _ in 0..steps {
            let k1 = field(z);
            let k2 = field(z + 0.5 * h * k1);
            let k3 = field(z + 0.5 * h * k2);
            let k4 = field(z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        z
    }

    #[test]
    fn psi_nf_examples() {
        let c0 = FormalClass::new(0, 0.0);
        assert_abs_diff_eq!(psi_nf(&c0, C64::from(1.0)).re, E - 1.0, epsilon = 1e-14);
        let c1 = FormalClass::new(1, 0.0);
        assert_abs_diff_eq!(psi_nf(&c1, C64::from(1.0)).re, -1.0, epsilon = 1e-14);
        let v = psi_nf(&c0, C64::from(10f64.ln()));
        assert_abs_diff_eq!(v.re, 10.0 - 10f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn antiderivative_against_quadrature() {
        // ∫_{ζ0}^{ζ1} e^w w^m dw along the segment, by adaptive double-exponential quadrature.
        for m in [-3, -2, -1, 0, 1, 2, 4] {
            let (z0, z1) = (C64::new(1.5, -0.4), C64::new(4.0, 2.5));
            let d = z1 - z0;
            let part = |f: &dyn Fn(C64) -> f64| {
                quadrature::double_exponential::integrate(|s| f(z0 + d * s), 0.0, 1.0, 1e-14).integral
            };
            let integrand = |w: C64| w.exp() * w.powi(m) * d;
            let exact = C64::new(part(&|w| integrand(w).re), part(&|w| integrand(w).im));
            let got = antiderivative(m, z1) - antiderivative(m, z0);
            assert!((got - exact).norm() < 1e-10 * exact.norm().max(1.0), "m={m}: {got} vs {exact}");
        }
    }

    #[test]
    fn exp_integral_branches_agree() {
        for arg in [0.0f64, 0.2, -0.5, 0.8] {
            let z = C64::from_polar(35.0, arg);
            let a = exp_integral_series(z);
            let b = exp_integral_asymptotic(z);
            assert!((a - b).norm() < 1e-10 * a.norm(), "arg={arg}");
        }
    }

    #[test]
    fn inverse_examples() {
        let c0 = FormalClass::new(0, 0.0);
        let w = psi_nf(&c0, C64::from(2.0));
        let z = psi_nf_inverse(&c0, w, C64::from(2.1)).unwrap();
        assert!((z - 2.0).norm() < 1e-12);
        let z = psi_nf_inverse(&c0, C64::from(E), C64::from(1.0)).unwrap();
        // scalar bisection oracle for e^x − x = e
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid.exp() - mid < E {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(z.re, lo, epsilon = 1e-12);
        let z = psi_nf_inverse(&c0, C64::from(2.0), C64::from(1.0)).unwrap();
        assert_abs_diff_eq!(z.re, 1.1462, epsilon = 1e-4);
        let c = FormalClass::new(1, 0.5);
        let p = C64::new(3.0, 1.0);
        let back = psi_nf_inverse(&c, psi_nf(&c, p), p).unwrap();
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn f0_against_rk4_and_series() {
        for (m, rho) in [(0, 0.0), (0, 0.3), (1, 0.3), (-1, 0.3), (2, -0.2)] {
            let class = FormalClass::new(m, rho);
            for zeta in [C64::new(4.0, 0.0), C64::new(5.0, 1.0), C64::new(6.0, -2.0)] {
                let w = f0(&class, zeta).unwrap();
                let abel = psi_nf(&class, w) - psi_nf(&class, zeta) - 1.0;
                assert!(abel.norm() < 1e-10, "m={m} abel {abel}");
                let zr = rk4_time_one(&class, to_z(zeta), 2000);
                assert!((to_z(w) - zr).norm() < 1e-8 * to_z(zeta).norm(), "m={m} rk4");
            }
        }
        let class = FormalClass::new(0, 0.0);
        let w = f0(&class, C64::from(100f64.ln())).unwrap();
        assert!((to_z(w) - (0.01 - 1e-4)).norm() < 2e-6);
    }

    #[test]
    fn alpha_normalization() {
        let z = C64::new(0.3, 0.1);
        assert!((normalize_alpha(2.0, 3, z).unwrap() - z).norm() < 1e-15);
        assert_abs_diff_eq!(normalize_alpha(3.0, 0, C64::from(0.04)).unwrap().re, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(
            normalize_alpha(3.0, 1, C64::from(0.04)).unwrap().re,
            0.2 / 2f64.sqrt(),
            epsilon = 1e-15
        );
        assert!(normalize_alpha(1.0, 0, z).is_err());
    }

    #[test]
    fn prenormalization() {
        let grid: Vec<C64> = (1..=20)
            .flat_map(|k| {
                let r = 0.05 * 0.7f64.powi(k);
                (-2..=2).map(move |a| C64::from_polar(r, 0.3 * f64::from(a)))
            })
            .collect();
        for (m, rho) in [(0, 0.0), (0, 0.3), (1, 0.3), (-1, 0.3)] {
            let class = FormalClass::new(m, rho);
            let germ = ModelGerm(class);
            let f = |z: C64| to_z(germ.apply(from_z(z)).unwrap());
            let rep = prenormalized_check(f, &class, &grid, 10.0);
            assert!(rep.pass, "m={m} rho={rho}: {rep:?}");
        }
        let class = FormalClass::new(0, 0.0);
        let small: Vec<C64> = grid.iter().map(|z| z * 2.0).collect();
        let rep = prenormalized_check(|z| z - z * z, &class, &small, 2.0);
        assert!(rep.pass && rep.fitted_c <= 2.0);
        let rep = prenormalized_check(|z| z, &class, &grid, 10.0);
        assert!(!rep.pass);
    }

    #[test]
    fn zgerm_matches_model() {
        let class = FormalClass::new(0, 0.0);
        let g = ZGerm::new(|z: C64| z - z * z);
        let zeta = C64::new(5.0, 0.5);
        let w = g.apply(zeta).unwrap();
        assert!((g.apply_inverse(w).unwrap() - zeta).norm() < 1e-13);
        let d = g.model_defect(&class, zeta).unwrap();
        assert!(d.norm() < 1e-2);
    }

    proptest! {
        #[test]
        fn real_trace(x in 0.5f64..20.0, m in -2i32..3, rho in -1.0f64..1.0) {
            let v = psi_nf(&FormalClass::new(m, rho), C64::from(x));
            prop_assert!(v.im.abs() <= 1e-12 * v.norm().max(1.0));
        }

        #[test]
        fn inverse_roundtrip(re in 2.0f64..12.0, im in -8.0f64..8.0, m in -1i32..2, rho in 0.0f64..0.5) {
            let class = FormalClass::new(m, rho);
            let p = C64::new(re, im);
            let seed = p + C64::new(0.05, -0.05);
            let back = psi_nf_inverse(&class, psi_nf(&class, p), seed).unwrap();
            prop_assert!((back - p).norm() < 1e-10);
        }

        #[test]
        fn diff_is_consistent(re in 2.0f64..10.0, im in -6.0f64..6.0, dre in -0.3f64..0.3, dim in -0.3f64..0.3) {
            let class = FormalClass::new(1, 0.3);
            let z = C64::new(re, im);
            let d = C64::new(dre, dim);
            let direct = psi_nf(&class, z + d) - psi_nf(&class, z);
            let diff = psi_nf_diff(&class, z, d);
            prop_assert!((direct - diff).norm() <= 1e-11 * psi_nf(&class, z).norm().max(1.0));
        }
    }
}
