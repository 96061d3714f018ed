//! log-Gevrey remainder bounds in `ℓ = 1/ζ`, conformance tests for computed
//! remainders and flatness fits for cocycle components.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::C64;

/// `m^{−n}·(log n)^n·e^{−n/log n}`, without the `|ℓ|^n` factor.
pub fn log_gevrey_bound(n: usize, m: f64) -> f64 {
    assert!(n >= 2, "log-Gevrey bound needs n >= 2");
    let x = n as f64;
    let l = x.ln();
    (x * (l.ln() - m.ln()) - x / l).exp()
}

/// The weaker quadratic-domain shape `m^{−2n}·e^{−2n/log 2n}·(log 2n)^{2n}`.
pub fn quadratic_weak_bound(n: usize, m: f64) -> f64 {
    assert!(n >= 2, "quadratic bound needs n >= 2");
    let x = 2.0 * n as f64;
    let l = x.ln();
    (x * (l.ln() - m.ln()) - x / l).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    LogGevrey,
    QuadraticWeak,
}

impl BoundKind {
    pub fn eval(self, n: usize, m: f64) -> f64 {
        match self {
            BoundKind::LogGevrey => log_gevrey_bound(n, m),
            BoundKind::QuadraticWeak => quadratic_weak_bound(n, m),
        }
    }
}

/// A strip `|Im ζ| ≤ half_height`, `Re ζ ∈ [re_min, re_max]`, i.e. a cusp in `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubCusp {
    pub half_height: f64,
    pub re_min: f64,
    pub re_max: f64,
}

impl SubCusp {
    /// `nx × ny` points, logarithmically spaced in `Re ζ`.
    pub fn samples(&self, nx: usize, ny: usize) -> Vec<C64> {
        let mut out = Vec::with_capacity(nx * ny);
        let (a, b) = (self.re_min.ln(), self.re_max.ln());
        for i in 0..nx {
            let x = (a + (b - a) * i as f64 / (nx.max(2) - 1) as f64).exp();
            for k in 0..ny {
                let y = if ny == 1 {
                    0.0
                } else {
                    -self.half_height + 2.0 * self.half_height * k as f64 / (ny - 1) as f64
                };
                out.push(C64::new(x, y));
            }
        }
        out
    }
}

/// Three nested cusps inside the central strip of a plus petal.
pub fn default_subcusps() -> Vec<SubCusp> {
    [1.0, 2.0, 3.0]
        .into_iter()
        .map(|h| SubCusp {
            half_height: h,
            re_min: 10.0,
            re_max: 40.0,
        })
        .collect()
}

/// Parameters for [`verify_log_gevrey`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GevreyConfig {
    pub order: f64,
    pub n_max: usize,
    /// Allowed spread `max C_n / min C_n`.
    pub ratio_limit: f64,
    /// Remainders below this fraction of `sup|F|` count as exact zeros.
    pub noise_floor: f64,
    pub cusps: Vec<SubCusp>,
    pub nx: usize,
    pub ny: usize,
    pub kind: BoundKind,
}

impl Default for GevreyConfig {
    fn default() -> Self {
        Self {
            order: 0.9,
            n_max: 6,
            ratio_limit: 1e3,
            noise_floor: 1e-12,
            cusps: default_subcusps(),
            nx: 12,
            ny: 5,
            kind: BoundKind::LogGevrey,
        }
    }
}

/// Fitted constants on one sub-cusp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspFit {
    pub cusp: SubCusp,
    /// `C_n` for `n = 2..=n_max`.
    pub constants: Vec<f64>,
    pub spread: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevreyReport {
    pub order: f64,
    pub bound_kind: BoundKind,
    pub n_max: usize,
    /// Largest `C_n` over all cusps, `n = 2..=n_max`.
    pub constants: Vec<f64>,
    /// Whether `C_n` stays within the allowed spread of the smallest constant.
    pub pass_per_n: Vec<bool>,
    pub cusps: Vec<CuspFit>,
    pub pass: bool,
}

fn spread(constants: &[f64]) -> f64 {
    let max = constants.iter().copied().fold(0.0, f64::max);
    let min = constants.iter().copied().filter(|c| *c > 0.0).fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else {
        max / min
    }
}

/// Remainder constants of `F(ℓ)` against `Σ_{k<n} a_k ℓ^k`, with `ℓ = 1/ζ` over the cusp samples.
pub fn verify_log_gevrey<F>(f: F, coeffs: &[C64], cfg: &GevreyConfig) -> Result<GevreyReport>
where
    F: Fn(C64) -> Result<C64>,
{
    let n_max = cfg.n_max.min(coeffs.len());
    let mut cusps = Vec::new();
    for cusp in &cfg.cusps {
        let pts = cusp.samples(cfg.nx, cfg.ny);
        let vals: Vec<(C64, C64)> = pts
            .iter()
            .map(|z| f(z.inv()).map(|v| (z.inv(), v)))
            .collect::<Result<_>>()?;
        let scale = vals.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        let noise = cfg.noise_floor * scale;
        let mut constants = Vec::new();
        for n in 2..=n_max {
            let b = cfg.kind.eval(n, cfg.order);
            let c = vals
                .iter()
                .map(|&(l, v)| {
                    let partial: C64 = coeffs[..n].iter().rev().fold(C64::new(0.0, 0.0), |acc, a| acc * l + a);
                    let r = (v - partial).norm();
                    if r <= noise {
                        0.0
                    } else {
                        r / (b * l.norm().powi(n as i32))
                    }
                })
                .fold(0.0, f64::max);
            constants.push(c);
        }
        let s = spread(&constants);
        cusps.push(CuspFit {
            cusp: *cusp,
            pass: constants.iter().all(|c| c.is_finite()) && s <= cfg.ratio_limit,
            spread: s,
            constants,
        });
    }
    let constants: Vec<f64> = (0..n_max.saturating_sub(1))
        .map(|i| cusps.iter().map(|c| c.constants[i]).fold(0.0, f64::max))
        .collect();
    let floor = constants.iter().copied().filter(|c| *c > 0.0).fold(f64::INFINITY, f64::min);
    let pass_per_n = constants
        .iter()
        .map(|c| c.is_finite() && (*c == 0.0 || *c <= cfg.ratio_limit * floor))
        .collect();
    Ok(GevreyReport {
        order: cfg.order,
        bound_kind: cfg.kind,
        n_max,
        pass: cusps.iter().all(|c| c.pass),
        constants,
        pass_per_n,
        cusps,
    })
}

/// Fitted `|G(w)| ≈ C·exp(−M·e^{order·Re w})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessFit {
    pub order: f64,
    pub big_m: f64,
    pub c: f64,
    pub pass: bool,
}

/// Least-squares fit of `log(−log|G|)` against `Re w` over samples on one or more lines.
///
/// Samples with `|G| = 0` are infinitely flat and ignored; `|G| ≥ 1` cannot be fitted and fails.
pub fn flatness_certificate<G>(g: G, samples: &[C64], min_order: f64) -> FlatnessFit
where
    G: Fn(C64) -> C64,
{
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut bad = false;
    for &w in samples {
        let a = g(w).norm();
        if a == 0.0 {
            continue;
        }
        if a >= 1.0 {
            bad = true;
            continue;
        }
        xs.push(w.re);
        ys.push((-a.ln()).ln());
    }
    if xs.len() < 2 {
        return FlatnessFit {
            order: f64::INFINITY,
            big_m: f64::INFINITY,
            c: 1.0,
            pass: !bad,
        };
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let order = sxy / sxx;
    let big_m = (my - order * mx).exp();
    // smallest C making the fitted shape an upper bound at every sample
    let c = samples
        .iter()
        .map(|&w| {
            let a = g(w).norm();
            if a == 0.0 {
                0.0
            } else {
                a / (-big_m * (order * w.re).exp()).exp()
            }
        })
        .fold(0.0, f64::max);
    FlatnessFit {
        order,
        big_m,
        c,
        pass: !bad && order >= min_order - 0.05,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bound_examples() {
        let l2 = 2f64.ln();
        let expected = l2 * l2 * (-2.0 / l2).exp();
        assert_relative_eq!(log_gevrey_bound(2, 1.0), expected, max_relative = 1e-14);
        assert_relative_eq!(log_gevrey_bound(2, 1.0), 0.026_84, max_relative = 1e-3);
        assert_relative_eq!(log_gevrey_bound(2, 2.0), 0.25 * expected, max_relative = 1e-14);
    }

    #[test]
    fn weak_bound_dominates() {
        for n in 2..=40 {
            for m in [0.5, 0.9, 1.0] {
                assert!(quadratic_weak_bound(n, m) > log_gevrey_bound(n, m), "n={n} m={m}");
            }
        }
    }

    #[test]
    fn bound_decreases_in_order() {
        for n in 2..=40 {
            assert!(log_gevrey_bound(n, 1.2) < log_gevrey_bound(n, 1.0));
            assert!(log_gevrey_bound(n, 1.0) < log_gevrey_bound(n, 0.9));
        }
        // (log n)^n outgrows m^n, so consecutive ratios exceed 1 from n = 3 on
        assert!(log_gevrey_bound(4, 1.0) > log_gevrey_bound(3, 1.0));
    }

    #[test]
    fn polynomial_passes() {
        let coeffs = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.5, -0.2)];
        let f = |l: C64| Ok(l + C64::new(0.5, -0.2) * l * l);
        let mut padded = coeffs.clone();
        padded.resize(7, C64::new(0.0, 0.0));
        let r = verify_log_gevrey(f, &padded, &GevreyConfig::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.constants[1..].iter().all(|c| *c == 0.0));
    }

    #[test]
    fn superexponentially_flat_function_passes() {
        let f = |l: C64| Ok(l + (-(l.inv()).exp()).exp());
        let mut coeffs = vec![C64::new(0.0, 0.0); 7];
        coeffs[1] = C64::new(1.0, 0.0);
        let r = verify_log_gevrey(f, &coeffs, &GevreyConfig::default()).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn exponentially_flat_function_is_not_log_gevrey() {
        // e^{−1/ℓ}ℓ^{−n} peaks at (n/e)^n, which outgrows (log n)^n
        let f = |l: C64| Ok((-l.inv()).exp());
        let zeros = vec![C64::new(0.0, 0.0); 11];
        let cfg = GevreyConfig { n_max: 10, ..GevreyConfig::default() };
        let r = verify_log_gevrey(f, &zeros, &cfg).unwrap();
        assert!(!r.pass, "{:?}", r.constants);
        assert!(r.constants.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn flatness_examples() {
        let samples: Vec<C64> = (0..20).map(|k| C64::new(0.5 + 0.1 * f64::from(k), 0.0)).collect();
        let fit = flatness_certificate(|w: C64| (-w.exp()).exp(), &samples, 1.0);
        assert_relative_eq!(fit.order, 1.0, max_relative = 1e-9);
        assert_relative_eq!(fit.big_m, 1.0, max_relative = 1e-9);
        assert!(fit.pass);
        let zero = flatness_certificate(|_w: C64| C64::new(0.0, 0.0), &samples, 1.0);
        assert!(zero.pass);
    }

    proptest! {
        #[test]
        fn constants_scale_linearly(s in 0.1f64..10.0) {
            let coeffs = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
            let base = |l: C64| l + 2.0 * l * l + 5.0 * l.powi(3) + 40.0 * l.powi(4);
            let cfg = GevreyConfig { n_max: 3, ..GevreyConfig::default() };
            let r1 = verify_log_gevrey(|l| Ok(base(l)), &coeffs, &cfg).unwrap();
            let scaled: Vec<C64> = coeffs.iter().map(|c| c * s).collect();
            let r2 = verify_log_gevrey(|l| Ok(base(l) * s), &scaled, &cfg).unwrap();
            for (a, b) in r1.constants.iter().zip(&r2.constants) {
                prop_assert!((b - s * a).abs() <= 1e-9 * b.abs());
            }
        }
    }
}
