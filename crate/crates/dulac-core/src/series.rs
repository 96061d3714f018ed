//! Truncated complex power series `Σ_{k=0}^{n} a_k t^k` stored densely by power.

use crate::C64;

/// Neumaier-compensated complex sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: C64,
    comp: C64,
}

impl KahanSum {
    pub fn add(&mut self, x: C64) {
        let (s, c) = two_sum(self.sum.re, x.re);
        let (si, ci) = two_sum(self.sum.im, x.im);
        self.sum = C64::new(s, si);
        self.comp += C64::new(c, ci);
    }

    pub fn value(&self) -> C64 {
        self.sum + self.comp
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let c = if a.abs() >= b.abs() {
        (a - s) + b
    } else {
        (b - s) + a
    };
    (s, c)
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn coeff(a: &[C64], k: usize) -> C64 {
    a.get(k).copied().unwrap_or_else(zero)
}

/// Product truncated after `t^n`.
pub fn mul(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![zero(); n + 1];
    for (i, &ai) in a.iter().enumerate().take(n + 1) {
        if ai == zero() {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(n + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `a(b(t))` truncated after `t^n`; requires `b(0) = 0`.
pub fn compose(a: &[C64], b: &[C64], n: usize) -> Vec<C64> {
    debug_assert!(coeff(b, 0).norm() == 0.0);
    let mut out = vec![zero(); n + 1];
    for k in (0..a.len()).rev() {
        out = mul(&out, b, n);
        out[0] += a[k];
    }
    out
}

/// Compositional inverse of `a` with `a(0) = 0`, `a'(0) ≠ 0`.
pub fn revert(a: &[C64], n: usize) -> Vec<C64> {
    let a1 = coeff(a, 1);
    let mut b = vec![zero(); n + 1];
    if n == 0 {
        return b;
    }
    b[1] = a1.inv();
    for k in 2..=n {
        let c = compose(a, &b[..k], k);
        b[k] = -c[k] / a1;
    }
    b
}

/// `exp(s)` for `s(0) = 0`.
pub fn exp(s: &[C64], n: usize) -> Vec<C64> {
    debug_assert!(coeff(s, 0).norm() == 0.0);
    let mut e = vec![zero(); n + 1];
    e[0] = C64::new(1.0, 0.0);
    for k in 1..=n {
        let mut acc = zero();
        for i in 1..=k {
            acc += i as f64 * coeff(s, i) * e[k - i];
        }
        e[k] = acc / k as f64;
    }
    e
}

/// `log(1 + u)` for `u(0) = 0`.
pub fn log1p(u: &[C64], n: usize) -> Vec<C64> {
    debug_assert!(coeff(u, 0).norm() == 0.0);
    // (1 + u) L' = u'
    let mut l = vec![zero(); n + 1];
    for k in 1..=n {
        let mut acc = k as f64 * coeff(u, k);
        for i in 1..k {
            acc -= i as f64 * l[i] * coeff(u, k - i);
        }
        l[k] = acc / k as f64;
    }
    l
}

/// Horner evaluation.
pub fn eval(a: &[C64], t: C64) -> C64 {
    a.iter().rev().fold(zero(), |acc, &c| acc * t + c)
}

/// Evaluation of the derivative.
pub fn eval_derivative(a: &[C64], t: C64) -> C64 {
    a.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(zero(), |acc, (k, &c)| acc * t + k as f64 * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn reversion_of_t_plus_t2() {
        // Catalan-number oracle: inverse of t + t² is Σ (−1)^{k−1} C_{k−1} t^k.
        let a = vec![c(0.0), c(1.0), c(1.0)];
        let b = revert(&a, 6);
        let expected = [0.0, 1.0, -1.0, 2.0, -5.0, 14.0, -42.0];
        for (k, e) in expected.iter().enumerate() {
            assert!((b[k] - e).norm() < 1e-12, "k={k}: {}", b[k]);
        }
    }

    #[test]
    fn log_of_one_plus_t() {
        let l = log1p(&[c(0.0), c(1.0)], 6);
        for k in 1..=6 {
            let expected = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            assert!((l[k] - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn exp_of_linear() {
        let z = C64::new(0.2, 0.7);
        let e = exp(&[c(0.0), z], 8);
        let mut fact = 1.0;
        for (k, &ek) in e.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!((ek - z.powi(k as i32) / fact).norm() < 1e-15);
        }
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut s = KahanSum::default();
        s.add(c(1e16));
        for _ in 0..1000 {
            s.add(c(1.0));
        }
        s.add(c(-1e16));
        assert_eq!(s.value().re, 1000.0);
    }

    fn small_series() -> impl Strategy<Value = Vec<C64>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..9)
            .prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
    }

    proptest! {
        #[test]
        fn revert_is_inverse(tail in small_series()) {
            let n = tail.len() + 1;
            let mut a = vec![c(0.0), c(1.0)];
            a.extend(tail);
            let b = revert(&a, n);
            let id = compose(&a, &b, n);
            for (k, v) in id.iter().enumerate() {
                let e = if k == 1 { 1.0 } else { 0.0 };
                prop_assert!((v - e).norm() < 1e-9 * 10f64.powi(k as i32));
            }
        }

        #[test]
        fn log_exp_roundtrip(tail in small_series()) {
            let n = tail.len();
            let mut s = vec![c(0.0)];
            s.extend(tail);
            let mut u = exp(&s, n);
            u[0] = c(0.0);
            let back = log1p(&u, n);
            for k in 0..=n {
                prop_assert!((back[k] - coeff(&s, k)).norm() < 1e-11);
            }
        }
    }
}
