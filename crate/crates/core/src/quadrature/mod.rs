//! Quadrature engine: adaptive Gauss-Kronrod, tanh-sinh for singular
//! endpoints, oscillatory radial integrals with accelerated tails, integrals
//! of absolute values split at sign changes, and rules on the unit sphere.

pub mod gauss_kronrod;
mod lebedev_data;
pub mod oscillatory;
pub mod sphere;
pub mod tanh_sinh;

use std::ops::Add;

use serde::{Deserialize, Serialize};

/// Value of an integral with an error estimate and the number of integrand
/// evaluations spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
    /// Whether every adaptive stage met its requested tolerance.
    pub converged: bool,
}

impl QuadratureResult {
    pub fn zero() -> Self {
        Self { value: 0.0, abs_error: 0.0, evaluations: 1, converged: true }
    }

    /// A value known in closed form.
    pub fn exact(value: f64) -> Self {
        Self { value, abs_error: 0.0, evaluations: 1, converged: true }
    }

    pub fn scale(self, c: f64) -> Self {
        Self { value: c * self.value, abs_error: c.abs() * self.abs_error, ..self }
    }

    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            self.abs_error
        } else {
            self.abs_error / self.value.abs()
        }
    }

    /// Turn a non-converged result into an error.
    pub fn require(self, what: &str) -> crate::Result<Self> {
        if self.converged && self.value.is_finite() {
            Ok(self)
        } else {
            Err(crate::Error::NonConvergence {
                what: what.to_string(),
                value: self.value,
                error: self.abs_error,
            })
        }
    }
}

impl Add for QuadratureResult {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            abs_error: self.abs_error + rhs.abs_error,
            evaluations: self.evaluations + rhs.evaluations,
            converged: self.converged && rhs.converged,
        }
    }
}

impl std::iter::Sum for QuadratureResult {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self { evaluations: 0, ..Self::zero() }, |a, b| a + b)
    }
}

/// Requested accuracy: an estimate is accepted when its error is below
/// `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Budget of adaptive panels per call.
    pub max_panels: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, ..Self::default() }
    }

    /// Same tolerance scaled by `factor` (used for inner integrals of nested
    /// quadratures and for honesty checks).
    pub fn tightened(self, factor: f64) -> Self {
        Self { abs: self.abs * factor, rel: self.rel * factor, ..self }
    }

    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-13, rel: 1e-10, max_panels: 200_000 }
    }
}

/// `int_a^b |g(x)| dx` where `g` is smooth inside each interval of `breaks`
/// (singular behaviour allowed at the breaks). Sign changes are located on a
/// scan of `scan` points per interval and refined by bisection, and every
/// sign-definite piece goes to tanh-sinh, which is insensitive to the kinks
/// at its endpoints.
pub fn integrate_abs<F: Fn(f64) -> f64>(
    g: F,
    breaks: &[f64],
    scan: usize,
    tol: Tolerance,
) -> QuadratureResult {
    let mut pieces = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        pieces.push(a);
        pieces.extend(sign_changes(&g, a, b, scan));
    }
    if let Some(&last) = breaks.last() {
        pieces.push(last);
    }
    pieces
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| tanh_sinh::integrate(|x| g(x).abs(), w[0], w[1], tol))
        .sum()
}

/// Interior sign changes of `g` on `(a, b)` found on a uniform scan and
/// refined by bisection to machine precision.
pub fn sign_changes<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, scan: usize) -> Vec<f64> {
    let n = scan.max(2);
    let h = (b - a) / n as f64;
    let mut roots = Vec::new();
    // scan interior points only; endpoints may be singular
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..n {
        let x = a + (i as f64 + 0.5) * h;
        let v = g(x);
        if !v.is_finite() {
            prev = None;
            continue;
        }
        if let Some((xp, vp)) = prev {
            if vp == 0.0 {
                // exact zero at a scan point is itself a break
            } else if (vp < 0.0) != (v < 0.0) && v != 0.0 {
                roots.push(bisect(g, xp, x, vp));
            }
        }
        if v == 0.0 {
            roots.push(x);
        }
        prev = Some((x, v));
    }
    roots.dedup();
    roots
}

fn bisect<F: Fn(f64) -> f64>(g: &F, mut lo: f64, mut hi: f64, glo: f64) -> f64 {
    let neg_lo = glo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v == 0.0 {
            return mid;
        }
        if (v < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    // P_n(z) and P_{n-1}(z) by the three-term recurrence
    let legendre = |z: f64| {
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    let derivative = |z: f64, pn: f64, pm: f64| {
        if n == 1 {
            1.0
        } else {
            n as f64 * (z * pn - pm) / (z * z - 1.0)
        }
    };
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, pm) = legendre(z);
            let dz = pn / derivative(z, pn, pm);
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (pn, pm) = legendre(z);
        let dp = derivative(z, pn, pm);
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_of_sine() {
        // int_0^{3 pi} |sin x| dx = 6
        let r = integrate_abs(f64::sin, &[0.0, 3.0 * std::f64::consts::PI], 64, Tolerance::default());
        assert!((r.value - 6.0).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sum_of_results() {
        let total: QuadratureResult =
            [QuadratureResult::exact(1.0), QuadratureResult::exact(2.0)].into_iter().sum();
        assert_eq!(total.value, 3.0);
        assert!(total.converged);
    }
}
