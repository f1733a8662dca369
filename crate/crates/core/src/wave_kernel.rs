//! The 3-D wave propagator `G(t)`: its Fourier transform, spherical means,
//! mollified kernels `G_n`, and the operators acting on initial data.
//!
//! `G(t)` is the uniform measure on the sphere of radius `t` with total mass
//! `t`, so `(G(t) * v)(x) = t * mean_{|e|=1} v(x + t e)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::domain;
use crate::quadrature::sphere::SphereRule;
use crate::quadrature::{gauss_kronrod, gauss_legendre, tanh_sinh, QuadratureResult, Tolerance};
use crate::special::sinc;
use crate::vec3::{add, dot, norm, scale, sub, Vec3};
use crate::Result;

/// `F G(t)(xi) = sin(t |xi|) / |xi|`.
pub fn fourier_g(t: f64, xi: Vec3) -> f64 {
    fourier_g_radial(t, norm(xi))
}

/// `sin(t k) / k`, switching to `t - t^3 k^2 / 6` when `t k < 1e-4`.
pub fn fourier_g_radial(t: f64, k: f64) -> f64 {
    if (t * k).abs() < 1e-4 {
        t - t * t * t * k * k / 6.0
    } else {
        (t * k).sin() / k
    }
}

/// Unnormalized bump `exp(-1 / (1 - r^2))` on `r < 1`.
fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// `1 / int_{|x|<1} exp(-1/(1-|x|^2)) dx`, the normalization of the
/// mollifier, to 12 significant digits.
pub const MOLLIFIER_NORMALIZATION: f64 = 2.267_116_739_61;

/// Normalization recomputed by quadrature at full precision.
pub fn mollifier_normalization() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let mass = tanh_sinh::integrate(|r| 4.0 * PI * r * r * bump(r), 0.0, 1.0, Tolerance::new(1e-16, 1e-14));
        1.0 / mass.value
    })
}

/// The mollifier `psi(x) = c exp(-1/(1-|x|^2))`, radial, unit mass,
/// supported in the unit ball.
pub fn psi(r: f64) -> f64 {
    mollifier_normalization() * bump(r)
}

/// `psi_n(t, x) = (n/t)^3 psi(n x / t)`, supported in the ball of radius `t/n`.
pub fn psi_n(n: u32, t: f64, r: f64) -> f64 {
    let s = n as f64 / t;
    s * s * s * psi(s * r)
}

/// `F psi(zeta) = 4 pi int_0^1 psi(r) r^2 sinc(zeta r) dr`.
pub fn fourier_psi(zeta: f64) -> f64 {
    let zeta = zeta.abs();
    // a panel per quarter oscillation keeps the fixed-order rule exact enough
    let panels = (zeta / 1.5).ceil().clamp(4.0, 2000.0) as usize;
    let breaks: Vec<f64> = (0..=panels).map(|i| i as f64 / panels as f64).collect();
    gauss_kronrod::integrate_with_breaks(
        |r| 4.0 * PI * psi(r) * r * r * sinc(zeta * r),
        &breaks,
        Tolerance::new(1e-15, 1e-12),
    )
    .value
}

/// `F G_n(t)(xi) = F psi(t |xi| / n) sin(t |xi|) / |xi|`.
pub fn fourier_g_mollified(n: u32, t: f64, k: f64) -> f64 {
    fourier_psi(t * k / n as f64) * fourier_g_radial(t, k)
}

/// A scalar field with value, gradient and Laplacian.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: Vec3) -> f64;

    /// Central differences unless overridden.
    fn gradient(&self, x: Vec3) -> Vec3 {
        let h = 1e-5;
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut e = [0.0; 3];
            e[i] = h;
            *gi = (self.value(add(x, e)) - self.value(sub(x, e))) / (2.0 * h);
        }
        g
    }

    /// Central differences unless overridden.
    fn laplacian(&self, x: Vec3) -> f64 {
        let h = 1e-4;
        let c = self.value(x);
        (0..3)
            .map(|i| {
                let mut e = [0.0; 3];
                e[i] = h;
                (self.value(add(x, e)) - 2.0 * c + self.value(sub(x, e))) / (h * h)
            })
            .sum()
    }
}

/// `v(x) = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn value(&self, _: Vec3) -> f64 {
        self.0
    }
    fn gradient(&self, _: Vec3) -> Vec3 {
        [0.0; 3]
    }
    fn laplacian(&self, _: Vec3) -> f64 {
        0.0
    }
}

/// `v(x) = c . x + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub c: Vec3,
    pub offset: f64,
}

impl ScalarField for Linear {
    fn value(&self, x: Vec3) -> f64 {
        dot(self.c, x) + self.offset
    }
    fn gradient(&self, _: Vec3) -> Vec3 {
        self.c
    }
    fn laplacian(&self, _: Vec3) -> f64 {
        0.0
    }
}

/// `v(x) = amplitude * exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub center: Vec3,
    pub amplitude: f64,
    pub width: f64,
}

impl ScalarField for GaussianBump {
    fn value(&self, x: Vec3) -> f64 {
        let d = sub(x, self.center);
        self.amplitude * (-dot(d, d) / (2.0 * self.width * self.width)).exp()
    }
    fn gradient(&self, x: Vec3) -> Vec3 {
        let d = sub(x, self.center);
        scale(-self.value(x) / (self.width * self.width), d)
    }
    fn laplacian(&self, x: Vec3) -> f64 {
        let d = sub(x, self.center);
        let w2 = self.width * self.width;
        self.value(x) * (dot(d, d) / (w2 * w2) - 3.0 / w2)
    }
}

/// `v(x) = sum_j a_j cos(k_j . x + phase_j)`: band-limited data that a
/// periodic lattice represents exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveSum {
    pub waves: Vec<(f64, Vec3, f64)>,
}

impl ScalarField for PlaneWaveSum {
    fn value(&self, x: Vec3) -> f64 {
        self.waves.iter().map(|&(a, k, p)| a * (dot(k, x) + p).cos()).sum()
    }
    fn gradient(&self, x: Vec3) -> Vec3 {
        self.waves.iter().fold([0.0; 3], |g, &(a, k, p)| add(g, scale(-a * (dot(k, x) + p).sin(), k)))
    }
    fn laplacian(&self, x: Vec3) -> f64 {
        self.waves.iter().map(|&(a, k, p)| -a * dot(k, k) * (dot(k, x) + p).cos()).sum()
    }
}

/// Radial bump `amplitude * exp(-1/(1 - (|x-center|/radius)^2))`, compactly
/// supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactBump {
    pub center: Vec3,
    pub amplitude: f64,
    pub radius: f64,
}

impl CompactBump {
    /// Profile as a function of the distance to the center.
    pub fn profile(&self, r: f64) -> f64 {
        self.amplitude * bump(r.abs() / self.radius)
    }
}

impl ScalarField for CompactBump {
    fn value(&self, x: Vec3) -> f64 {
        self.profile(norm(sub(x, self.center)))
    }
    fn laplacian(&self, x: Vec3) -> f64 {
        // radial Laplacian g'' + 2 g' / r of g(r) = A exp(-1/(1 - s^2)), s = r / R
        let r = norm(sub(x, self.center));
        let big_r = self.radius;
        let s = r / big_r;
        if s >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s * s;
        let g = self.profile(r);
        // d/ds exp(-1/q) = -2 s / q^2 * exp(-1/q)
        let gs = -2.0 * s / (q * q) * g;
        let gss = g * (4.0 * s * s / q.powi(4) - 2.0 / (q * q) - 8.0 * s * s / q.powi(3));
        let g1 = gs / big_r;
        let g2 = gss / (big_r * big_r);
        if r < 1e-12 {
            3.0 * g2
        } else {
            g2 + 2.0 * g1 / r
        }
    }
}

/// Initial position `v0` (twice differentiable) and velocity `v0_tilde`
/// with their Hölder orders.
pub struct InitialData {
    pub v0: Box<dyn ScalarField>,
    pub v0_tilde: Box<dyn ScalarField>,
    gamma1: f64,
    gamma2: f64,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialData")
            .field("gamma1", &self.gamma1)
            .field("gamma2", &self.gamma2)
            .finish_non_exhaustive()
    }
}

impl InitialData {
    pub fn new(
        v0: Box<dyn ScalarField>,
        v0_tilde: Box<dyn ScalarField>,
        gamma1: f64,
        gamma2: f64,
    ) -> Result<Self> {
        for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
            if !(g > 0.0 && g <= 1.0) {
                return domain(format!("{name} = {g} must lie in (0, 1]"));
            }
        }
        Ok(Self { v0, v0_tilde, gamma1, gamma2 })
    }

    /// Smooth data (`gamma1 = gamma2 = 1`).
    pub fn smooth(v0: impl ScalarField + 'static, v0_tilde: impl ScalarField + 'static) -> Self {
        Self { v0: Box::new(v0), v0_tilde: Box::new(v0_tilde), gamma1: 1.0, gamma2: 1.0 }
    }

    pub fn zero() -> Self {
        Self::smooth(Constant(0.0), Constant(0.0))
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }
}

/// Number of Gauss-Legendre radii in unit-ball averages.
const BALL_RADII: usize = 24;

/// Evaluates `G(t)` and `G_n(t)` against fields up to a time horizon.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    horizon: f64,
    n: Option<u32>,
    rule: SphereRule,
}

impl KernelEvaluator {
    /// `n = None` selects the unmollified kernel. Checks the mollifier's unit
    /// mass.
    pub fn new(horizon: f64, n: Option<u32>, rule: SphereRule) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon T = {horizon} must be positive"));
        }
        if n == Some(0) {
            return domain("mollification index n must be at least 1");
        }
        let mass = tanh_sinh::integrate(|r| 4.0 * PI * r * r * psi(r), 0.0, 1.0, Tolerance::new(1e-16, 1e-14));
        if (mass.value - 1.0).abs() > 1e-10 {
            return domain(format!("mollifier mass {} differs from 1", mass.value));
        }
        Ok(Self { horizon, n, rule })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> Option<u32> {
        self.n
    }

    pub fn rule(&self) -> &SphereRule {
        &self.rule
    }

    /// Radius of the support of the kernel at time `t`.
    pub fn support_radius(&self, t: f64) -> f64 {
        match self.n {
            Some(n) => t * (1.0 + 1.0 / n as f64),
            None => t,
        }
    }

    /// `(G(t) * v)(x) = t * mean_{|e|=1} v(x + t e)`.
    pub fn sphere_average(&self, t: f64, x: Vec3, v: &dyn ScalarField) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("sphere average needs t > 0 (got {t})"));
        }
        Ok(t * self.rule.mean(|e| v.value(add(x, scale(t, e)))))
    }

    /// `int_{|y|<1} g(x + t y) dy`.
    fn ball_integral<F: Fn(Vec3) -> f64>(&self, t: f64, x: Vec3, g: F) -> f64 {
        let (nodes, weights) = gauss_legendre(BALL_RADII);
        nodes
            .iter()
            .zip(&weights)
            .map(|(&z, &w)| {
                let rho = 0.5 * (z + 1.0);
                let shell = self.rule.mean(|e| g(add(x, scale(t * rho, e))));
                0.5 * w * 4.0 * PI * rho * rho * shell
            })
            .sum()
    }

    /// `d/dt (G(t) * v0)(x) = (1/t)(G(t) * v0)(x) + (t^2 / 4 pi) int_{|y|<1} lap v0(x + t y) dy`.
    pub fn dgdt_convolve(&self, t: f64, x: Vec3, data: &InitialData) -> Result<f64> {
        let first = self.sphere_average(t, x, data.v0.as_ref())? / t;
        let second = t * t / (4.0 * PI) * self.ball_integral(t, x, |y| data.v0.laplacian(y));
        Ok(first + second)
    }

    /// Solution of the homogeneous wave equation with data `(v0, v0_tilde)`;
    /// equals `v0(x)` at `t = 0`.
    pub fn homogeneous_solution(&self, t: f64, x: Vec3, data: &InitialData) -> Result<f64> {
        if t < 0.0 {
            return domain(format!("time t = {t} must be nonnegative"));
        }
        if t == 0.0 {
            return Ok(data.v0.value(x));
        }
        Ok(self.dgdt_convolve(t, x, data)? + self.sphere_average(t, x, data.v0_tilde.as_ref())?)
    }

    /// Density of `G_n(t) = psi_n(t, .) * G(t)` at `x`; uses the evaluator's
    /// `n` (the unmollified kernel has no density and is rejected).
    pub fn mollified_g(&self, t: f64, x: Vec3) -> Result<f64> {
        match self.n {
            Some(n) => mollified_g(n, t, x),
            None => domain("the unmollified kernel is a surface measure without a density"),
        }
    }
}

/// Density of `G_n(t)` at `x`: `t * mean_e psi_n(t, x - t e)`. The bump is
/// radial, so the spherical mean collapses to an integral over the cosine of
/// the angle between `e` and `x`, restricted to where the bump is nonzero.
pub fn mollified_g(n: u32, t: f64, x: Vec3) -> Result<f64> {
    if n == 0 {
        return domain("mollification index n must be at least 1");
    }
    if !(t > 0.0) {
        return domain(format!("time t = {t} must be positive"));
    }
    let r = norm(x);
    let eps = t / n as f64;
    if r >= t + eps || r <= t - eps {
        return Ok(0.0);
    }
    // |x - t e|^2 = r^2 + t^2 - 2 r t c < eps^2  <=>  c > c_lo
    let c_lo = ((r * r + t * t - eps * eps) / (2.0 * r * t)).max(-1.0);
    let value = tanh_sinh::integrate(
        |c| psi_n(n, t, (r * r + t * t - 2.0 * r * t * c).max(0.0).sqrt()),
        c_lo,
        1.0,
        Tolerance::new(1e-15, 1e-12),
    );
    Ok(0.5 * t * value.value)
}

/// `int G_n(t, x) dx` by radial quadrature over the support shell.
pub fn mollified_mass(n: u32, t: f64) -> Result<QuadratureResult> {
    let eps = t / n as f64;
    let lo = (t - eps).max(0.0);
    let hi = t + eps;
    let q = tanh_sinh::integrate(
        |r| 4.0 * PI * r * r * mollified_g(n, t, [r, 0.0, 0.0]).unwrap_or(f64::NAN),
        lo,
        hi,
        Tolerance::new(1e-13, 1e-10),
    );
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn evaluator() -> KernelEvaluator {
        KernelEvaluator::new(2.0, None, SphereRule::default()).unwrap()
    }

    #[test]
    fn fourier_values() {
        assert!(fourier_g(1.0, [PI, 0.0, 0.0]).abs() < 1e-15);
        assert_eq!(fourier_g(2.0, [0.0; 3]), 2.0);
        assert_relative_eq!(fourier_g(1.0, [0.0, 1.0, 0.0]), 1f64.sin(), epsilon = 1e-15);
        // continuity across the Taylor switch
        let k = 1e-4 / 1.5;
        assert_relative_eq!(fourier_g_radial(1.5, k * 0.999_999), fourier_g_radial(1.5, k * 1.000_001), epsilon = 1e-12);
    }

    #[test]
    fn mollifier_constant_is_consistent() {
        assert_relative_eq!(mollifier_normalization(), MOLLIFIER_NORMALIZATION, max_relative = 1e-11);
        assert_relative_eq!(fourier_psi(0.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_average_examples() {
        let ev = evaluator();
        assert_relative_eq!(ev.sphere_average(0.7, [1.0, 2.0, 3.0], &Constant(1.0)).unwrap(), 0.7, epsilon = 1e-13);
        let lin = Linear { c: [0.3, -1.0, 2.0], offset: 0.0 };
        let x = [0.5, 0.1, -0.2];
        assert_relative_eq!(ev.sphere_average(1.3, x, &lin).unwrap(), 1.3 * lin.value(x), epsilon = 1e-13);
        struct Sq;
        impl ScalarField for Sq {
            fn value(&self, x: Vec3) -> f64 {
                dot(x, x)
            }
        }
        assert_relative_eq!(ev.sphere_average(1.0, [0.0; 3], &Sq).unwrap(), 1.0, epsilon = 1e-13);
        assert!(ev.sphere_average(0.0, x, &Sq).is_err());
    }

    #[test]
    fn dgdt_examples() {
        let ev = evaluator();
        let c = InitialData::smooth(Constant(2.5), Constant(0.0));
        assert_relative_eq!(ev.dgdt_convolve(0.8, [0.1, 0.2, 0.3], &c).unwrap(), 2.5, epsilon = 1e-12);
        let lin = Linear { c: [1.0, -2.0, 0.5], offset: 0.0 };
        let x = [0.3, 0.3, -1.0];
        let d = InitialData::smooth(lin, Constant(0.0));
        assert_relative_eq!(ev.dgdt_convolve(1.1, x, &d).unwrap(), lin.value(x), epsilon = 1e-12);
        assert!(ev.dgdt_convolve(0.0, x, &d).is_err());
    }

    #[test]
    fn dgdt_matches_finite_difference() {
        let ev = KernelEvaluator::new(2.0, None, SphereRule::lebedev(1202).unwrap()).unwrap();
        let bump = GaussianBump { center: [0.2, -0.1, 0.3], amplitude: 1.0, width: 0.6 };
        let data = InitialData::smooth(bump, Constant(0.0));
        let x = [0.0, 0.1, 0.0];
        for t in [0.3, 0.7, 1.2] {
            let h = 1e-4;
            let fd = (ev.sphere_average(t + h, x, &bump).unwrap() - ev.sphere_average(t - h, x, &bump).unwrap()) / (2.0 * h);
            let exact = ev.dgdt_convolve(t, x, &data).unwrap();
            assert_relative_eq!(fd, exact, max_relative = 1e-5);
        }
    }

    #[test]
    fn homogeneous_solution_limits() {
        let ev = evaluator();
        let bump = GaussianBump { center: [0.0; 3], amplitude: 1.0, width: 0.5 };
        let x = [0.1, 0.0, 0.2];
        let data = InitialData::smooth(bump, Constant(0.0));
        assert!((ev.homogeneous_solution(1e-6, x, &data).unwrap() - bump.value(x)).abs() < 1e-4);
        let vel = InitialData::smooth(Constant(0.0), Constant(1.0));
        assert_relative_eq!(ev.homogeneous_solution(0.9, x, &vel).unwrap(), 0.9, epsilon = 1e-13);
    }

    #[test]
    fn kirchhoff_radial_oracle() {
        // For radial data g(r) with zero velocity, r u(t, r) solves the 1-D
        // wave equation: r u = ((r + t) g(r + t) + (r - t) g(|r - t|)) / 2.
        let ev = KernelEvaluator::new(2.0, None, SphereRule::lebedev(1202).unwrap()).unwrap();
        let b = CompactBump { center: [0.0; 3], amplitude: 1.0, radius: 1.5 };
        let data = InitialData::smooth(b, Constant(0.0));
        for (t, r) in [(0.3, 0.4), (0.5, 0.2), (0.4, 0.9)] {
            let exact = ((r + t) * b.profile(r + t) + (r - t) * b.profile((r - t).abs())) / (2.0 * r);
            let got = ev.homogeneous_solution(t, [0.0, 0.0, r], &data).unwrap();
            assert!((got - exact).abs() < 1e-6, "t={t} r={r}: {got} vs {exact}");
        }
    }

    #[test]
    fn compact_bump_laplacian_matches_differences() {
        let b = CompactBump { center: [0.1, 0.0, 0.0], amplitude: 2.0, radius: 1.2 };
        struct Plain(CompactBump);
        impl ScalarField for Plain {
            fn value(&self, x: Vec3) -> f64 {
                self.0.value(x)
            }
        }
        for x in [[0.3, 0.2, -0.1], [0.7, 0.0, 0.4], [0.1, 0.0, 0.0]] {
            assert!((b.laplacian(x) - Plain(b).laplacian(x)).abs() < 1e-5);
        }
    }

    #[test]
    fn mollified_kernel_support_and_mass() {
        let t = 0.5;
        assert_eq!(mollified_g(4, t, [0.0, 0.0, t * 1.26]).unwrap(), 0.0);
        assert!(mollified_g(4, t, [0.0, 0.0, t]).unwrap() > 0.0);
        let mass = mollified_mass(4, t).unwrap();
        assert!((mass.value - t).abs() < 1e-6, "{mass:?}");
    }

    #[test]
    fn mollified_domination() {
        for n in [2, 8, 32] {
            for k in [0.1, 1.0, 5.0, 40.0] {
                for t in [0.2, 1.0] {
                    assert!(fourier_g_mollified(n, t, k).abs() <= fourier_g_radial(t, k).abs() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn sphere_average_scaling_identity() {
        // (G(s) * v)(0) = (s/t) (G(t) * v(s/t .))(0)
        let ev = evaluator();
        let v = GaussianBump { center: [0.2, 0.1, -0.3], amplitude: 1.0, width: 0.7 };
        struct Scaled(GaussianBump, f64);
        impl ScalarField for Scaled {
            fn value(&self, x: Vec3) -> f64 {
                self.0.value(scale(self.1, x))
            }
        }
        let (s, t) = (0.4, 1.0);
        let lhs = ev.sphere_average(s, [0.0; 3], &v).unwrap();
        let rhs = (s / t) * ev.sphere_average(t, [0.0; 3], &Scaled(v, s / t)).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn fourier_bound(t in 0.0f64..5.0, k in 1e-6f64..100.0) {
            let v = fourier_g_radial(t, k).abs();
            prop_assert!(v <= t.min(1.0 / k) * (1.0 + 1e-12));
        }

        #[test]
        fn mollified_scaling(s in 0.1f64..1.0, ratio in 0.1f64..1.0, dir in prop::array::uniform3(-1.0f64..1.0), rr in 0.0f64..1.0) {
            // G_n(t, (t/s) x) = (s/t)^2 G_n(s, x) for 0 < s <= t <= 1
            let t = s + (1.0 - s) * ratio;
            prop_assume!(norm(dir) > 0.1);
            let n = 4;
            let x = scale(s * (0.7 + 0.6 * rr) / norm(dir), dir);
            let lhs = mollified_g(n, t, scale(t / s, x)).unwrap();
            let rhs = (s / t).powi(2) * mollified_g(n, s, x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
