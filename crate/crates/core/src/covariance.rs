//! Spatial covariance `f(x) = phi(|x|) |x|^-beta` of the noise, its spectral
//! density, Riesz-potential constants and the increment operators.
//!
//! Fourier convention: `F g(xi) = int g(x) exp(-i xi.x) dx`. Under it
//! `F |x|^(a-3) = gamma(a) |xi|^-a` with
//! `gamma(a) = pi^(3/2) 2^a Gamma(a/2) / Gamma((3-a)/2)`, and the spectral
//! density `mu` of `f` is defined by `f(x) = int mu(xi) exp(i xi.x) dxi`, so
//! for `phi = 1` it is `gamma(3-beta) (2 pi)^-3 |xi|^(beta-3)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::quadrature::{gauss_kronrod, oscillatory, tanh_sinh, QuadratureResult, Tolerance};
use crate::special::gamma_fn;
use crate::vec3::{add, norm, sub, Vec3};
use crate::{Error, Result};

/// Below this norm a kernel argument counts as the singular point.
pub const SINGULARITY_GUARD: f64 = 1e-12;

/// Radial envelope multiplying the Riesz kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Phi {
    ConstantOne,
    /// `exp(-sigma^2 |x|^2 / 2)`.
    GaussianEnvelope { sigma: f64 },
    /// Piecewise-linear interpolation of `(radius, value)` samples, held
    /// constant beyond the last sample.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

impl Phi {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Phi::ConstantOne => 1.0,
            Phi::GaussianEnvelope { sigma } => (-0.5 * sigma * sigma * r * r).exp(),
            Phi::Tabulated { radii, values } => {
                let i = radii.partition_point(|&ri| ri <= r);
                if i == 0 {
                    values[0]
                } else if i == radii.len() {
                    values[values.len() - 1]
                } else {
                    let (r0, r1) = (radii[i - 1], radii[i]);
                    let s = (r - r0) / (r1 - r0);
                    values[i - 1] * (1.0 - s) + values[i] * s
                }
            }
        }
    }
}

/// Exponent `beta` of the Riesz kernel, strictly inside `(0, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta < 2.0 {
            Ok(Self(beta))
        } else {
            domain(format!("beta = {beta} must lie in (0, 2)"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Beta> for f64 {
    fn from(b: Beta) -> f64 {
        b.0
    }
}

/// Noise covariance `f = phi . k_beta` with the regularity order `delta` of
/// `phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    beta: Beta,
    delta: f64,
    phi: Phi,
}

impl CovarianceSpec {
    pub fn new(beta: f64, delta: f64, phi: Phi) -> Result<Self> {
        let beta = Beta::new(beta)?;
        if !(delta > 0.0 && delta <= 1.0) {
            return domain(format!("delta = {delta} must lie in (0, 1]"));
        }
        match &phi {
            Phi::GaussianEnvelope { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => {
                return domain(format!("Gaussian envelope width sigma = {sigma} must be positive"));
            }
            Phi::Tabulated { radii, values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return domain("tabulated envelope needs equally many radii and values (at least one)");
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 0.0 {
                    return domain("tabulated envelope radii must be nonnegative and increasing");
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return domain("tabulated envelope values must be positive and finite");
                }
            }
            _ => {}
        }
        Ok(Self { beta, delta, phi })
    }

    /// Pure Riesz kernel `|x|^-beta` (with `delta = 1`).
    pub fn riesz(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0, Phi::ConstantOne)
    }

    pub fn beta(&self) -> f64 {
        self.beta.get()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn phi(&self) -> &Phi {
        &self.phi
    }

    /// `f` as a function of `r = |x|`, without the singularity guard. Used
    /// inside quadratures whose nodes never sit on `r = 0`.
    pub fn radial(&self, r: f64) -> f64 {
        self.phi.eval(r) * r.powf(-self.beta())
    }

    /// `f(x)`.
    pub fn eval(&self, x: Vec3) -> Result<f64> {
        covariance_f(self, x)
    }

    /// Spectral density at `|xi| = k`.
    pub fn spectral_density_radial(&self, k: f64) -> Result<f64> {
        if !(k > SINGULARITY_GUARD) {
            return Err(Error::Singular { norm: k, guard: SINGULARITY_GUARD });
        }
        let beta = self.beta();
        match &self.phi {
            Phi::ConstantOne => Ok(spectral_constant(beta) * k.powf(beta - 3.0)),
            Phi::GaussianEnvelope { sigma } => {
                Ok(gaussian_envelope_density(beta, *sigma, k, Tolerance::new(1e-15, 1e-11))?.value)
            }
            Phi::Tabulated { .. } => Err(Error::Unsupported(
                "spectral density of a tabulated envelope".into(),
            )),
        }
    }
}

/// `|x|^-beta`.
pub fn riesz_kernel(beta: f64, x: Vec3) -> Result<f64> {
    let beta = Beta::new(beta)?.get();
    let r = norm(x);
    if !(r >= SINGULARITY_GUARD) {
        return Err(Error::Singular { norm: r, guard: SINGULARITY_GUARD });
    }
    Ok(r.powf(-beta))
}

/// `f(x) = phi(|x|) |x|^-beta`.
pub fn covariance_f(spec: &CovarianceSpec, x: Vec3) -> Result<f64> {
    let r = norm(x);
    if !(r >= SINGULARITY_GUARD) {
        return Err(Error::Singular { norm: r, guard: SINGULARITY_GUARD });
    }
    Ok(spec.radial(r))
}

/// Spectral density `mu(xi)` of `f`.
pub fn spectral_density(spec: &CovarianceSpec, xi: Vec3) -> Result<f64> {
    spec.spectral_density_radial(norm(xi))
}

/// `gamma(a)` with `F |x|^(a-3) = gamma(a) |xi|^-a` in three dimensions,
/// `0 < a < 3`.
pub fn riesz_fourier_constant(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 3.0) {
        return domain(format!("Riesz order a = {a} must lie in (0, 3)"));
    }
    Ok(PI.powf(1.5) * 2f64.powf(a) * gamma_fn(0.5 * a) / gamma_fn(0.5 * (3.0 - a)))
}

/// `c` in `mu(xi) = c |xi|^(beta-3)` for `f = |x|^-beta`.
pub fn spectral_constant(beta: f64) -> f64 {
    riesz_fourier_constant(3.0 - beta).expect("beta in (0, 2)") / (2.0 * PI).powi(3)
}

/// `C(a, b)` with
/// `int |x-z|^(a-3) |z-y|^(b-3) dz = C(a, b) |x-y|^(a+b-3)`.
pub fn riesz_semigroup_constant(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a + b < 3.0) {
        return domain(format!("need a > 0, b > 0, a + b < 3 (got a = {a}, b = {b})"));
    }
    Ok(riesz_fourier_constant(a)? * riesz_fourier_constant(b)? / riesz_fourier_constant(a + b)?)
}

/// Quadrature of `int |x-z|^(a-3) |z-y|^(b-3) dz`. Polar coordinates about
/// `x` with the axis through `y` reduce the angular integral to closed form;
/// the remaining radial integral has integrable singularities at `0` and at
/// `|x-y|` and an algebraic tail.
pub fn riesz_convolution(a: f64, b: f64, x: Vec3, y: Vec3, tol: Tolerance) -> Result<QuadratureResult> {
    riesz_semigroup_constant(a, b)?;
    let d = norm(sub(x, y));
    if !(d >= SINGULARITY_GUARD) {
        return Err(Error::Singular { norm: d, guard: SINGULARITY_GUARD });
    }
    // int_{-1}^{1} (rho^2 + d^2 - 2 rho d c)^((b-3)/2) dc
    let angular = move |rho: f64| -> f64 {
        let diff = (rho - d).abs();
        if (b - 1.0).abs() < 1e-12 {
            ((rho + d) / diff).ln() / (rho * d)
        } else {
            ((rho + d).powf(b - 1.0) - diff.powf(b - 1.0)) / (rho * d * (b - 1.0))
        }
    };
    let integrand = move |rho: f64| 2.0 * PI * rho.powf(a - 1.0) * angular(rho);
    let total = tanh_sinh::integrate(integrand, 0.0, d, tol)
        + tanh_sinh::integrate(integrand, d, 2.0 * d, tol)
        + oscillatory::semi_infinite(integrand, 2.0 * d, tol);
    total.require("Riesz convolution")
}

/// Spectral density of `exp(-sigma^2 |x|^2/2) |x|^-beta` at `|xi| = k`:
/// `(2 pi)^-6 (F phi * F k_beta)(xi)`, with the angular part of the
/// convolution integrated in closed form.
pub fn gaussian_envelope_density(beta: f64, sigma: f64, k: f64, tol: Tolerance) -> Result<QuadratureResult> {
    Beta::new(beta)?;
    if !(sigma > 0.0) {
        return domain("sigma must be positive");
    }
    let s2 = sigma * sigma;
    let prefactor = riesz_fourier_constant(3.0 - beta)? * (2.0 * PI / s2).powf(1.5) * 2.0 * PI
        / (2.0 * PI).powi(6);
    // rho^(beta-1) * int_{-1}^{1} exp(-|xi - zeta|^2/(2 s2)) dc  with |zeta| = rho
    let integrand = move |rho: f64| -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        let q = k * rho / s2;
        let angular = if q < 1e-8 {
            2.0 * (-(rho * rho + k * k) / (2.0 * s2)).exp()
        } else {
            (-(rho - k) * (rho - k) / (2.0 * s2)).exp() * (-(-2.0 * q).exp_m1()) / q
        };
        rho.powf(beta - 1.0) * angular
    };
    let width = 40.0 * sigma;
    let head = k.max(sigma).min(1.0);
    let end = k + width;
    let mut breaks = vec![head];
    let mut x = head;
    while x < end {
        x = (x + 0.5 * sigma).min(end);
        breaks.push(x);
    }
    let total = tanh_sinh::integrate(integrand, 0.0, head, tol)
        + gauss_kronrod::integrate_with_breaks(integrand, &breaks, tol);
    Ok(total.scale(prefactor))
}

/// First and second order increments of a kernel at base point `u` with
/// offset `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Increment1 {
    pub u: Vec3,
    pub x: Vec3,
}

impl Increment1 {
    pub fn new(u: Vec3, x: Vec3) -> Result<Self> {
        if u.iter().chain(x.iter()).all(|c| c.is_finite()) {
            Ok(Self { u, x })
        } else {
            domain("increment points must be finite")
        }
    }

    pub fn d<F: Fn(Vec3) -> Result<f64>>(&self, f: F) -> Result<f64> {
        increment_d(f, self.u, self.x)
    }

    pub fn d2<F: Fn(Vec3) -> Result<f64>>(&self, f: F) -> Result<f64> {
        increment_d2(f, self.u, self.x)
    }
}

/// `Df(u, x) = f(u + x) - f(u)`; exactly zero for `x = 0`.
pub fn increment_d<F: Fn(Vec3) -> Result<f64>>(f: F, u: Vec3, x: Vec3) -> Result<f64> {
    if x == [0.0; 3] {
        f(u)?;
        return Ok(0.0);
    }
    Ok(f(add(u, x))? - f(u)?)
}

/// `D2 f(u, x) = f(u - x) - 2 f(u) + f(u + x)`.
pub fn increment_d2<F: Fn(Vec3) -> Result<f64>>(f: F, u: Vec3, x: Vec3) -> Result<f64> {
    if x == [0.0; 3] {
        f(u)?;
        return Ok(0.0);
    }
    Ok(f(sub(u, x))? - 2.0 * f(u)? + f(add(u, x))?)
}

/// `D2bar f(u, x, y) = f(u + x + y) - f(u + x) - f(u + y) + f(u)`.
pub fn increment_d2bar<F: Fn(Vec3) -> Result<f64>>(f: F, u: Vec3, x: Vec3, y: Vec3) -> Result<f64> {
    Ok(f(add(add(u, x), y))? - f(add(u, x))? - f(add(u, y))? + f(u)?)
}
