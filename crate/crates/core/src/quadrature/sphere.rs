//! Quadrature rules for averages over the unit sphere.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{gauss_legendre, lebedev_data};
use crate::vec3::Vec3;
use crate::{Error, Result};

/// Which family a sphere rule comes from; recorded in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SphereRuleKind {
    /// Lebedev-Laikov rule with the given number of points.
    Lebedev(usize),
    /// Fibonacci lattice with the given number of points (equal weights).
    Fibonacci(usize),
    /// Gauss-Legendre in `cos(theta)` times uniform azimuth.
    Product { polar: usize, azimuth: usize },
}

/// Point set on the unit sphere with weights summing to one, so that
/// `mean(f)` approximates the uniform average of `f` over directions.
#[derive(Debug, Clone)]
pub struct SphereRule {
    kind: SphereRuleKind,
    nodes: Vec<(Vec3, f64)>,
}

/// Point counts of the bundled Lebedev rules.
pub const LEBEDEV_SIZES: [usize; 6] = [50, 110, 194, 302, 590, 1202];

impl SphereRule {
    /// Bundled Lebedev rule with exactly `points` nodes.
    pub fn lebedev(points: usize) -> Result<Self> {
        let table: &[[f64; 4]] = match points {
            50 => &lebedev_data::DEGREE_11,
            110 => &lebedev_data::DEGREE_17,
            194 => &lebedev_data::DEGREE_23,
            302 => &lebedev_data::DEGREE_29,
            590 => &lebedev_data::DEGREE_41,
            1202 => &lebedev_data::DEGREE_59,
            _ => {
                return Err(Error::Unsupported(format!(
                    "no Lebedev rule with {points} points (available: {LEBEDEV_SIZES:?})"
                )))
            }
        };
        Ok(Self {
            kind: SphereRuleKind::Lebedev(points),
            nodes: table.iter().map(|p| ([p[0], p[1], p[2]], p[3])).collect(),
        })
    }

    /// Lebedev rule when `points` is a bundled size, Fibonacci lattice
    /// otherwise.
    pub fn with_points(points: usize) -> Self {
        Self::lebedev(points).unwrap_or_else(|_| Self::fibonacci(points))
    }

    /// Equal-weight Fibonacci lattice.
    pub fn fibonacci(points: usize) -> Self {
        let n = points.max(1);
        let golden = PI * (3.0 - 5f64.sqrt());
        let w = 1.0 / n as f64;
        let nodes = (0..n)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                ([rho * phi.cos(), rho * phi.sin(), z], w)
            })
            .collect();
        Self { kind: SphereRuleKind::Fibonacci(n), nodes }
    }

    /// Gauss-Legendre in `cos(theta)` with `polar` nodes times a uniform
    /// trapezoid rule with `azimuth` nodes.
    pub fn product(polar: usize, azimuth: usize) -> Self {
        let (x, w) = gauss_legendre(polar);
        let mut nodes = Vec::with_capacity(polar * azimuth);
        for (&z, &wz) in x.iter().zip(&w) {
            let rho = (1.0 - z * z).max(0.0).sqrt();
            for j in 0..azimuth {
                let phi = 2.0 * PI * j as f64 / azimuth as f64;
                nodes.push(([rho * phi.cos(), rho * phi.sin(), z], 0.5 * wz / azimuth as f64));
            }
        }
        Self { kind: SphereRuleKind::Product { polar, azimuth }, nodes }
    }

    pub fn kind(&self) -> SphereRuleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[(Vec3, f64)] {
        &self.nodes
    }

    /// Weighted average of `f` over the rule's directions.
    pub fn mean<F: FnMut(Vec3) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().map(|&(p, w)| w * f(p)).sum()
    }
}

impl Default for SphereRule {
    /// The 590-point Lebedev rule.
    fn default() -> Self {
        Self::lebedev(590).expect("bundled rule")
    }
}

/// Average of `exp(i xi . x)` over all directions of `xi` with `|xi| = k`:
/// `sin(k r) / (k r)` with `r = |x|`. This identity reduces every isotropic
/// spectral integral in the crate to a radial one.
pub fn plane_wave_mean(k: f64, r: f64) -> f64 {
    crate::special::sinc(k * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::{dot, norm};

    fn check_moments(rule: &SphereRule, tol: f64) {
        assert!((rule.mean(|_| 1.0) - 1.0).abs() < 1e-13);
        // <z^2> = 1/3, <x^2 y^2> = 1/15, <z^4> = 1/5
        assert!((rule.mean(|p| p[2] * p[2]) - 1.0 / 3.0).abs() < tol);
        assert!((rule.mean(|p| p[0] * p[0] * p[1] * p[1]) - 1.0 / 15.0).abs() < tol);
        assert!((rule.mean(|p| p[2].powi(4)) - 0.2).abs() < tol);
        for (p, _) in rule.nodes() {
            assert!((norm(*p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lebedev_rules_integrate_low_moments() {
        for n in LEBEDEV_SIZES {
            check_moments(&SphereRule::lebedev(n).unwrap(), 1e-13);
        }
        assert!(SphereRule::lebedev(51).is_err());
    }

    #[test]
    fn product_and_fibonacci_rules() {
        check_moments(&SphereRule::product(12, 24), 1e-13);
        check_moments(&SphereRule::fibonacci(4000), 1e-3);
        assert!(matches!(SphereRule::with_points(77).kind(), SphereRuleKind::Fibonacci(77)));
    }

    #[test]
    fn isotropy_identity_against_direct_sphere_quadrature() {
        let rule = SphereRule::lebedev(1202).unwrap();
        let x = [0.3, -0.4, 0.5];
        for k in [0.1, 1.0, 3.0, 7.0] {
            let direct = rule.mean(|e| (k * dot(e, x)).cos());
            let reduced = plane_wave_mean(k, norm(x));
            assert!((direct - reduced).abs() < 1e-12, "k={k}: {direct} vs {reduced}");
            // the imaginary part averages to zero by symmetry
            assert!(rule.mean(|e| (k * dot(e, x)).sin()).abs() < 1e-14);
        }
    }
}
