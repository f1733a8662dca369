//! Minimal 3-vector helpers. Points and wave vectors are plain `[f64; 3]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(c: f64, a: Vec3) -> Vec3 {
    [c * a[0], c * a[1], c * a[2]]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthonormal frame `(e1, e2, axis)` with `axis` the normalized input.
pub fn frame(axis: Vec3) -> (Vec3, Vec3, Vec3) {
    let n = norm(axis);
    let a = scale(1.0 / n, axis);
    let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = cross(helper, a);
    let e1 = scale(1.0 / norm(e1), e1);
    let e2 = cross(a, e1);
    (e1, e2, a)
}

/// Uniform random direction on the unit sphere.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = norm(v);
        if n > 1e-12 {
            return scale(1.0 / n, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal() {
        for axis in [[0.0, 0.0, 2.0], [1.0, 0.0, 0.0], [0.3, -1.2, 0.7]] {
            let (e1, e2, a) = frame(axis);
            assert!((norm(e1) - 1.0).abs() < 1e-14);
            assert!((norm(e2) - 1.0).abs() < 1e-14);
            assert!(dot(e1, e2).abs() < 1e-14);
            assert!(dot(e1, a).abs() < 1e-14);
            assert!((dot(a, axis) - norm(axis)).abs() < 1e-14);
        }
    }
}
