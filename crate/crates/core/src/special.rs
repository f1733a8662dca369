//! Small special functions evaluated without cancellation.

use statrs::function::gamma::{gamma, ln_gamma};

/// `sin(z) / z` with the removable point `z = 0`.
pub fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 * (1.0 - z2 / 20.0)
    } else {
        z.sin() / z
    }
}

/// `1 - sin(z) / z`, accurate for small `z`.
pub fn one_minus_sinc(z: f64) -> f64 {
    let z2 = z * z;
    if z.abs() < 0.1 {
        // z^2/6 - z^4/120 + z^6/5040 - z^8/362880 + ...
        let mut term = z2 / 6.0;
        let mut sum = term;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= -z2 / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
            sum += term;
            k += 1.0;
        }
        sum
    } else {
        1.0 - z.sin() / z
    }
}

/// `(z - sin z) / z^3`, accurate for small `z`.
pub fn sin_remainder3(z: f64) -> f64 {
    if z == 0.0 {
        1.0 / 6.0
    } else if z.abs() < 0.1 {
        one_minus_sinc(z) / (z * z)
    } else {
        (z - z.sin()) / (z * z * z)
    }
}

/// Euler gamma function.
pub fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}

/// Natural log of `|Gamma(x)|` for positive `x`.
pub fn ln_gamma_fn(x: f64) -> f64 {
    ln_gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_argument_branches() {
        assert_eq!(sinc(0.0), 1.0);
        assert_eq!(one_minus_sinc(0.0), 0.0);
        assert!((sin_remainder3(0.0) - 1.0 / 6.0).abs() < 1e-16);
        let z: f64 = 1e-3;
        assert!((one_minus_sinc(z) - (z * z / 6.0 - z.powi(4) / 120.0)).abs() < 1e-15 * z * z);
    }

    proptest! {
        #[test]
        fn branches_agree_near_switch(z in 0.05f64..0.2) {
            let series = one_minus_sinc(z);
            let direct = 1.0 - z.sin() / z;
            prop_assert!((series - direct).abs() < 1e-13);
            let r = sin_remainder3(z);
            prop_assert!((r - (z - z.sin()) / (z * z * z)).abs() < 1e-10);
        }
    }
}
