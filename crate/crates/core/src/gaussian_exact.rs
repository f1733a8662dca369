//! Exact second-order structure of the Gaussian solution
//! `u(t) = int_0^t G(t - s) * W(ds)` driven by Riesz-correlated noise
//! (`sigma = 1`, no drift, zero initial data), and exact spectral sampling
//! of it on a lattice.
//!
//! Each Fourier mode of wavenumber `kappa` is a stochastic convolution with
//! covariance `C(s, t_bar) = int_0^s sin((s - r) kappa) sin((t_bar - r) kappa) dr / kappa^2`
//! in time; integrating against the spectral density reduces every
//! increment variance to a 1-D radial integral.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{spectral_constant, Beta};
use crate::error::domain;
use crate::fit::{fit_loglog, LogLogFit};
use crate::lattice::{white_modes, Fft3, SpectralLattice};
use crate::quadrature::oscillatory::{RadialLayout, TailTerm};
use crate::quadrature::{tanh_sinh, QuadratureResult, Tolerance};
use crate::rng::Purpose;
use crate::special::one_minus_sinc;
use crate::vec3::{dot, Vec3};
use crate::Result;

/// Parameters of the Gaussian case: `f = |x|^-beta`, observation time `t`
/// for spatial increments and a lower time `t0` for time increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCaseParams {
    beta: Beta,
    t: f64,
    t0: f64,
}

impl GaussianCaseParams {
    pub fn new(beta: f64, t: f64, t0: f64) -> Result<Self> {
        let beta = Beta::new(beta)?;
        if !(t0 > 0.0 && t0 <= t && t.is_finite()) {
            return domain(format!("need 0 < t0 <= t (got t0 = {t0}, t = {t})"));
        }
        Ok(Self { beta, t, t0 })
    }

    /// `t = 1`, `t0 = 0.5`.
    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0, 0.5)
    }

    pub fn beta(&self) -> f64 {
        self.beta.get()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
}

/// `Var` of one mode at time `t`: `int_0^t sin(s kappa)^2 ds / kappa^2`
/// `= t / (2 kappa^2) - sin(2 t kappa) / (4 kappa^3)`.
pub fn mode_variance(kappa: f64, t: f64) -> f64 {
    mode_covariance(kappa, t, t)
}

/// `C(s, t_bar)` for `s <= t_bar` (arguments are ordered internally).
pub fn mode_covariance(kappa: f64, s: f64, t_bar: f64) -> f64 {
    let (s, t_bar) = if s <= t_bar { (s, t_bar) } else { (t_bar, s) };
    let g = t_bar - s;
    if kappa * t_bar < 1e-3 {
        // sin(a) sin(b) / kappa^2 = u (u + g) (1 - kappa^2 (u^2 + (u + g)^2) / 6 + ...)
        let base = s.powi(3) / 3.0 + g * s * s / 2.0;
        let second = 2.0 * s.powi(5) / 5.0 + g * s.powi(4) + g * g * s.powi(3) + g.powi(3) * s * s / 2.0;
        return base - kappa * kappa * second / 6.0;
    }
    let k2 = kappa * kappa;
    (s * (g * kappa).cos() - (((2.0 * s + g) * kappa).sin() - (g * kappa).sin()) / (2.0 * kappa)) / (2.0 * k2)
}

/// Radial integrand `r^(beta-3) t (1 - sinc(r x)) (1 - sinc(2 t r))` of the
/// spatial increment variance (without the constant `c 4 pi`).
fn spatial_integrand(beta: f64, t: f64, x: f64, r: f64) -> f64 {
    r.powf(beta - 3.0) * t * one_minus_sinc(r * x) * one_minus_sinc(2.0 * t * r)
}

/// Large-`r` expansion of [`spatial_integrand`]: the product of
/// `1 - sin(x r) / (x r)` and `1 - sin(2 t r) / (2 t r)`, with the product of
/// sines written as a difference of cosines.
fn spatial_tail(beta: f64, t: f64, x: f64) -> Vec<TailTerm> {
    let p = beta - 3.0;
    let beat = (2.0 * t - x).abs();
    vec![
        TailTerm::power(t, p),
        TailTerm::sin(-t / x, p - 1.0, x),
        TailTerm::sin(-0.5, p - 1.0, 2.0 * t),
        TailTerm::cos(-1.0 / (4.0 * x), p - 2.0, 2.0 * t + x),
        if beat > 1e-12 { TailTerm::cos(1.0 / (4.0 * x), p - 2.0, beat) } else { TailTerm::power(1.0 / (4.0 * x), p - 2.0) },
    ]
}

/// Radial integrand of `T1`: `r^(beta-3) (g/2) (1 - sinc(2 g r))`.
fn new_noise_integrand(beta: f64, g: f64, r: f64) -> f64 {
    r.powf(beta - 3.0) * 0.5 * g * one_minus_sinc(2.0 * g * r)
}

/// Radial integrand of `T2`, using
/// `(sin(sigma r) - sin(g r)) / (2 r) = cos(t_bar r) sin(t r) / r`.
fn propagated_integrand(beta: f64, t: f64, t_bar: f64, r: f64) -> f64 {
    let half = (0.5 * (t_bar - t) * r).sin();
    r.powf(beta - 3.0) * 2.0 * half * half * (t + (t_bar * r).cos() * (t * r).sin() / r)
}

/// `E |u(t, x) - u(t, 0)|^2` for `|x| = x_abs`:
/// `c 4 pi int r^(beta-3) t (1 - sinc(r x)) (1 - sinc(2 t r)) dr`.
pub fn spatial_increment_variance(params: &GaussianCaseParams, x_abs: f64, tol: Tolerance) -> Result<QuadratureResult> {
    if !(x_abs > 0.0 && x_abs.is_finite()) {
        return domain(format!("|x| = {x_abs} must be positive"));
    }
    let beta = params.beta();
    let layout = RadialLayout::for_tail(spatial_tail(beta, params.t(), x_abs), tol);
    let q = layout.integrate(|r| spatial_integrand(beta, params.t(), x_abs, r));
    let q = q.scale(spectral_constant(beta) * 4.0 * PI);
    q.require("spatial increment variance")
}

/// The two parts of a time increment variance at `0 < t <= t_bar`:
/// `T1` is the noise of `(t, t_bar]`, `T2` the change of the response to
/// the noise of `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeIncrementParts {
    pub t1: QuadratureResult,
    pub t2: QuadratureResult,
    pub total: QuadratureResult,
}

/// `E |u(t_bar, x) - u(t, x)|^2 = T1 + T2` with (`g = t_bar - t`,
/// `sigma = t + t_bar`)
/// `T1 = c 4 pi int r^(beta-3) (g/2 - sin(2 g r) / (4 r)) dr` and
/// `T2 = c 4 pi int r^(beta-3) 2 sin(g r / 2)^2 (t + (sin(sigma r) - sin(g r)) / (2 r)) dr`.
pub fn time_increment_variance(params: &GaussianCaseParams, t: f64, t_bar: f64, tol: Tolerance) -> Result<TimeIncrementParts> {
    if !(t >= params.t0() && t <= t_bar) {
        return domain(format!("need t0 = {} <= t <= t_bar (got t = {t}, t_bar = {t_bar})", params.t0()));
    }
    let g = t_bar - t;
    if g == 0.0 {
        let z = QuadratureResult::exact(0.0);
        return Ok(TimeIncrementParts { t1: z, t2: z, total: z });
    }
    let beta = params.beta();
    let p = beta - 3.0;
    let c = spectral_constant(beta) * 4.0 * PI;
    let sigma = t + t_bar;

    let t1_layout = RadialLayout::for_tail(vec![TailTerm::power(0.5 * g, p), TailTerm::sin(-0.25, p - 1.0, 2.0 * g)], tol);
    // g/2 - sin(2 g r) / (4 r) = (g/2) (1 - sinc(2 g r))
    let t1 = t1_layout.integrate(|r| new_noise_integrand(beta, g, r)).scale(c);

    let mut tail = vec![
        TailTerm::power(t, p),
        TailTerm::cos(-t, p, g),
        TailTerm::sin(0.5, p - 1.0, sigma),
        TailTerm::sin(-0.5, p - 1.0, g),
        TailTerm::sin(-0.25, p - 1.0, sigma + g),
        TailTerm::sin(0.25, p - 1.0, 2.0 * g),
    ];
    tail.push(TailTerm::sin(-0.25, p - 1.0, 2.0 * t));
    let t2_layout = RadialLayout::for_tail(tail, tol);
    let t2 = t2_layout.integrate(|r| propagated_integrand(beta, t, t_bar, r)).scale(c);
    let t1 = t1.require("time increment variance, new-noise part")?;
    let t2 = t2.require("time increment variance, propagated part")?;
    Ok(TimeIncrementParts { t1, t2, total: t1 + t2 })
}

/// Pieces of the spatial increment variance over `|xi| <= 1`,
/// `1 <= |xi| <= 1/|x|` and `|xi| >= 1/|x|` (for `|x| < 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSplit {
    pub low: QuadratureResult,
    pub middle: QuadratureResult,
    pub high: QuadratureResult,
    pub total: QuadratureResult,
}

pub fn spatial_increment_split(params: &GaussianCaseParams, x_abs: f64, tol: Tolerance) -> Result<SpectralSplit> {
    if !(x_abs > 0.0 && x_abs < 1.0) {
        return domain(format!("the split needs 0 < |x| < 1 (got {x_abs})"));
    }
    let beta = params.beta();
    let (t, x) = (params.t(), x_abs);
    let c = spectral_constant(beta) * 4.0 * PI;
    let f = |r: f64| spatial_integrand(beta, t, x, r);
    let layout = RadialLayout::for_tail(spatial_tail(beta, t, x), tol);
    let low = tanh_sinh::integrate(f, 0.0, 1.0, tol).scale(c);
    let middle = layout.integrate_range(f, 1.0, 1.0 / x).scale(c);
    let high = layout.integrate_from(f, 1.0 / x).scale(c);
    Ok(SpectralSplit { low, middle, high, total: low + middle + high })
}

/// Fitted exponents of the three pieces of [`spatial_increment_split`] and
/// of their sum over a grid of `|x|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitExponents {
    pub low: LogLogFit,
    pub middle: LogLogFit,
    pub high: LogLogFit,
    pub total: LogLogFit,
    /// Largest `|sum of pieces - direct value| / direct value` over the grid.
    pub recombination_error: f64,
}

pub fn split_exponents(params: &GaussianCaseParams, xs: &[f64], tol: Tolerance) -> Result<SplitExponents> {
    let rows: Vec<Result<(SpectralSplit, QuadratureResult)>> = xs
        .par_iter()
        .map(|&x| Ok((spatial_increment_split(params, x, tol)?, spatial_increment_variance(params, x, tol)?)))
        .collect();
    let rows: Vec<(SpectralSplit, QuadratureResult)> = rows.into_iter().collect::<Result<_>>()?;
    let pick = |f: fn(&SpectralSplit) -> f64| -> Vec<f64> { rows.iter().map(|(s, _)| f(s)).collect() };
    let recombination_error = rows
        .iter()
        .map(|(s, d)| (s.total.value - d.value).abs() / d.value)
        .fold(0.0, f64::max);
    Ok(SplitExponents {
        low: fit_loglog(xs, &pick(|s| s.low.value))?,
        middle: fit_loglog(xs, &pick(|s| s.middle.value))?,
        high: fit_loglog(xs, &pick(|s| s.high.value))?,
        total: fit_loglog(xs, &pick(|s| s.total.value))?,
        recombination_error,
    })
}

/// One row of a variance table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub lag: f64,
    pub variance: f64,
    pub quad_error: f64,
}

pub fn spatial_variance_table(params: &GaussianCaseParams, xs: &[f64], tol: Tolerance) -> Result<Vec<VarianceRow>> {
    xs.par_iter()
        .map(|&x| {
            let q = spatial_increment_variance(params, x, tol)?;
            Ok(VarianceRow { lag: x, variance: q.value, quad_error: q.abs_error })
        })
        .collect()
}

/// Time increment table at base time `t`: rows for the total and for `T1`.
pub fn time_variance_table(params: &GaussianCaseParams, t: f64, gaps: &[f64], tol: Tolerance) -> Result<(Vec<VarianceRow>, Vec<VarianceRow>)> {
    let parts: Vec<Result<TimeIncrementParts>> = gaps.par_iter().map(|&g| time_increment_variance(params, t, t + g, tol)).collect();
    let parts: Vec<TimeIncrementParts> = parts.into_iter().collect::<Result<_>>()?;
    let row = |g: f64, q: QuadratureResult| VarianceRow { lag: g, variance: q.value, quad_error: q.abs_error };
    Ok((
        gaps.iter().zip(&parts).map(|(&g, p)| row(g, p.total)).collect(),
        gaps.iter().zip(&parts).map(|(&g, p)| row(g, p.t1)).collect(),
    ))
}

/// Largest gap `g*` of a (sorted ascending) table such that every local
/// log-log slope between consecutive gaps up to `g*` lies within `band` of
/// `target`; `None` if already the first slope misses.
pub fn onset_gap(rows: &[VarianceRow], target: f64, band: f64) -> Option<f64> {
    let mut onset = None;
    for w in rows.windows(2) {
        let slope = (w[1].variance / w[0].variance).ln() / (w[1].lag / w[0].lag).ln();
        if (slope - target).abs() <= band {
            onset = Some(w[1].lag);
        } else {
            break;
        }
    }
    onset
}

/// Lattice-sum analogue of [`spatial_increment_variance`]:
/// `sum_k w_k 2 (1 - cos(k.x)) V(t, |k|)` over active modes.
pub fn lattice_spatial_increment_variance(lattice: &SpectralLattice, weights: &[f64], t: f64, x: Vec3) -> f64 {
    (0..lattice.len())
        .filter(|&idx| weights[idx] > 0.0)
        .map(|idx| {
            let k = lattice.wavevector(idx);
            let kappa = dot(k, k).sqrt();
            weights[idx] * 2.0 * (1.0 - dot(k, x).cos()) * mode_variance(kappa, t)
        })
        .sum()
}

/// Lattice-sum variance of `u(t, x)` at any point.
pub fn lattice_point_variance(lattice: &SpectralLattice, weights: &[f64], t: f64) -> f64 {
    (0..lattice.len())
        .filter(|&idx| weights[idx] > 0.0)
        .map(|idx| {
            let k = lattice.wavevector(idx);
            weights[idx] * mode_variance(dot(k, k).sqrt(), t)
        })
        .sum()
}

/// Joint samples of the Gaussian solution on a lattice at several times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSample {
    pub times: Vec<f64>,
    /// One real field per time, lattice order.
    pub fields: Vec<Vec<f64>>,
    pub seed: u64,
    pub replica: u64,
    /// Largest diagonal jitter added to any per-mode time covariance.
    pub max_jitter: f64,
}

/// Exact-in-law sample of `u(t_i, .)` for the given times: each mode's
/// covariance over the times, `w_k C(t_i, t_j; |k|)`, is factorized by
/// Cholesky and applied to independent Hermitian white-noise modes, one per
/// time. The factorization is shared by all modes of equal `|k|`. The noise
/// covariance enters only through the lattice mode `weights`.
pub fn sample_gaussian_solution(
    lattice: &SpectralLattice,
    weights: &[f64],
    times: &[f64],
    seed: u64,
    replica: u64,
) -> Result<GaussianSample> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return domain("sampling times must be positive and nonempty");
    }
    let m = times.len();
    let fft = Fft3::new(lattice.n());
    let noise: Vec<Vec<Complex64>> = (0..m)
        .map(|j| white_modes(lattice, &fft, seed, Purpose::GaussianSample, &[replica, j as u64]))
        .collect();
    let mut factors: HashMap<u64, (Vec<f64>, f64)> = HashMap::new();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); lattice.len()]; m];
    let mut max_jitter: f64 = 0.0;
    for idx in 0..lattice.len() {
        let w = weights[idx];
        if w <= 0.0 {
            continue;
        }
        let key = lattice.mode_norm2(idx);
        let (chol, jitter) = factors.entry(key).or_insert_with(|| {
            let kappa = (key as f64).sqrt() * lattice.dk();
            let mut cov = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    cov[i * m + j] = mode_covariance(kappa, times[i], times[j]);
                }
            }
            cholesky_with_jitter(&cov, m)
        });
        max_jitter = max_jitter.max(*jitter);
        let sw = w.sqrt();
        for i in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..=i {
                acc += noise[j][idx] * chol[i * m + j];
            }
            out[i][idx] = acc * sw;
        }
    }
    if max_jitter > 0.0 {
        log::warn!("per-mode time covariance needed diagonal jitter up to {max_jitter:e}");
    }
    let fields = out.iter().map(|modes| fft.to_real(modes)).collect();
    Ok(GaussianSample { times: times.to_vec(), fields, seed, replica, max_jitter })
}

/// Lower Cholesky factor of a symmetric `m x m` matrix; when a pivot is not
/// positive, a diagonal jitter of at most `1e-12` times the largest diagonal
/// entry is added (and reported).
fn cholesky_with_jitter(a: &[f64], m: usize) -> (Vec<f64>, f64) {
    let scale = (0..m).map(|i| a[i * m + i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    loop {
        let mut l = vec![0.0; m * m];
        let mut ok = true;
        'outer: for i in 0..m {
            for j in 0..=i {
                let mut s = a[i * m + j] + if i == j { jitter } else { 0.0 };
                for k in 0..j {
                    s -= l[i * m + k] * l[j * m + k];
                }
                if i == j {
                    if s <= 0.0 {
                        ok = false;
                        break 'outer;
                    }
                    l[i * m + i] = s.sqrt();
                } else {
                    l[i * m + j] = s / l[j * m + j];
                }
            }
        }
        if ok {
            return (l, jitter);
        }
        if jitter >= 1e-12 * scale {
            // semidefinite to working precision: clamp the failing pivots
            return (cholesky_clamped(a, m, jitter), jitter);
        }
        jitter = if jitter == 0.0 { 1e-16 * scale } else { (jitter * 10.0).min(1e-12 * scale) };
    }
}

fn cholesky_clamped(a: &[f64], m: usize, jitter: f64) -> Vec<f64> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j] + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                l[i * m + i] = s.max(0.0).sqrt();
            } else {
                l[i * m + j] = if l[j * m + j] > 0.0 { s / l[j * m + j] } else { 0.0 };
            }
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol() -> Tolerance {
        Tolerance::new(1e-15, 1e-9)
    }

    #[test]
    fn mode_covariance_matches_direct_integral() {
        for (kappa, s, tb) in [(3.0, 0.7, 1.0), (0.5, 1.0, 1.0), (10.0, 0.2, 0.9), (1e-4, 0.5, 0.8)] {
            let direct = tanh_sinh::integrate(
                |r: f64| ((s - r) * kappa).sin() * ((tb - r) * kappa).sin() / (kappa * kappa),
                0.0,
                s,
                Tolerance::new(1e-300, 1e-13),
            );
            assert_relative_eq!(mode_covariance(kappa, s, tb), direct.value, max_relative = 1e-9);
        }
        let (k, t) = (2.0_f64, 1.3_f64);
        assert_relative_eq!(mode_variance(k, t), t / (2.0 * k * k) - (2.0 * t * k).sin() / (4.0 * k.powi(3)), max_relative = 1e-13);
    }

    #[test]
    fn time_parts_recombine_to_mode_covariances() {
        // r^2 (V(t_bar) + V(t) - 2 C(t, t_bar)) r^(beta-3) is the radial
        // integrand of the full time increment
        let beta = 0.8;
        for (t, tb) in [(0.5, 0.51), (1.0, 1.3), (0.7, 2.0)] {
            for r in [0.01, 0.7, 3.0, 45.0] {
                let parts = new_noise_integrand(beta, tb - t, r) + propagated_integrand(beta, t, tb, r);
                let modes = r.powf(beta - 1.0)
                    * (mode_variance(r, tb) + mode_variance(r, t) - 2.0 * mode_covariance(r, t, tb));
                assert_relative_eq!(parts, modes, max_relative = 1e-8, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn tail_expansions_match_integrands() {
        for (beta, t, x) in [(1.0, 1.0, 0.01), (0.5, 0.7, 0.3), (1.5, 1.0, 2.0)] {
            for r in [300.0, 1234.5, 9876.0] {
                let e: f64 = spatial_tail(beta, t, x).iter().map(|term| term.eval(r)).sum();
                assert_relative_eq!(e, spatial_integrand(beta, t, x, r), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn time_increment_against_plain_truncated_quadrature() {
        // beta = 1.5: the integrand decays like r^-1.5, so a long plain
        // Gauss-Kronrod range plus the mean tail t r^(beta-3) suffices
        let params = GaussianCaseParams::new(1.5, 1.0, 0.5).unwrap();
        let (t, tb) = (0.5, 0.6);
        let big_r = 2e4;
        let breaks: Vec<f64> = (0..=20_000).map(|i| big_r * i as f64 / 20_000.0).collect();
        let body = crate::quadrature::gauss_kronrod::integrate_with_breaks(
            |r| new_noise_integrand(1.5, tb - t, r) + propagated_integrand(1.5, t, tb, r),
            &breaks,
            Tolerance::new(1e-14, 1e-10),
        );
        // mean of the tail: (g/2 + t) r^(beta-3)
        let tail = (0.5 * (tb - t) + t) * big_r.powf(-0.5) / 0.5;
        let plain = spectral_constant(1.5) * 4.0 * PI * (body.value + tail);
        let exact = time_increment_variance(&params, t, tb, tol()).unwrap();
        assert_relative_eq!(exact.total.value, plain, max_relative = 1e-4);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let params = GaussianCaseParams::with_beta(1.0).unwrap();
        assert_eq!(time_increment_variance(&params, 0.7, 0.7, tol()).unwrap().total.value, 0.0);
        assert!(time_increment_variance(&params, 0.2, 0.7, tol()).is_err());
        assert!(spatial_increment_variance(&params, 0.0, tol()).is_err());
        assert!(GaussianCaseParams::new(2.0, 1.0, 0.5).is_err());
        assert!(GaussianCaseParams::new(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn spatial_increment_small_lags() {
        let params = GaussianCaseParams::with_beta(1.0).unwrap();
        let xs = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
        let v: Vec<f64> = xs.iter().map(|&x| spatial_increment_variance(&params, x, tol()).unwrap().value).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn split_recombines() {
        let params = GaussianCaseParams::with_beta(1.0).unwrap();
        let s = spatial_increment_split(&params, 0.02, tol()).unwrap();
        let d = spatial_increment_variance(&params, 0.02, tol()).unwrap();
        assert_relative_eq!(s.total.value, d.value, max_relative = 1e-7);
    }

    #[test]
    fn onset_gap_stops_at_first_miss() {
        let rows: Vec<VarianceRow> = [1e-3, 1e-2, 1e-1, 1.0]
            .iter()
            .zip([1e-3, 1e-2, 1e-1, 0.2])
            .map(|(&lag, variance)| VarianceRow { lag, variance, quad_error: 0.0 })
            .collect();
        assert_eq!(onset_gap(&rows, 1.0, 0.05), Some(1e-1));
        assert_eq!(onset_gap(&rows, 2.0, 0.05), None);
    }

    #[test]
    fn sampling_is_deterministic_and_matches_lattice_variance() {
        let lat = SpectralLattice::new(4.0, 8, None).unwrap();
        let spec = crate::covariance::CovarianceSpec::riesz(1.0).unwrap();
        let w = lat.mode_weights(&spec).unwrap();
        let times = [0.5, 1.0];
        let a = sample_gaussian_solution(&lat, &w, &times, 11, 0).unwrap();
        let b = sample_gaussian_solution(&lat, &w, &times, 11, 0).unwrap();
        assert_eq!(a, b);
        // every grid point of every replica is a draw of u(1, x)
        let reps = 400;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for rep in 0..reps {
            let s = sample_gaussian_solution(&lat, &w, &times, 11, rep).unwrap();
            sum_sq += s.fields[1].iter().map(|v| v * v).sum::<f64>();
            count += s.fields[1].len();
        }
        let empirical = sum_sq / count as f64;
        let predicted = lattice_point_variance(&lat, &w, 1.0);
        // points of one replica are correlated; 400 replicas give a few percent
        assert_relative_eq!(empirical, predicted, max_relative = 0.05);
    }
}
