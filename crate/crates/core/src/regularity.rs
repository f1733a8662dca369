//! Hölder-exponent and fractional-Sobolev estimates from sampled fields.
//!
//! Exponents come from structure functions `S_q(l) = E |u(x + l) - u(x)|^q`:
//! under a self-similar ansatz `S_q ~ l^(q H)` the log-log slope divided by
//! `q` estimates the Hölder exponent `H`.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::domain;
use crate::fit::{check_fit_window, fit_loglog};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

/// Default lower time bound of time-axis fits.
pub const DEFAULT_T0: f64 = 0.25;
/// Largest accepted relative Monte Carlo error of a moment.
pub const MAX_REL_MC_ERROR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Space,
    Time,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Space => "space",
            Axis::Time => "time",
        })
    }
}

/// Replicated samples of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Samples {
    /// Periodic cubic fields `fields[replica]` with `n` points per axis and
    /// grid spacing `spacing`, flat in lattice order (last index fastest).
    Space { n: usize, spacing: f64, fields: Vec<Vec<f64>> },
    /// Series `paths[replica][path][i]` at times `t_start + i spacing`.
    Time { t_start: f64, spacing: f64, paths: Vec<Vec<Vec<f64>>> },
}

impl Samples {
    pub fn axis(&self) -> Axis {
        match self {
            Samples::Space { .. } => Axis::Space,
            Samples::Time { .. } => Axis::Time,
        }
    }

    pub fn replicas(&self) -> usize {
        match self {
            Samples::Space { fields, .. } => fields.len(),
            Samples::Time { paths, .. } => paths.len(),
        }
    }

    fn spacing(&self) -> f64 {
        match self {
            Samples::Space { spacing, .. } | Samples::Time { spacing, .. } => *spacing,
        }
    }
}

/// Options of [`structure_function_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureOptions {
    /// Time-axis pairs with an earlier time below `t0` are skipped.
    pub t0: f64,
    /// Refuse when a moment's relative Monte Carlo error exceeds this.
    pub max_rel_mc_error: f64,
}

impl Default for StructureOptions {
    fn default() -> Self {
        Self { t0: DEFAULT_T0, max_rel_mc_error: MAX_REL_MC_ERROR }
    }
}

/// Structure-function fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub axis: Axis,
    pub q: f64,
    pub lags: Vec<f64>,
    pub moments: Vec<f64>,
    pub mc_errors: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
    pub r2: f64,
}

impl ExponentFit {
    /// Hölder-exponent estimate `slope / q`.
    pub fn exponent(&self) -> f64 {
        self.slope / self.q
    }

    pub fn exponent_stderr(&self) -> f64 {
        self.stderr / self.q
    }
}

/// [`structure_function_with`] with default options.
pub fn structure_function(samples: &Samples, axis: Axis, q: f64, lags: &[usize]) -> Result<ExponentFit> {
    structure_function_with(samples, axis, q, lags, StructureOptions::default())
}

/// Replica-averaged `E |Delta_l u|^q` at integer lags (in grid units), with
/// the Monte Carlo error from the spread between replicas, and its log-log
/// fit against the physical lags.
///
/// Space samples average over every grid point and the three axes
/// (periodically). Time samples average over every pair of times at or
/// after `t0`.
pub fn structure_function_with(
    samples: &Samples,
    axis: Axis,
    q: f64,
    lags: &[usize],
    options: StructureOptions,
) -> Result<ExponentFit> {
    if samples.axis() != axis {
        return Err(Error::Config(format!("{axis}-axis fit requested on {}-axis samples", samples.axis())));
    }
    if !(q >= 2.0 && q.is_finite()) {
        return domain(format!("moment order q = {q} must be at least 2"));
    }
    if samples.replicas() < 2 {
        return Err(Error::Fit(format!(
            "{} replica(s): at least 2 are needed to estimate the Monte Carlo error",
            samples.replicas()
        )));
    }
    if lags.contains(&0) {
        return Err(Error::Fit("lags must be positive".into()));
    }
    let physical: Vec<f64> = lags.iter().map(|&l| l as f64 * samples.spacing()).collect();
    check_fit_window(&physical).map_err(|e| {
        Error::Fit(format!("{e}; supply at least 8 lags spanning 1.5 decades, e.g. 1, 2, 3, 4, 6, 8, 11, 16, 23, 32 grid units"))
    })?;
    let per_replica: Vec<Vec<f64>> = lags
        .par_iter()
        .map(|&lag| replica_moments(samples, q, lag, options.t0))
        .collect::<Result<_>>()?;
    let mut moments = Vec::with_capacity(lags.len());
    let mut mc_errors = Vec::with_capacity(lags.len());
    for values in &per_replica {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let err = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt()
        } else {
            0.0
        };
        moments.push(mean);
        mc_errors.push(err);
    }
    if moments.iter().all(|&m| m == 0.0) {
        return Err(Error::Fit("degenerate: every moment is zero (constant field)".into()));
    }
    for ((&lag, &m), &e) in physical.iter().zip(&moments).zip(&mc_errors) {
        if !(m > 0.0) || e > options.max_rel_mc_error * m {
            return Err(Error::Fit(format!(
                "moment at lag {lag} is {m:e} with Monte Carlo error {e:e}, above {}% relative; add replicas",
                100.0 * options.max_rel_mc_error
            )));
        }
    }
    let fit = fit_loglog(&physical, &moments)?;
    Ok(ExponentFit { axis, q, lags: physical, moments, mc_errors, slope: fit.slope, stderr: fit.stderr, r2: fit.r2 })
}

fn abs_pow(x: f64, q: f64) -> f64 {
    if q == 2.0 {
        x * x
    } else {
        x.abs().powf(q)
    }
}

/// Mean `|Delta|^q` at one lag, one value per replica.
fn replica_moments(samples: &Samples, q: f64, lag: usize, t0: f64) -> Result<Vec<f64>> {
    match samples {
        Samples::Space { n, fields, .. } => {
            let n = *n;
            if lag >= n {
                return Err(Error::Fit(format!("lag {lag} does not fit in a periodic grid of {n} points")));
            }
            fields
                .iter()
                .map(|f| {
                    if f.len() != n * n * n {
                        return Err(Error::Config(format!("field of {} values is not {n}^3", f.len())));
                    }
                    let mut acc = 0.0;
                    for i in 0..n {
                        let ip = (i + lag) % n;
                        for j in 0..n {
                            let jp = (j + lag) % n;
                            for l in 0..n {
                                let lp = (l + lag) % n;
                                let c = f[(i * n + j) * n + l];
                                acc += abs_pow(f[(ip * n + j) * n + l] - c, q)
                                    + abs_pow(f[(i * n + jp) * n + l] - c, q)
                                    + abs_pow(f[(i * n + j) * n + lp] - c, q);
                            }
                        }
                    }
                    Ok(acc / (3 * n * n * n) as f64)
                })
                .collect()
        }
        Samples::Time { t_start, spacing, paths } => {
            let first = ((t0 - t_start) / spacing - 1e-9).ceil().max(0.0) as usize;
            paths
                .iter()
                .map(|replica| {
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for path in replica {
                        for i in first..path.len().saturating_sub(lag) {
                            acc += abs_pow(path[i + lag] - path[i], q);
                            count += 1;
                        }
                    }
                    if count == 0 {
                        return Err(Error::Fit(format!("no time pairs at lag {lag} after t0 = {t0}")));
                    }
                    Ok(acc / count as f64)
                })
                .collect()
        }
    }
}

/// Box of grid points `lo[i] .. lo[i] + size[i]` inside a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subdomain {
    pub lo: [usize; 3],
    pub size: [usize; 3],
}

impl Subdomain {
    pub fn cube(lo: usize, size: usize) -> Self {
        Self { lo: [lo; 3], size: [size; 3] }
    }

    fn points(&self) -> usize {
        self.size.iter().product()
    }
}

/// Field values on a cubic grid (`n` per axis, last index fastest).
#[derive(Debug, Clone, Copy)]
pub struct FieldSlice<'a> {
    pub n: usize,
    pub spacing: f64,
    pub values: &'a [f64],
}

/// Discrete `W^{gamma,q}` norm of one or more slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevNormEstimate {
    pub gamma: f64,
    pub q: f64,
    pub domain: Subdomain,
    pub spacing: f64,
    /// Pairs closer than this many grid cells are left out.
    pub min_pair_cells: usize,
    pub lq_norm: f64,
    pub seminorm: f64,
    /// `lq_norm + seminorm`, averaged over slices.
    pub value: f64,
    /// Standard error of `value` over slices (0 for one slice).
    pub mc_error: f64,
    /// `(cutoff in cells, value)` for the cutoffs 1, 2, 3.
    pub sensitivity: Vec<(usize, f64)>,
}

/// Default exclusion radius of the discrete double sum, in cells.
pub const SOBOLEV_MIN_PAIR_CELLS: usize = 2;

/// `||g||_{L^q(O)} + (int_O int_O |g(x) - g(y)|^q / |x - y|^(3 + gamma q))^(1/q)`
/// with both integrals replaced by sums over grid points times the cell
/// volume, leaving out pairs closer than [`SOBOLEV_MIN_PAIR_CELLS`] cells.
pub fn sobolev_norm(slices: &[FieldSlice], gamma: f64, q: f64, subdomain: Subdomain) -> Result<SobolevNormEstimate> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("gamma = {gamma} must lie in (0, 1)"));
    }
    if !(q >= 1.0 && q.is_finite()) {
        return domain(format!("q = {q} must be at least 1"));
    }
    let first = slices.first().ok_or_else(|| Error::Config("no slices".into()))?;
    for s in slices {
        if s.values.len() != s.n.pow(3) || s.n != first.n || s.spacing != first.spacing {
            return Err(Error::Config("slices must share one grid".into()));
        }
    }
    if subdomain.points() == 0 || (0..3).any(|i| subdomain.lo[i] + subdomain.size[i] > first.n) {
        return Err(Error::Config(format!("subdomain {subdomain:?} is empty or leaves the {}^3 grid", first.n)));
    }
    let cutoffs = [1usize, 2, 3];
    let per_slice: Vec<(f64, [f64; 3])> = slices.par_iter().map(|s| sobolev_parts(s, gamma, q, subdomain, &cutoffs)).collect();
    let values_at = |c: usize| -> Vec<f64> { per_slice.iter().map(|(lq, semi)| lq + semi[c].powf(1.0 / q)).collect() };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let main = values_at(1);
    let value = mean(&main);
    let mc_error = if main.len() > 1 {
        (main.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (main.len() - 1) as f64 / main.len() as f64).sqrt()
    } else {
        0.0
    };
    let lq_norm = mean(&per_slice.iter().map(|p| p.0).collect::<Vec<_>>());
    let seminorm = mean(&per_slice.iter().map(|p| p.1[1].powf(1.0 / q)).collect::<Vec<_>>());
    Ok(SobolevNormEstimate {
        gamma,
        q,
        domain: subdomain,
        spacing: first.spacing,
        min_pair_cells: SOBOLEV_MIN_PAIR_CELLS,
        lq_norm,
        seminorm,
        value,
        mc_error,
        sensitivity: cutoffs.iter().enumerate().map(|(i, &c)| (c, mean(&values_at(i)))).collect(),
    })
}

/// `L^q` norm and the seminorm's `q`-th power for each pair cutoff.
fn sobolev_parts(slice: &FieldSlice, gamma: f64, q: f64, sub: Subdomain, cutoffs: &[usize; 3]) -> (f64, [f64; 3]) {
    let n = slice.n;
    let h = slice.spacing;
    let cell = h.powi(3);
    let at = |p: [usize; 3]| slice.values[(p[0] * n + p[1]) * n + p[2]];
    let [s0, s1, s2] = sub.size;
    let local: Vec<f64> = (0..s0)
        .flat_map(|i| (0..s1).flat_map(move |j| (0..s2).map(move |l| [i, j, l])))
        .map(|[i, j, l]| at([sub.lo[0] + i, sub.lo[1] + j, sub.lo[2] + l]))
        .collect();
    let lq = (local.iter().map(|g| g.abs().powf(q)).sum::<f64>() * cell).powf(1.0 / q);
    let idx = |i: usize, j: usize, l: usize| (i * s1 + j) * s2 + l;
    let mut sums = [0.0; 3];
    let exponent = 3.0 + gamma * q;
    for di in -(s0 as i64 - 1)..(s0 as i64) {
        for dj in -(s1 as i64 - 1)..(s1 as i64) {
            for dl in -(s2 as i64 - 1)..(s2 as i64) {
                let d2 = (di * di + dj * dj + dl * dl) as f64;
                if d2 == 0.0 {
                    continue;
                }
                let weight = (d2.sqrt() * h).powf(-exponent);
                let range = |d: i64, s: usize| (0.max(-d) as usize)..((s as i64).min(s as i64 - d) as usize);
                let mut acc = 0.0;
                for i in range(di, s0) {
                    let ip = (i as i64 + di) as usize;
                    for j in range(dj, s1) {
                        let jp = (j as i64 + dj) as usize;
                        for l in range(dl, s2) {
                            let lp = (l as i64 + dl) as usize;
                            acc += abs_pow(local[idx(ip, jp, lp)] - local[idx(i, j, l)], q);
                        }
                    }
                }
                for (sum, &c) in sums.iter_mut().zip(cutoffs) {
                    if d2 >= (c * c) as f64 {
                        *sum += weight * acc * cell * cell;
                    }
                }
            }
        }
    }
    (lq, sums)
}

/// Open exponent window `(0, high)` of joint Hölder continuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentWindow {
    pub low: f64,
    pub high: f64,
}

/// `high = min(gamma1, gamma2, (2 - beta) / 2, (1 + delta) / 2)`.
pub fn exponent_window(beta: f64, delta: f64, gamma1: f64, gamma2: f64) -> Result<ExponentWindow> {
    if !(beta > 0.0 && beta < 2.0) {
        return domain(format!("beta = {beta} must lie in (0, 2)"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return domain(format!("delta = {delta} must lie in (0, 1]"));
    }
    for (name, g) in [("gamma1", gamma1), ("gamma2", gamma2)] {
        if !(g > 0.0 && g <= 1.0) {
            return domain(format!("{name} = {g} must lie in (0, 1]"));
        }
    }
    let tau = ((2.0 - beta) / 2.0).min((1.0 + delta) / 2.0);
    Ok(ExponentWindow { low: 0.0, high: gamma1.min(gamma2).min(tau) })
}

/// Comparison of a fitted exponent with the window endpoint. The endpoint
/// is never "inside": an estimate statistically at the endpoint is
/// [`Verdict::AtEndpoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Estimate within tolerance of the endpoint.
    AtEndpoint,
    /// Smoother than the endpoint.
    AboveEndpoint,
    /// Rougher than the endpoint allows.
    BelowEndpoint,
    /// Estimate indistinguishable from zero.
    NoHolderRegularity,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::AtEndpoint => "consistent with the window endpoint",
            Verdict::AboveEndpoint => "smoother than the window endpoint",
            Verdict::BelowEndpoint => "rougher than the window endpoint",
            Verdict::NoHolderRegularity => "no Hölder regularity",
        })
    }
}

/// Classify `fit` against `window_high`; `tolerance` is the smallest band
/// used (the band is widened to two standard errors of the exponent).
pub fn verdict(fit: &ExponentFit, window_high: f64, tolerance: f64) -> Verdict {
    let h = fit.exponent();
    let band = tolerance.max(2.0 * fit.exponent_stderr());
    if h.abs() <= band {
        Verdict::NoHolderRegularity
    } else if (h - window_high).abs() <= band {
        Verdict::AtEndpoint
    } else if h > window_high {
        Verdict::AboveEndpoint
    } else {
        Verdict::BelowEndpoint
    }
}

/// `count` independent fractional Brownian paths `B_H(i / len)`,
/// `i = 0 ..= len`, by circulant embedding of fractional Gaussian noise
/// (Davies-Harte); the increments have exactly the fBm law.
pub fn fbm_paths(hurst: f64, len: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("Hurst index {hurst} must lie in (0, 1)"));
    }
    if len < 2 {
        return domain("path length must be at least 2");
    }
    let m = len;
    let gamma = |k: f64| 0.5 * ((k + 1.0).powf(2.0 * hurst) - 2.0 * k.powf(2.0 * hurst) + (k - 1.0).abs().powf(2.0 * hurst));
    let mut row: Vec<Complex64> = (0..2 * m)
        .map(|j| {
            let k = if j <= m { j } else { 2 * m - j };
            Complex64::new(gamma(k as f64), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(2 * m);
    fft.process(&mut row);
    let scale: Vec<f64> = row
        .iter()
        .map(|l| {
            if l.re < -1e-8 * row[0].re.abs() {
                log::warn!("circulant embedding eigenvalue {} clamped to 0", l.re);
            }
            (l.re.max(0.0) / (2 * m) as f64).sqrt()
        })
        .collect();
    let dt_h = (1.0 / len as f64).powf(hurst);
    let mut paths = Vec::with_capacity(count);
    for pair in 0..count.div_ceil(2) {
        let mut rng = stream(seed, Purpose::Synthetic, &[pair as u64]);
        let mut z: Vec<Complex64> = scale
            .iter()
            .map(|s| Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * s)
            .collect();
        fft.process(&mut z);
        for part in 0..2 {
            if paths.len() == count {
                break;
            }
            let mut path = Vec::with_capacity(len + 1);
            let mut acc = 0.0;
            path.push(0.0);
            for zj in &z[..m] {
                acc += if part == 0 { zj.re } else { zj.im } * dt_h;
                path.push(acc);
            }
            paths.push(path);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const LAGS: [usize; 10] = [1, 2, 3, 4, 6, 8, 11, 16, 23, 32];

    #[test]
    fn window_examples() {
        assert_relative_eq!(exponent_window(1.0, 0.5, 1.0, 1.0).unwrap().high, 0.5);
        assert_relative_eq!(exponent_window(1.8, 1.0, 0.3, 0.9).unwrap().high, 0.1, epsilon = 1e-12);
        assert_relative_eq!(exponent_window(0.2, 0.1, 1.0, 1.0).unwrap().high, 0.55, epsilon = 1e-12);
        assert!(exponent_window(2.0, 0.5, 1.0, 1.0).is_err());
        assert!(exponent_window(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(exponent_window(1.0, 0.5, 1.5, 1.0).is_err());
    }

    #[test]
    fn constant_field_is_degenerate() {
        let n = 8;
        let samples = Samples::Space { n, spacing: 0.1, fields: vec![vec![3.0; n * n * n]; 2] };
        let err = structure_function(&samples, Axis::Space, 2.0, &[1, 2, 3, 4, 5, 6, 7, 7]).unwrap_err();
        // 7 / 1 spans less than 1.5 decades: refused before the moments
        assert!(matches!(err, Error::Fit(_)));
        let paths = vec![vec![vec![1.0; 200]]; 2];
        let samples = Samples::Time { t_start: 0.0, spacing: 0.01, paths };
        let err = structure_function(&samples, Axis::Time, 2.0, &LAGS).unwrap_err();
        assert!(err.to_string().contains("degenerate"), "{err}");
    }

    #[test]
    fn narrow_lags_are_refused_with_guidance() {
        let paths = vec![vec![(0..100).map(|i| i as f64).collect()]; 2];
        let samples = Samples::Time { t_start: 0.0, spacing: 0.01, paths };
        let err = structure_function(&samples, Axis::Time, 2.0, &[1, 2, 3]).unwrap_err();
        assert!(err.to_string().contains("supply at least 8 lags"), "{err}");
    }

    #[test]
    fn fbm_recovers_hurst_index() {
        for h in [0.25, 0.5, 0.75] {
            let paths = fbm_paths(h, 4096, 20, 11).unwrap();
            let samples = Samples::Time { t_start: 0.0, spacing: 1.0 / 4096.0, paths: paths.into_iter().map(|p| vec![p]).collect() };
            let fit = structure_function_with(&samples, Axis::Time, 2.0, &LAGS, StructureOptions { t0: 0.0, ..Default::default() })
                .unwrap();
            assert!((fit.exponent() - h).abs() < 0.03, "H = {h}: {}", fit.exponent());
        }
    }

    #[test]
    fn sobolev_of_constant_and_linear() {
        let n = 12;
        let h = 1.0 / n as f64;
        let c = vec![2.0; n * n * n];
        let est = sobolev_norm(&[FieldSlice { n, spacing: h, values: &c }], 0.5, 2.0, Subdomain::cube(0, n)).unwrap();
        assert_eq!(est.seminorm, 0.0);
        // |c| |O|^(1/q) on the unit box
        assert_relative_eq!(est.lq_norm, 2.0, epsilon = 1e-12);

        // cell-centred samples of g(x) = x_1
        let value = |n: usize| {
            let h = 1.0 / n as f64;
            let g: Vec<f64> = (0..n * n * n).map(|idx| ((idx / (n * n)) as f64 + 0.5) * h).collect();
            sobolev_norm(&[FieldSlice { n, spacing: h, values: &g }], 0.5, 2.0, Subdomain::cube(0, n)).unwrap().value
        };
        let (coarse, fine) = (value(16), value(32));
        assert!(coarse.is_finite() && fine.is_finite());
        assert!((fine / coarse - 1.0).abs() < 0.05, "{coarse} -> {fine}");
    }
}
