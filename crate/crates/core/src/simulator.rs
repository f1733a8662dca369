//! Pseudo-spectral solver for the mild stochastic wave equation
//! `u = w + int G(t - s) sigma(u) W(ds, dy) + int G(t - s) * b(u) ds`
//! on the periodic box of a [`SpectralLattice`].
//!
//! Every Fourier mode is advanced by the exact wave propagator
//! `(u, v) -> (cos(k dt) u + sin(k dt) / k v, -k sin(k dt) u + cos(k dt) v)`,
//! so the linear part is exact for any step. Forcing enters through the
//! Duhamel weights of the step:
//!
//! * the noise is white in time. On each step it is represented by its first
//!   two Legendre moments `xi_0 = int dW`, `xi_1 = int P_1 dW`, which are
//!   independent Gaussian fields with variances `dt w_k` and `dt w_k / 3`.
//!   `sigma(u)` is frozen at the start of the step (Ito). The sin/cos
//!   weights are integrated exactly against the projected noise.
//! * with constant `sigma` the forcing is linear and the increments are drawn
//!   exactly in law from their per-mode 2x2 covariance.
//! * `b(u)` is frozen at the start of the step and integrated with the
//!   midpoint rule.
//!
//! Pointwise nonlinearities are evaluated on the grid after an inverse
//! transform and dealiased by the two-thirds rule after the forward
//! transform.
//!
//! A second engine stores the whole forcing history and evaluates the
//! Duhamel sums directly. It drives the Picard iteration and the comparison
//! with the mollified kernel `G_n`, whose Fourier transform
//! `F psi(t k / n) sin(t k) / k` changes with the elapsed time and admits no
//! step-by-step propagator.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceSpec;
use crate::error::domain;
use crate::gaussian_exact::mode_variance;
use crate::lattice::{hermitian_defect, white_modes, Fft3, SpectralLattice};
use crate::quadrature::gauss_legendre;
use crate::rng::Purpose;
use crate::special::sinc;
use crate::vec3::{dot, norm, sub, Vec3};
use crate::wave_kernel::{fourier_psi, InitialData};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Scalar Lipschitz nonlinearity used for `sigma` and `b`.
///
/// Text form (also used in configs and manifests): `0`, a number `c`,
/// `affine:a,c` (`a u + c`), `sin`, `cos`, `sin:a,w` (`a sin(w u)`),
/// `cos:a,w` (`a cos(w u)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScalarFn {
    Zero,
    Constant(f64),
    Affine { slope: f64, offset: f64 },
    Sin { amplitude: f64, frequency: f64 },
    Cos { amplitude: f64, frequency: f64 },
}

impl ScalarFn {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => c,
            ScalarFn::Affine { slope, offset } => slope * u + offset,
            ScalarFn::Sin { amplitude, frequency } => amplitude * (frequency * u).sin(),
            ScalarFn::Cos { amplitude, frequency } => amplitude * (frequency * u).cos(),
        }
    }

    /// Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            ScalarFn::Zero | ScalarFn::Constant(_) => 0.0,
            ScalarFn::Affine { slope, .. } => slope.abs(),
            ScalarFn::Sin { amplitude, frequency } | ScalarFn::Cos { amplitude, frequency } => {
                (amplitude * frequency).abs()
            }
        }
    }

    /// The value when the function does not depend on `u`.
    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            ScalarFn::Zero => Some(0.0),
            ScalarFn::Constant(c) => Some(c),
            ScalarFn::Affine { slope, offset } if slope == 0.0 => Some(offset),
            ScalarFn::Sin { amplitude, frequency } if amplitude == 0.0 || frequency == 0.0 => Some(0.0),
            ScalarFn::Cos { amplitude, frequency } if amplitude == 0.0 || frequency == 0.0 => Some(amplitude),
            _ => None,
        }
    }

    fn check(self) -> Result<Self> {
        let finite = match self {
            ScalarFn::Zero => true,
            ScalarFn::Constant(c) => c.is_finite(),
            ScalarFn::Affine { slope, offset } => slope.is_finite() && offset.is_finite(),
            ScalarFn::Sin { amplitude, frequency } | ScalarFn::Cos { amplitude, frequency } => {
                amplitude.is_finite() && frequency.is_finite()
            }
        };
        if finite {
            Ok(self)
        } else {
            Err(Error::Config(format!("nonlinearity {self} has non-finite parameters")))
        }
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScalarFn::Zero => write!(f, "0"),
            ScalarFn::Constant(c) => write!(f, "{c}"),
            ScalarFn::Affine { slope, offset } => write!(f, "affine:{slope},{offset}"),
            ScalarFn::Sin { amplitude, frequency } if amplitude == 1.0 && frequency == 1.0 => write!(f, "sin"),
            ScalarFn::Cos { amplitude, frequency } if amplitude == 1.0 && frequency == 1.0 => write!(f, "cos"),
            ScalarFn::Sin { amplitude, frequency } => write!(f, "sin:{amplitude},{frequency}"),
            ScalarFn::Cos { amplitude, frequency } => write!(f, "cos:{amplitude},{frequency}"),
        }
    }
}

impl FromStr for ScalarFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse nonlinearity '{s}' (expected 0, a number, affine:a,c, sin[:a,w] or cos[:a,w])"));
        let pair = |args: &str| -> Result<(f64, f64)> {
            let mut it = args.split(',').map(|p| p.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
                _ => Err(bad()),
            }
        };
        let parsed = match s.split_once(':') {
            None => match s {
                "0" | "zero" => ScalarFn::Zero,
                "sin" => ScalarFn::Sin { amplitude: 1.0, frequency: 1.0 },
                "cos" => ScalarFn::Cos { amplitude: 1.0, frequency: 1.0 },
                _ => match s.parse::<f64>() {
                    Ok(c) if c == 0.0 => ScalarFn::Zero,
                    Ok(c) => ScalarFn::Constant(c),
                    Err(_) => return Err(bad()),
                },
            },
            Some(("affine", args)) => {
                let (slope, offset) = pair(args)?;
                ScalarFn::Affine { slope, offset }
            }
            Some(("sin", args)) => {
                let (amplitude, frequency) = pair(args)?;
                ScalarFn::Sin { amplitude, frequency }
            }
            Some(("cos", args)) => {
                let (amplitude, frequency) = pair(args)?;
                ScalarFn::Cos { amplitude, frequency }
            }
            Some(_) => return Err(bad()),
        };
        parsed.check()
    }
}

impl From<ScalarFn> for String {
    fn from(f: ScalarFn) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for ScalarFn {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Coefficients, noise covariance and initial data of the equation.
#[derive(Debug)]
pub struct ModelSpec {
    pub sigma: ScalarFn,
    pub b: ScalarFn,
    pub covariance: CovarianceSpec,
    pub initial: InitialData,
    /// Free-form description of the initial data for manifests.
    pub initial_label: String,
    pub mollify_n: Option<u32>,
}

/// Serializable summary of a [`ModelSpec`] for manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub sigma: ScalarFn,
    pub sigma_lipschitz: f64,
    pub b: ScalarFn,
    pub b_lipschitz: f64,
    pub covariance: CovarianceSpec,
    pub initial: String,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mollify_n: Option<u32>,
}

impl ModelSpec {
    /// Zero initial data, no mollification.
    pub fn new(sigma: ScalarFn, b: ScalarFn, covariance: CovarianceSpec) -> Self {
        Self { sigma, b, covariance, initial: InitialData::zero(), initial_label: "zero".into(), mollify_n: None }
    }

    pub fn with_initial(mut self, initial: InitialData, label: impl Into<String>) -> Self {
        self.initial = initial;
        self.initial_label = label.into();
        self
    }

    pub fn with_mollifier(mut self, n: Option<u32>) -> Self {
        self.mollify_n = n;
        self
    }

    pub fn describe(&self) -> ModelDescription {
        ModelDescription {
            sigma: self.sigma,
            sigma_lipschitz: self.sigma.lipschitz(),
            b: self.b,
            b_lipschitz: self.b.lipschitz(),
            covariance: self.covariance.clone(),
            initial: self.initial_label.clone(),
            gamma1: self.initial.gamma1(),
            gamma2: self.initial.gamma2(),
            mollify_n: self.mollify_n,
        }
    }
}

/// Ball outside of which the noise is switched off. With a positive
/// `taper` the mask falls smoothly (C-infinity) from 1 at `radius - taper`
/// to 0 at `radius`, which keeps dealiasing from spreading the forcing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseMask {
    pub center: Vec3,
    pub radius: f64,
    pub taper: f64,
}

impl NoiseMask {
    pub fn weight(&self, x: Vec3) -> f64 {
        let d = norm(sub(x, self.center));
        if d >= self.radius {
            0.0
        } else if d <= self.radius - self.taper {
            1.0
        } else {
            // smooth step between exp(-1/s) bumps
            let s = (self.radius - d) / self.taper;
            let a = (-1.0 / s).exp();
            let b = (-1.0 / (1.0 - s)).exp();
            a / (a + b)
        }
    }
}

/// Numerical knobs of the time stepper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Largest accepted step.
    pub max_dt: f64,
    /// The noise is drawn on steps `dt / 2^noise_refinement` and aggregated,
    /// so that runs with `dt` and `dt / 2` see the same noise path when the
    /// refinement levels differ by one.
    pub noise_refinement: u32,
    /// Two-thirds dealiasing of pointwise nonlinearities.
    pub dealias: bool,
    pub noise_mask: Option<NoiseMask>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_dt: 0.1, noise_refinement: 0, dealias: true, noise_mask: None }
    }
}

/// Position and velocity modes of one replica, with the noise cursor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub u_hat: Vec<Complex64>,
    pub v_hat: Vec<Complex64>,
    pub seed: u64,
    pub replica: u64,
    /// Number of steps taken; the noise of step `i` is keyed by `i`.
    pub step: u64,
}

/// Per-`|m|^2` coefficients of one step.
#[derive(Debug, Clone, Copy, Default)]
struct StepCoefficients {
    cos: f64,
    /// `sin(k dt) / k`.
    sin_over_k: f64,
    /// `k sin(k dt)`.
    k_sin: f64,
    /// Weights of `xi_0 / dt` and `3 xi_1 / dt` in the position and velocity.
    u0: f64,
    u1: f64,
    v0: f64,
    v1: f64,
    /// Midpoint drift weights `dt sin(k dt / 2) / k`, `dt cos(k dt / 2)`.
    drift_u: f64,
    drift_v: f64,
    /// Cholesky factor of the exact 2x2 increment covariance.
    chol_a: f64,
    chol_b: f64,
    chol_d: f64,
}

/// `(sin z - z cos z) / z^3`.
fn sin_moment(z: f64) -> f64 {
    if z.abs() < 0.1 {
        let z2 = z * z;
        1.0 / 3.0 - z2 / 30.0 + z2 * z2 / 840.0 - z2 * z2 * z2 / 45360.0
    } else {
        (z.sin() - z * z.cos()) / (z * z * z)
    }
}

impl StepCoefficients {
    fn new(kappa: f64, dt: f64) -> Self {
        let z = kappa * dt;
        let sinc_half2 = sinc(z / 2.0).powi(2);
        // int_0^dt sin(k th) / k dth and int_0^dt th sin(k th) / k dth
        let is0 = 0.5 * dt * dt * sinc_half2;
        let is_th = dt.powi(3) * sin_moment(z);
        // int_0^dt cos(k th) dth and int_0^dt th cos(k th) dth
        let ic0 = dt * sinc(z);
        // th is the time left until the end of the step: P_1 = 1 - 2 th / dt,
        // and int_0^dt th cos(k th) dth = dt^2 (sinc z - sinc(z / 2)^2 / 2)
        let is1 = is0 - 2.0 / dt * is_th;
        let ic1 = dt * (sinc_half2 - sinc(z));
        let var_u = mode_variance(kappa, dt);
        let cov_uv = 0.5 * dt * dt * sinc(z).powi(2);
        let var_v = 0.5 * dt * (1.0 + sinc(2.0 * z));
        let chol_a = var_u.sqrt();
        let chol_b = if chol_a > 0.0 { cov_uv / chol_a } else { 0.0 };
        let chol_d = (var_v - chol_b * chol_b).max(0.0).sqrt();
        Self {
            cos: z.cos(),
            sin_over_k: dt * sinc(z),
            k_sin: kappa * z.sin(),
            u0: is0 / dt,
            u1: 3.0 * is1 / dt,
            v0: ic0 / dt,
            v1: 3.0 * ic1 / dt,
            drift_u: dt * 0.5 * dt * sinc(z / 2.0),
            drift_v: dt * (z / 2.0).cos(),
            chol_a,
            chol_b,
            chol_d,
        }
    }
}

/// Fourier modes of one Gaussian noise increment over a step `dt`:
/// `sqrt(dt w_k) z_k` with Hermitian white modes `z`.
pub fn synthesize_noise_increment(
    lattice: &SpectralLattice,
    fft: &Fft3,
    weights: &[f64],
    dt: f64,
    seed: u64,
    tags: &[u64],
) -> Result<Vec<Complex64>> {
    if !(dt > 0.0) {
        return domain(format!("noise increment needs dt > 0 (got {dt})"));
    }
    let mut z = white_modes(lattice, fft, seed, Purpose::Noise, tags);
    z.iter_mut().zip(weights).for_each(|(z, w)| *z *= (dt * w).sqrt());
    Ok(z)
}

/// Solver bound to a model and a lattice.
pub struct Simulator<'a> {
    model: &'a ModelSpec,
    lattice: SpectralLattice,
    fft: Fft3,
    options: SolverOptions,
    weights: Vec<f64>,
    /// Index into `class_kappa` for every mode.
    class: Vec<u32>,
    class_kappa: Vec<f64>,
    dealias_mask: Vec<bool>,
    grid: Vec<Vec3>,
}

impl fmt::Debug for Simulator<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulator").field("lattice", &self.lattice).field("options", &self.options).finish_non_exhaustive()
    }
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a ModelSpec, lattice: SpectralLattice, options: SolverOptions) -> Result<Self> {
        if !(options.max_dt > 0.0) {
            return Err(Error::Config(format!("max_dt = {} must be positive", options.max_dt)));
        }
        if options.noise_refinement > 16 {
            return Err(Error::Config("noise_refinement above 16 is not supported".into()));
        }
        let weights = lattice.mode_weights(&model.covariance)?;
        let mut ids: HashMap<u64, u32> = HashMap::new();
        let mut class_kappa = Vec::new();
        let class = (0..lattice.len())
            .map(|idx| {
                let m2 = lattice.mode_norm2(idx);
                *ids.entry(m2).or_insert_with(|| {
                    class_kappa.push((m2 as f64).sqrt() * lattice.dk());
                    (class_kappa.len() - 1) as u32
                })
            })
            .collect();
        let dealias_mask = (0..lattice.len()).map(|idx| !options.dealias || lattice.passes_dealias(idx)).collect();
        let grid = (0..lattice.len()).map(|idx| lattice.position(idx)).collect();
        let fft = Fft3::new(lattice.n());
        Ok(Self { model, lattice, fft, options, weights, class, class_kappa, dealias_mask, grid })
    }

    pub fn lattice(&self) -> &SpectralLattice {
        &self.lattice
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    /// `|k|` of every mode.
    pub fn kappa(&self, idx: usize) -> f64 {
        self.class_kappa[self.class[idx] as usize]
    }

    /// Whether the noise is multiplied by a constant, so that the exact
    /// per-mode increments can be drawn.
    fn exact_noise(&self) -> Option<f64> {
        match self.options.noise_mask {
            Some(_) => None,
            None => self.model.sigma.constant_value(),
        }
    }

    /// State at `t = 0` from the initial data sampled on the grid.
    pub fn initial_state(&self, seed: u64, replica: u64) -> FieldState {
        let v0: Vec<f64> = self.grid.iter().map(|&x| self.model.initial.v0.value(x)).collect();
        let v1: Vec<f64> = self.grid.iter().map(|&x| self.model.initial.v0_tilde.value(x)).collect();
        FieldState { t: 0.0, u_hat: self.fft.to_modes(&v0), v_hat: self.fft.to_modes(&v1), seed, replica, step: 0 }
    }

    /// `sum_k (|k|^2 |u_k|^2 + |v_k|^2)`.
    pub fn energy(&self, state: &FieldState) -> f64 {
        state
            .u_hat
            .iter()
            .zip(&state.v_hat)
            .enumerate()
            .map(|(idx, (u, v))| {
                let k = self.kappa(idx);
                k * k * u.norm_sqr() + v.norm_sqr()
            })
            .sum()
    }

    pub fn hermitian_defect(&self, state: &FieldState) -> f64 {
        hermitian_defect(&self.lattice, &state.u_hat).max(hermitian_defect(&self.lattice, &state.v_hat))
    }

    /// Exact free evolution of a state over `dt` (no forcing).
    pub fn propagate_free(&self, state: &FieldState, dt: f64) -> FieldState {
        let coeffs = self.coefficients(dt);
        let mut out = state.clone();
        for idx in 0..self.lattice.len() {
            let c = &coeffs[self.class[idx] as usize];
            let (u, v) = (state.u_hat[idx], state.v_hat[idx]);
            out.u_hat[idx] = u * c.cos + v * c.sin_over_k;
            out.v_hat[idx] = v * c.cos - u * c.k_sin;
        }
        out.t += dt;
        out
    }

    fn coefficients(&self, dt: f64) -> Vec<StepCoefficients> {
        self.class_kappa.iter().map(|&k| StepCoefficients::new(k, dt)).collect()
    }

    /// Legendre moments `(xi_0, xi_1)` of the noise over step `step` of
    /// length `dt`, aggregated from `2^noise_refinement` substeps.
    pub fn noise_moments(&self, seed: u64, replica: u64, step: u64, dt: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let m = 1u64 << self.options.noise_refinement;
        let fine = dt / m as f64;
        let mut xi0 = vec![ZERO; self.lattice.len()];
        let mut xi1 = vec![ZERO; self.lattice.len()];
        for j in 0..m {
            let index = step * m + j;
            let z0 = white_modes(&self.lattice, &self.fft, seed, Purpose::Noise, &[replica, index, 0]);
            let z1 = white_modes(&self.lattice, &self.fft, seed, Purpose::Noise, &[replica, index, 1]);
            // P_1 of the long step restricted to substep j is ((2j + 1) / m - 1) + P_1^(j) / m
            let shift = (2 * j + 1) as f64 / m as f64 - 1.0;
            for idx in 0..self.lattice.len() {
                let s0 = (fine * self.weights[idx]).sqrt();
                let s1 = (fine * self.weights[idx] / 3.0).sqrt();
                let a = z0[idx] * s0;
                let b = z1[idx] * s1;
                xi0[idx] += a;
                xi1[idx] += a * shift + b / m as f64;
            }
        }
        (xi0, xi1)
    }

    /// Fourier modes of `g(u) * field` (or of `g(u)` when `field` is
    /// `None`). Dealiased unless `g` is constant: a constant times a field
    /// involves no nonlinearity in `u`.
    fn pointwise(&self, u: &[f64], g: ScalarFn, field: Option<&[f64]>) -> Vec<Complex64> {
        let prod: Vec<f64> = match field {
            Some(f) => u.iter().zip(f).map(|(&u, &f)| g.eval(u) * f).collect(),
            None => u.iter().map(|&u| g.eval(u)).collect(),
        };
        let mut modes = self.fft.to_modes(&prod);
        if g.constant_value().is_some() {
            return modes;
        }
        for (m, keep) in modes.iter_mut().zip(&self.dealias_mask) {
            if !keep {
                *m = ZERO;
            }
        }
        modes
    }

    /// Grid values of a noise moment, masked if requested.
    fn noise_field(&self, modes: &[Complex64]) -> Vec<f64> {
        let mut f = self.fft.to_real(modes);
        if let Some(mask) = self.options.noise_mask {
            for (v, x) in f.iter_mut().zip(&self.grid) {
                *v *= mask.weight(*x);
            }
        }
        f
    }

    /// Forcing of one step: `(F_0, F_1)` noise moments multiplied by
    /// `sigma(u)` and the drift modes `B`. `None` entries vanish.
    #[allow(clippy::type_complexity)]
    fn forcing(
        &self,
        u_hat: &[Complex64],
        seed: u64,
        replica: u64,
        step: u64,
        dt: f64,
    ) -> (Option<(Vec<Complex64>, Vec<Complex64>)>, Option<Vec<Complex64>>) {
        let sigma = self.model.sigma;
        let b = self.model.b;
        let needs_grid = sigma.constant_value().is_none() || b.constant_value().is_none();
        let u = if needs_grid { Some(self.fft.to_real(u_hat)) } else { None };
        let noise = match (sigma.constant_value(), self.options.noise_mask) {
            (Some(c), None) if c == 0.0 => None,
            (Some(c), None) => {
                let (mut xi0, mut xi1) = self.noise_moments(seed, replica, step, dt);
                xi0.iter_mut().chain(xi1.iter_mut()).for_each(|z| *z *= c);
                Some((xi0, xi1))
            }
            _ => {
                let (xi0, xi1) = self.noise_moments(seed, replica, step, dt);
                let (f0, f1) = (self.noise_field(&xi0), self.noise_field(&xi1));
                let grid_u = match &u {
                    Some(u) => u.clone(),
                    None => vec![0.0; self.lattice.len()],
                };
                Some((self.pointwise(&grid_u, sigma, Some(&f0)), self.pointwise(&grid_u, sigma, Some(&f1))))
            }
        };
        let drift = self.drift_modes(u_hat, u.as_deref());
        (noise, drift)
    }

    /// Advance `state` by one step of length `dt`. On non-finite output the
    /// state is left at its last finite value and an error describing the
    /// failure is returned.
    pub fn step_duhamel(&self, state: &mut FieldState, dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.options.max_dt * (1.0 + 1e-12) {
            return Err(Error::Config(format!("step {dt} outside (0, max_dt = {}]", self.options.max_dt)));
        }
        let coeffs = self.coefficients(dt);
        let n = self.lattice.len();
        let mut du = vec![ZERO; n];
        let mut dv = vec![ZERO; n];
        if let Some(c) = self.exact_noise() {
            if c != 0.0 {
                let z1 = white_modes(&self.lattice, &self.fft, state.seed, Purpose::Noise, &[state.replica, state.step, 2]);
                let z2 = white_modes(&self.lattice, &self.fft, state.seed, Purpose::Noise, &[state.replica, state.step, 3]);
                for idx in 0..n {
                    let k = &coeffs[self.class[idx] as usize];
                    let s = c * self.weights[idx].sqrt();
                    du[idx] += z1[idx] * (s * k.chol_a);
                    dv[idx] += (z1[idx] * k.chol_b + z2[idx] * k.chol_d) * s;
                }
            }
            if let Some(drift) = self.drift_modes(&state.u_hat, None) {
                self.add_drift(&coeffs, &drift, &mut du, &mut dv);
            }
        } else {
            let (noise, drift) = self.forcing(&state.u_hat, state.seed, state.replica, state.step, dt);
            if let Some((f0, f1)) = noise {
                for idx in 0..n {
                    let k = &coeffs[self.class[idx] as usize];
                    du[idx] += f0[idx] * k.u0 + f1[idx] * k.u1;
                    dv[idx] += f0[idx] * k.v0 + f1[idx] * k.v1;
                }
            }
            if let Some(drift) = drift {
                self.add_drift(&coeffs, &drift, &mut du, &mut dv);
            }
        }
        let mut new_u = vec![ZERO; n];
        let mut new_v = vec![ZERO; n];
        let mut bad = 0usize;
        for idx in 0..n {
            let k = &coeffs[self.class[idx] as usize];
            let (u, v) = (state.u_hat[idx], state.v_hat[idx]);
            new_u[idx] = u * k.cos + v * k.sin_over_k + du[idx];
            new_v[idx] = v * k.cos - u * k.k_sin + dv[idx];
            if !(new_u[idx].re.is_finite() && new_u[idx].im.is_finite() && new_v[idx].re.is_finite() && new_v[idx].im.is_finite()) {
                bad += 1;
            }
        }
        if bad > 0 {
            return Err(Error::NonFinite {
                t: state.t + dt,
                detail: format!(
                    "{bad} non-finite modes after step {} (replica {}, seed {}); state kept at t = {}",
                    state.step, state.replica, state.seed, state.t
                ),
            });
        }
        state.u_hat = new_u;
        state.v_hat = new_v;
        state.t += dt;
        state.step += 1;
        Ok(())
    }

    /// Dealiased modes of `b(u)`; `None` when `b` vanishes. `u` holds the
    /// grid values when already available.
    fn drift_modes(&self, u_hat: &[Complex64], u: Option<&[f64]>) -> Option<Vec<Complex64>> {
        let b = self.model.b;
        match b.constant_value() {
            Some(c) if c == 0.0 => None,
            Some(c) => {
                let mut modes = vec![ZERO; self.lattice.len()];
                modes[0] = Complex64::new(c, 0.0);
                Some(modes)
            }
            None => Some(match u {
                Some(u) => self.pointwise(u, b, None),
                None => self.pointwise(&self.fft.to_real(u_hat), b, None),
            }),
        }
    }

    fn add_drift(&self, coeffs: &[StepCoefficients], drift: &[Complex64], du: &mut [Complex64], dv: &mut [Complex64]) {
        for idx in 0..self.lattice.len() {
            let k = &coeffs[self.class[idx] as usize];
            du[idx] += drift[idx] * k.drift_u;
            dv[idx] += drift[idx] * k.drift_v;
        }
    }

    /// `e^{i k.x}` for every mode, to evaluate a field at `x` by a direct sum.
    fn phases(&self, x: Vec3) -> Vec<Complex64> {
        (0..self.lattice.len())
            .map(|idx| {
                let k = self.lattice.wavevector(idx);
                Complex64::from_polar(1.0, dot(k, x))
            })
            .collect()
    }

    /// `u(x) = Re sum_k u_k e^{i k.x}`.
    pub fn evaluate(&self, modes: &[Complex64], x: Vec3) -> f64 {
        modes.iter().zip(self.phases(x)).map(|(m, p)| (m * p).re).sum()
    }

    /// Run `replicas` independent replicas to `t_end`, recording probe
    /// series and, on request, final slices.
    pub fn run(&self, config: &RunConfig) -> Result<RunOutput> {
        let steps = config.steps()?;
        let dt = config.dt;
        self.lattice.check_window(config.window, config.t_end)?;
        let probes = self.probes(&config.probes, config.window)?;
        let phases: Vec<Vec<Complex64>> = probes.iter().map(|p| self.phases(p.position)).collect();
        let record_every = config.record_every.max(1);
        let mut times = vec![0.0];
        for s in 1..=steps {
            if s % record_every == 0 || s == steps {
                times.push(s as f64 * dt);
            }
        }
        let replicas: Vec<Result<(Vec<Vec<f64>>, Option<Vec<f64>>, f64)>> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let replica = config.first_replica + r;
                let mut state = self.initial_state(config.seed, replica);
                let sample = |state: &FieldState, out: &mut Vec<Vec<f64>>| {
                    for (p, ph) in out.iter_mut().zip(&phases) {
                        p.push(state.u_hat.iter().zip(ph).map(|(m, e)| (m * e).re).sum());
                    }
                };
                let mut series = vec![Vec::with_capacity(times.len()); probes.len()];
                sample(&state, &mut series);
                for s in 1..=steps {
                    self.step_duhamel(&mut state, dt)?;
                    if s % record_every == 0 || s == steps {
                        sample(&state, &mut series);
                    }
                }
                let slice = config.keep_slices.then(|| self.fft.to_real(&state.u_hat));
                Ok((series, slice, self.hermitian_defect(&state)))
            })
            .collect();
        let mut series = Vec::with_capacity(replicas.len());
        let mut slices = Vec::new();
        let mut max_defect: f64 = 0.0;
        for r in replicas {
            let (s, slice, d) = r?;
            series.push(s);
            slices.extend(slice);
            max_defect = max_defect.max(d);
        }
        Ok(RunOutput { times, probes, series, slices, max_hermitian_defect: max_defect })
    }

    fn probes(&self, indices: &[[usize; 3]], window: f64) -> Result<Vec<Probe>> {
        let n = self.lattice.n();
        let center = self.lattice.side() / 2.0;
        let half = window / 2.0;
        indices
            .iter()
            .map(|&[i, j, l]| {
                if i >= n || j >= n || l >= n {
                    return Err(Error::Config(format!("probe ({i}, {j}, {l}) outside the {n}^3 grid")));
                }
                let position = self.lattice.position(self.lattice.index(i, j, l));
                let offset = position.iter().map(|c| (c - center).abs()).fold(0.0, f64::max);
                if offset > half + 1e-12 {
                    return Err(Error::Config(format!(
                        "probe ({i}, {j}, {l}) lies outside the non-wrapping window of side {window} centred in the box"
                    )));
                }
                let edge_distance = half - offset;
                Ok(Probe { grid: [i, j, l], position, edge_distance, near_edge: edge_distance < self.lattice.dx() })
            })
            .collect()
    }

    /// Picard iteration of the whole path to `t_end`: starting from the free
    /// evolution, each sweep recomputes every forcing from the previous
    /// iterate. With `iterations >= steps` it reproduces the time stepper.
    pub fn picard(&self, seed: u64, replica: u64, t_end: f64, dt: f64, iterations: usize) -> Result<Vec<Complex64>> {
        let steps = RunConfig::step_count(t_end, dt)?;
        let kernel = HistoryKernel::exact(self, steps, dt);
        self.history_solve(&[kernel], seed, replica, steps, dt, Some(iterations)).map(|mut v| v.remove(0))
    }

    /// Duhamel sums over the stored forcing history, for several noise
    /// kernels at once (all share the noise path and the free evolution).
    /// Returns the position modes at the final time for each kernel.
    fn history_solve(
        &self,
        kernels: &[HistoryKernel],
        seed: u64,
        replica: u64,
        steps: usize,
        dt: f64,
        iterations: Option<usize>,
    ) -> Result<Vec<Vec<Complex64>>> {
        let n = self.lattice.len();
        let init = self.initial_state(seed, replica);
        let free = |i: usize| self.propagate_free(&init, i as f64 * dt).u_hat;
        let sigma = self.model.sigma;
        let independent = self.model.b.constant_value().is_some()
            && (sigma.constant_value().is_some() && self.options.noise_mask.is_none());
        let moments: Vec<(Vec<Complex64>, Vec<Complex64>)> =
            (0..steps).map(|j| self.noise_moments(seed, replica, j as u64, dt)).collect();
        let forcing_at = |u_hat: &[Complex64], j: usize| -> Result<Forcing> {
            let (xi0, xi1) = &moments[j];
            let noise = match (sigma.constant_value(), self.options.noise_mask) {
                (Some(c), None) if c == 0.0 => None,
                (Some(c), None) => Some((xi0.iter().map(|z| z * c).collect(), xi1.iter().map(|z| z * c).collect())),
                _ => {
                    let u = self.fft.to_real(u_hat);
                    let (f0, f1) = (self.noise_field(xi0), self.noise_field(xi1));
                    Some((self.pointwise(&u, sigma, Some(&f0)), self.pointwise(&u, sigma, Some(&f1))))
                }
            };
            let drift = self.drift_modes(u_hat, None);
            Ok(Forcing { noise, drift })
        };
        let accumulate = |kernel: &HistoryKernel, history: &[Forcing], i: usize| -> Vec<Complex64> {
            let mut u = free(i);
            for (j, f) in history.iter().enumerate().take(i) {
                let d = i - j;
                for idx in 0..n {
                    let c = self.class[idx] as usize;
                    let mut acc = ZERO;
                    if let Some((f0, f1)) = &f.noise {
                        acc += f0[idx] * kernel.noise0[d][c] + f1[idx] * kernel.noise1[d][c];
                    }
                    if let Some(b) = &f.drift {
                        acc += b[idx] * kernel.drift[d][c];
                    }
                    u[idx] += acc;
                }
            }
            u
        };
        // forcing that does not depend on the solution is shared by all kernels
        let shared: Option<Vec<Forcing>> =
            if independent { Some((0..steps).map(|j| forcing_at(&[], j)).collect::<Result<_>>()?) } else { None };
        let mut out = Vec::with_capacity(kernels.len());
        for kernel in kernels {
            let owned: Vec<Forcing>;
            let history: &[Forcing] = if let Some(shared) = &shared {
                shared
            } else if let Some(sweeps) = iterations {
                let mut iterate: Vec<Vec<Complex64>> = (0..steps).map(free).collect();
                let mut history: Vec<Forcing> =
                    iterate.iter().enumerate().map(|(j, u)| forcing_at(u, j)).collect::<Result<_>>()?;
                for _ in 0..sweeps {
                    iterate = (0..steps).map(|i| accumulate(kernel, &history, i)).collect();
                    history = iterate.iter().enumerate().map(|(j, u)| forcing_at(u, j)).collect::<Result<_>>()?;
                }
                owned = history;
                &owned
            } else {
                let mut history: Vec<Forcing> = Vec::with_capacity(steps);
                for i in 0..steps {
                    let u = accumulate(kernel, &history, i);
                    history.push(forcing_at(&u, i)?);
                }
                owned = history;
                &owned
            };
            let u = accumulate(kernel, history, steps);
            if u.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite { t: steps as f64 * dt, detail: "non-finite modes in the Duhamel sum".into() });
            }
            out.push(u);
        }
        Ok(out)
    }

    /// Shared-noise comparison of the mollified solutions `u_n` with `u`
    /// at `t_end`: grid-L2 norms `||u_n(t_end) - u(t_end)||` per replica.
    /// `None` in `ns` stands for the unmollified kernel itself.
    pub fn compare_mollified(&self, ns: &[Option<u32>], config: &MollifiedConfig) -> Result<MollifiedTable> {
        if ns.iter().any(|&n| n == Some(0)) {
            return domain("mollifier indices must be positive");
        }
        let steps = RunConfig::step_count(config.t_end, config.dt)?;
        let kappa_max = self.class_kappa.iter().cloned().fold(0.0, f64::max);
        let table = FourierPsiTable::new(config.t_end * kappa_max);
        let mut kernels = vec![HistoryKernel::exact(self, steps, config.dt)];
        kernels.extend(ns.iter().map(|&n| match n {
            Some(n) => HistoryKernel::mollified(self, steps, config.dt, n, &table),
            None => HistoryKernel::exact(self, steps, config.dt),
        }));
        let volume = self.lattice.side().powi(3);
        let rows: Vec<Result<Vec<f64>>> = (0..config.replicas)
            .into_par_iter()
            .map(|r| {
                let finals = self.history_solve(&kernels, config.seed, config.first_replica + r, steps, config.dt, None)?;
                Ok(finals[1..]
                    .iter()
                    .map(|un| (volume * un.iter().zip(&finals[0]).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()).sqrt())
                    .collect())
            })
            .collect();
        let differences = rows.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(MollifiedTable { ns: ns.to_vec(), differences })
    }
}

/// Forcing of one step in the history engine.
struct Forcing {
    noise: Option<(Vec<Complex64>, Vec<Complex64>)>,
    drift: Option<Vec<Complex64>>,
}

/// Weights of step `j`'s forcing in `u_hat(t_i)`, indexed by `i - j` and
/// `|m|^2` class.
struct HistoryKernel {
    noise0: Vec<Vec<f64>>,
    noise1: Vec<Vec<f64>>,
    drift: Vec<Vec<f64>>,
}

/// Gauss-Legendre nodes per step for the mollified noise weights.
const HISTORY_NODES: usize = 8;

impl HistoryKernel {
    /// Weights of `G`: the step coefficients propagated freely over the
    /// `d - 1` later steps.
    fn exact(sim: &Simulator, steps: usize, dt: f64) -> Self {
        let step = sim.coefficients(dt);
        let mut noise0 = vec![vec![]; steps + 1];
        let mut noise1 = vec![vec![]; steps + 1];
        let mut drift = vec![vec![]; steps + 1];
        for d in 1..=steps {
            let lag = (d - 1) as f64 * dt;
            let free: Vec<(f64, f64)> = sim.class_kappa.iter().map(|&k| ((k * lag).cos(), lag * sinc(k * lag))).collect();
            noise0[d] = step.iter().zip(&free).map(|(c, (co, so))| co * c.u0 + so * c.v0).collect();
            noise1[d] = step.iter().zip(&free).map(|(c, (co, so))| co * c.u1 + so * c.v1).collect();
            drift[d] = step.iter().zip(&free).map(|(c, (co, so))| co * c.drift_u + so * c.drift_v).collect();
        }
        Self { noise0, noise1, drift }
    }

    /// Noise weights of `G_n` by Gauss-Legendre quadrature over each step;
    /// the drift keeps the kernel `G`.
    fn mollified(sim: &Simulator, steps: usize, dt: f64, n: u32, table: &FourierPsiTable) -> Self {
        let exact = Self::exact(sim, steps, dt);
        let (nodes, wts) = gauss_legendre(HISTORY_NODES);
        let mut noise0 = vec![vec![]; steps + 1];
        let mut noise1 = vec![vec![]; steps + 1];
        for d in 1..=steps {
            let (w0, w1): (Vec<f64>, Vec<f64>) = sim
                .class_kappa
                .iter()
                .map(|&k| {
                    let mut a0 = 0.0;
                    let mut a1 = 0.0;
                    for (&x, &w) in nodes.iter().zip(&wts) {
                        // x is P_1 on the forcing step; the elapsed time runs from d dt down to (d - 1) dt
                        let tau = (d as f64 - 0.5) * dt - 0.5 * dt * x;
                        let g = tau * sinc(k * tau) * table.eval(tau * k / n as f64);
                        a0 += 0.5 * w * g;
                        a1 += 0.5 * w * g * x;
                    }
                    (a0, 3.0 * a1)
                })
                .unzip();
            noise0[d] = w0;
            noise1[d] = w1;
        }
        Self { noise0, noise1, drift: exact.drift }
    }
}

/// Cubic interpolation table of `F psi` on `[0, zeta_max]`.
struct FourierPsiTable {
    h: f64,
    values: Vec<f64>,
}

impl FourierPsiTable {
    const SPACING: f64 = 0.01;

    fn new(zeta_max: f64) -> Self {
        let h = Self::SPACING;
        let count = (zeta_max / h).ceil() as usize + 4;
        let values = (0..count).into_par_iter().map(|i| fourier_psi(i as f64 * h)).collect();
        Self { h, values }
    }

    fn eval(&self, zeta: f64) -> f64 {
        let x = zeta.abs() / self.h;
        let i = (x.floor() as usize).clamp(1, self.values.len() - 3);
        let s = x - i as f64;
        let [a, b, c, d] = [self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]];
        // Lagrange cubic through nodes -1, 0, 1, 2
        -s * (s - 1.0) * (s - 2.0) / 6.0 * a + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * b
            - (s + 1.0) * s * (s - 2.0) / 2.0 * c
            + (s + 1.0) * s * (s - 1.0) / 6.0 * d
    }
}

/// Periodic lattice field of the mollified kernel `G_n(t, x - center)`
/// (the response of `u` to a point-supported initial velocity).
pub fn mollified_response(lattice: &SpectralLattice, fft: &Fft3, n: u32, t: f64, center: Vec3) -> Result<Vec<f64>> {
    if n == 0 || !(t > 0.0) {
        return domain(format!("mollified response needs n >= 1 and t > 0 (got n = {n}, t = {t})"));
    }
    let volume = lattice.side().powi(3);
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let modes: Vec<Complex64> = (0..lattice.len())
        .map(|idx| {
            let m2 = lattice.mode_norm2(idx);
            let g = *cache.entry(m2).or_insert_with(|| {
                let k = (m2 as f64).sqrt() * lattice.dk();
                fourier_psi(t * k / n as f64) * t * sinc(t * k)
            });
            let k = lattice.wavevector(idx);
            Complex64::from_polar(g / volume, -dot(k, center))
        })
        .collect();
    Ok(fft.to_real(&modes))
}

/// Settings of [`Simulator::run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub t_end: f64,
    pub dt: f64,
    pub replicas: u64,
    /// Replica ids run are `first_replica .. first_replica + replicas`.
    pub first_replica: u64,
    pub seed: u64,
    /// Probe grid points `(i, j, l)`.
    pub probes: Vec<[usize; 3]>,
    /// Side of the observation cube centred in the box.
    pub window: f64,
    /// Record probes every this many steps (and at the end).
    pub record_every: usize,
    pub keep_slices: bool,
}

impl RunConfig {
    fn step_count(t_end: f64, dt: f64) -> Result<usize> {
        if !(dt > 0.0 && t_end > 0.0) {
            return Err(Error::Config(format!("need t_end > 0 and dt > 0 (got {t_end}, {dt})")));
        }
        let steps = (t_end / dt).round();
        if (steps * dt - t_end).abs() > 1e-9 * t_end {
            return Err(Error::Config(format!("dt = {dt} does not divide t_end = {t_end}")));
        }
        Ok(steps as usize)
    }

    pub fn steps(&self) -> Result<usize> {
        Self::step_count(self.t_end, self.dt)
    }
}

/// A probe point with its distance to the edge of the observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub grid: [usize; 3],
    pub position: Vec3,
    pub edge_distance: f64,
    /// Within one grid cell of the window edge.
    pub near_edge: bool,
}

/// Probe series `series[replica][probe][time]` and optional final slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub times: Vec<f64>,
    pub probes: Vec<Probe>,
    pub series: Vec<Vec<Vec<f64>>>,
    pub slices: Vec<Vec<f64>>,
    pub max_hermitian_defect: f64,
}

/// Settings of [`Simulator::compare_mollified`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedConfig {
    pub t_end: f64,
    pub dt: f64,
    pub replicas: u64,
    pub first_replica: u64,
    pub seed: u64,
}

/// `differences[replica][i] = ||u_{ns[i]} - u||` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedTable {
    pub ns: Vec<Option<u32>>,
    pub differences: Vec<Vec<f64>>,
}

impl MollifiedTable {
    /// Replica mean of each column.
    pub fn mean(&self) -> Vec<f64> {
        let r = self.differences.len().max(1) as f64;
        (0..self.ns.len()).map(|i| self.differences.iter().map(|row| row[i]).sum::<f64>() / r).collect()
    }

    /// Fraction of replicas whose differences strictly decrease along `ns`.
    pub fn strictly_decreasing_fraction(&self) -> f64 {
        if self.differences.is_empty() {
            return 0.0;
        }
        let ok = self.differences.iter().filter(|row| row.windows(2).all(|w| w[1] < w[0])).count();
        ok as f64 / self.differences.len() as f64
    }
}

