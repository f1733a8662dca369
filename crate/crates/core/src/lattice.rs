//! Periodic lattice `[0, L)^3` with `N` points per axis and its Fourier
//! modes.
//!
//! Conventions: a real field is `u(x_m) = sum_k u_hat(k) exp(i k.x_m)` over
//! `k = (2 pi / L) m`, `m_i in [-N/2, N/2)`, i.e. the unnormalized inverse
//! DFT; `u_hat = DFT(u) / N^3`. Mode weights `w_k = mu(|k|) (2 pi / L)^3`
//! turn continuum spectral integrals into lattice sums. The zero mode (where
//! the Riesz density is singular) and all Nyquist modes (whose partner is
//! themselves) are inactive.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceSpec;
use crate::rng::{stream, Purpose};
use crate::vec3::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLattice {
    side: f64,
    n: usize,
    cutoff: Option<f64>,
}

impl SpectralLattice {
    pub fn new(side: f64, n: usize, cutoff: Option<f64>) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::Config(format!("box side {side} must be positive")));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::Config(format!("modes per axis {n} must be even and at least 4")));
        }
        if let Some(c) = cutoff {
            if !(c > 0.0) {
                return Err(Error::Config(format!("spectral cutoff {c} must be positive")));
            }
        }
        Ok(Self { side, n, cutoff })
    }

    /// Lattice whose box cannot wrap the light cone of an observation window
    /// of diameter `window` over `[0, horizon]`: requires `L > window + 2 horizon`.
    pub fn with_window(side: f64, n: usize, cutoff: Option<f64>, window: f64, horizon: f64) -> Result<Self> {
        let lattice = Self::new(side, n, cutoff)?;
        lattice.check_window(window, horizon)?;
        Ok(lattice)
    }

    pub fn check_window(&self, window: f64, horizon: f64) -> Result<()> {
        let need = window + 2.0 * horizon;
        if self.side > need {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "box side {} does not exceed window diameter {window} + 2 x horizon {horizon} = {need}; the light cone would wrap",
                self.side
            )))
        }
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.side
    }

    /// Flat index of grid point or mode `(i, j, l)`; `l` varies fastest.
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.n + j) * self.n + l
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    /// Signed integer frequency of DFT index `i`, in `[-N/2, N/2)`.
    pub fn frequency(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    pub fn mode_integers(&self, idx: usize) -> [i64; 3] {
        let [i, j, l] = self.coords(idx);
        [self.frequency(i), self.frequency(j), self.frequency(l)]
    }

    pub fn wavevector(&self, idx: usize) -> Vec3 {
        let m = self.mode_integers(idx);
        let dk = self.dk();
        [m[0] as f64 * dk, m[1] as f64 * dk, m[2] as f64 * dk]
    }

    /// `|m|^2` of the integer frequency vector.
    pub fn mode_norm2(&self, idx: usize) -> u64 {
        self.mode_integers(idx).iter().map(|m| (m * m) as u64).sum()
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        let half = -(self.n as i64 / 2);
        self.mode_integers(idx).contains(&half)
    }

    /// Whether the mode carries energy: not the zero mode, not Nyquist, and
    /// inside the cutoff.
    pub fn is_active(&self, idx: usize) -> bool {
        if idx == 0 || self.is_nyquist(idx) {
            return false;
        }
        match self.cutoff {
            Some(c) => (self.mode_norm2(idx) as f64).sqrt() * self.dk() <= c,
            None => true,
        }
    }

    /// Two-thirds dealiasing mask: every `|m_i| < N/3`.
    pub fn passes_dealias(&self, idx: usize) -> bool {
        let third = self.n as f64 / 3.0;
        self.mode_integers(idx).iter().all(|m| (m.abs() as f64) < third)
    }

    /// Grid point coordinates `x_m = m L / N`.
    pub fn position(&self, idx: usize) -> Vec3 {
        let [i, j, l] = self.coords(idx);
        let dx = self.dx();
        [i as f64 * dx, j as f64 * dx, l as f64 * dx]
    }

    /// Mode weights `w_k = mu(|k|) dk^3` on active modes, zero elsewhere.
    /// The density is evaluated once per distinct `|m|^2`.
    pub fn mode_weights(&self, spec: &CovarianceSpec) -> Result<Vec<f64>> {
        let dk = self.dk();
        let mut cache: HashMap<u64, f64> = HashMap::new();
        let mut out = vec![0.0; self.len()];
        for (idx, w) in out.iter_mut().enumerate() {
            if !self.is_active(idx) {
                continue;
            }
            let m2 = self.mode_norm2(idx);
            let v = match cache.get(&m2) {
                Some(v) => *v,
                None => {
                    let v = spec.spectral_density_radial((m2 as f64).sqrt() * dk)? * dk.powi(3);
                    cache.insert(m2, v);
                    v
                }
            };
            *w = v;
        }
        Ok(out)
    }
}

/// In-place 3-D DFT on a lattice, unnormalized in both directions.
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    /// `sum_x a(x) exp(-i k.x)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// `sum_k a(k) exp(i k.x)`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // fastest axis: contiguous rows
        for row in data.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        // middle axis
        for i in 0..n {
            for l in 0..n {
                for j in 0..n {
                    line[j] = data[(i * n + j) * n + l];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for j in 0..n {
                    data[(i * n + j) * n + l] = line[j];
                }
            }
        }
        // slowest axis
        for j in 0..n {
            for l in 0..n {
                for i in 0..n {
                    line[i] = data[(i * n + j) * n + l];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for i in 0..n {
                    data[(i * n + j) * n + l] = line[i];
                }
            }
        }
    }

    /// Real field from Fourier coefficients (imaginary round-off dropped).
    pub fn to_real(&self, modes: &[Complex64]) -> Vec<f64> {
        let mut buf = modes.to_vec();
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Fourier coefficients `DFT(u) / N^3` of a real field.
    pub fn to_modes(&self, field: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        let norm = 1.0 / (self.n * self.n * self.n) as f64;
        buf.iter_mut().for_each(|z| *z *= norm);
        buf
    }
}

/// Hermitian white-noise modes with `E |z_k|^2 = 1`: the DFT of an i.i.d.
/// standard normal grid divided by `N^(3/2)`. Each `x`-slab draws from its
/// own stream, keyed by `(tags..., slab)`.
pub fn white_modes(lattice: &SpectralLattice, fft: &Fft3, seed: u64, purpose: Purpose, tags: &[u64]) -> Vec<Complex64> {
    let n = lattice.n();
    let mut buf = vec![Complex64::new(0.0, 0.0); lattice.len()];
    let mut path = tags.to_vec();
    path.push(0);
    for (slab, chunk) in buf.chunks_exact_mut(n * n).enumerate() {
        *path.last_mut().expect("nonempty tag path") = slab as u64;
        let mut rng = stream(seed, purpose, &path);
        for z in chunk.iter_mut() {
            *z = Complex64::new(rng.sample(StandardNormal), 0.0);
        }
    }
    fft.forward(&mut buf);
    let norm = 1.0 / ((n * n * n) as f64).sqrt();
    buf.iter_mut().for_each(|z| *z *= norm);
    buf
}

/// Largest violation `|u_hat(-k) - conj u_hat(k)|` of Hermitian symmetry.
pub fn hermitian_defect(lattice: &SpectralLattice, modes: &[Complex64]) -> f64 {
    let n = lattice.n();
    let neg = |i: usize| (n - i) % n;
    let mut worst: f64 = 0.0;
    for idx in 0..lattice.len() {
        let [i, j, l] = lattice.coords(idx);
        let partner = lattice.index(neg(i), neg(j), neg(l));
        worst = worst.max((modes[partner] - modes[idx].conj()).norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn construction_checks() {
        assert!(SpectralLattice::new(1.0, 7, None).is_err());
        assert!(SpectralLattice::new(-1.0, 8, None).is_err());
        assert!(SpectralLattice::with_window(4.0, 8, None, 1.0, 1.0).is_ok());
        assert!(SpectralLattice::with_window(3.0, 8, None, 1.0, 1.0).is_err());
    }

    #[test]
    fn fft_round_trip_and_plane_wave() {
        let lat = SpectralLattice::new(2.0 * PI, 8, None).unwrap();
        let fft = Fft3::new(8);
        // u = cos(x + 2 z) has coefficients 1/2 at m = +-(1, 0, 2)
        let field: Vec<f64> = (0..lat.len())
            .map(|idx| {
                let x = lat.position(idx);
                (x[0] + 2.0 * x[2]).cos()
            })
            .collect();
        let modes = fft.to_modes(&field);
        let plus = lat.index(1, 0, 2);
        let minus = lat.index(7, 0, 6);
        assert_relative_eq!(modes[plus].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(modes[minus].re, 0.5, epsilon = 1e-12);
        let back = fft.to_real(&modes);
        for (a, b) in back.iter().zip(&field) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn white_modes_are_hermitian_and_unit_variance() {
        let lat = SpectralLattice::new(1.0, 16, None).unwrap();
        let fft = Fft3::new(16);
        let z = white_modes(&lat, &fft, 3, Purpose::Noise, &[0]);
        assert!(hermitian_defect(&lat, &z) < 1e-12);
        let mean_sq = z.iter().map(|c| c.norm_sqr()).sum::<f64>() / z.len() as f64;
        assert!((mean_sq - 1.0).abs() < 0.02, "{mean_sq}");
    }

    #[test]
    fn weights_skip_inactive_modes() {
        let lat = SpectralLattice::new(4.0, 8, Some(5.0)).unwrap();
        let spec = CovarianceSpec::riesz(1.0).unwrap();
        let w = lat.mode_weights(&spec).unwrap();
        assert_eq!(w[0], 0.0);
        assert_eq!(w[lat.index(4, 0, 0)], 0.0);
        assert!(w[lat.index(1, 0, 0)] > 0.0);
        // |k| = 2 pi / 4 * sqrt(3^2 + 3^2) > 5 is outside the cutoff
        assert_eq!(w[lat.index(3, 3, 0)], 0.0);
    }
}
