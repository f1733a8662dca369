//! Flat experiment configuration. Every knob has a default; the resolved
//! values are written to the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wave3_core::covariance::{CovarianceSpec, Phi};
use wave3_core::quadrature::Tolerance;
use wave3_core::simulator::ScalarFn;

use crate::error::CliError;

/// Lags (grid units) of the default structure-function fit.
pub const DEFAULT_LAGS: [usize; 10] = [1, 2, 3, 4, 6, 8, 11, 16, 23, 32];

/// Source of the fields written by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Spectral time stepper for the full equation.
    Lattice,
    /// Exact-in-law sample of the Gaussian case (sigma = 1, b = 0, zero data).
    GaussianExact,
    /// Independent standard normal values at every grid point.
    WhiteNoise,
}

/// Initial data of `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    /// Gaussian bump at the box centre; zero initial velocity.
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    // covariance
    pub beta: f64,
    pub delta: f64,
    /// `"one"` or `"gaussian_envelope"`.
    pub phi: String,
    pub phi_sigma: f64,

    // quadrature
    pub quad_abs_tol: f64,
    pub quad_rel_tol: f64,

    /// Command-specific acceptance tolerance; see [`ExperimentConfig::tolerance_for`].
    pub tolerance: Option<f64>,
    pub seed: u64,

    // verify
    /// Claimed exponent for every fitted oracle; when absent each oracle
    /// claims `alpha_fraction` times the upper end of its admissible range.
    pub alpha: Option<f64>,
    pub alpha_fraction: f64,
    pub scan_min: f64,
    pub scan_max: f64,
    pub scan_points: usize,
    pub s_grid: Vec<f64>,
    pub oracle_t: f64,
    pub semigroup_pairs: usize,

    // cov
    pub betas: Vec<f64>,
    pub space_t: f64,
    pub time_t: f64,

    // simulate
    pub engine: Engine,
    pub sigma: ScalarFn,
    pub b: ScalarFn,
    pub initial: InitialKind,
    pub bump_amplitude: f64,
    pub bump_width: f64,
    pub box_side_len: f64,
    pub grid_points: usize,
    pub window_side_len: f64,
    pub t_end: f64,
    pub dt: f64,
    pub replicas: u64,
    pub first_replica: u64,
    pub noise_refinement: u32,
    pub dealias: bool,
    /// Mollification index; 0 means none.
    pub mollify_n: u32,
    /// Probe grid points; empty means the box centre.
    pub probes: Vec<[usize; 3]>,
    pub record_every: usize,

    // estimate
    /// Directory of `simulate` output read by `estimate`.
    pub input_dir: Option<PathBuf>,
    pub moment: f64,
    pub lags: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            delta: 1.0,
            phi: "one".into(),
            phi_sigma: 1.0,
            quad_abs_tol: 1e-14,
            quad_rel_tol: 1e-8,
            tolerance: None,
            seed: 0,
            alpha: None,
            alpha_fraction: 0.75,
            scan_min: 1e-3,
            scan_max: 1e-1,
            scan_points: 9,
            s_grid: vec![0.25, 0.5, 0.75, 1.0],
            oracle_t: 1.0,
            semigroup_pairs: 5,
            betas: vec![1.0],
            space_t: 1.0,
            time_t: 0.5,
            engine: Engine::Lattice,
            sigma: ScalarFn::Constant(1.0),
            b: ScalarFn::Zero,
            initial: InitialKind::Zero,
            bump_amplitude: 1.0,
            bump_width: 0.5,
            box_side_len: 4.5,
            grid_points: 32,
            window_side_len: 2.0,
            t_end: 1.0,
            dt: 0.05,
            replicas: 4,
            first_replica: 0,
            noise_refinement: 0,
            dealias: true,
            mollify_n: 0,
            probes: Vec::new(),
            record_every: 1,
            input_dir: None,
            moment: 2.0,
            lags: DEFAULT_LAGS.to_vec(),
        }
    }
}

/// Subcommand, used to resolve command-specific defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Cov,
    Simulate,
    Estimate,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("malformed config: {}", e.message())))
    }

    /// Resolved acceptance tolerance: the relative tolerance of constant
    /// checks for `verify`, the slope tolerance for `cov`, and the verdict
    /// band for `estimate`.
    pub fn tolerance_for(&self, command: Command) -> f64 {
        self.tolerance.unwrap_or(match command {
            Command::Verify => 1e-3,
            Command::Cov | Command::Estimate | Command::Simulate => 0.05,
        })
    }

    pub fn quad_tolerance(&self) -> Tolerance {
        Tolerance::new(self.quad_abs_tol, self.quad_rel_tol)
    }

    pub fn covariance(&self) -> Result<CovarianceSpec, CliError> {
        self.covariance_at(self.beta)
    }

    pub fn covariance_at(&self, beta: f64) -> Result<CovarianceSpec, CliError> {
        let phi = match self.phi.as_str() {
            "one" => Phi::ConstantOne,
            "gaussian_envelope" => Phi::GaussianEnvelope { sigma: self.phi_sigma },
            other => return Err(CliError::Usage(format!("unknown phi {other:?}; expected \"one\" or \"gaussian_envelope\""))),
        };
        CovarianceSpec::new(beta, self.delta, phi).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Range checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(self.quad_abs_tol >= 0.0 && self.quad_rel_tol >= 0.0 && self.quad_abs_tol + self.quad_rel_tol > 0.0) {
            return usage("quadrature tolerances must be nonnegative and not both zero".into());
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return usage(format!("tolerance = {t} must be nonnegative"));
            }
        }
        if !(self.scan_min > 0.0 && self.scan_max > self.scan_min) || self.scan_points < 2 {
            return usage("need 0 < scan_min < scan_max and scan_points >= 2".into());
        }
        if !(self.alpha_fraction > 0.0 && self.alpha_fraction <= 1.0) {
            return usage(format!("alpha_fraction = {} must lie in (0, 1]", self.alpha_fraction));
        }
        if self.s_grid.is_empty() || self.betas.is_empty() || self.lags.is_empty() {
            return usage("s_grid, betas and lags must be nonempty".into());
        }
        if self.replicas == 0 || self.grid_points < 2 || self.record_every == 0 {
            return usage("replicas, record_every must be positive and grid_points at least 2".into());
        }
        self.covariance().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn keys_parse_and_unknown_keys_are_rejected() {
        let c = ExperimentConfig::parse("beta = 0.5\nsigma = \"sin\"\nengine = \"gaussian_exact\"\nprobes = [[1, 2, 3]]\n").unwrap();
        assert_eq!(c.beta, 0.5);
        assert_eq!(c.engine, Engine::GaussianExact);
        assert_eq!(c.probes, vec![[1, 2, 3]]);
        assert!(matches!(ExperimentConfig::parse("betta = 1.0"), Err(CliError::Usage(_))));
        assert!(matches!(ExperimentConfig::parse("beta = \"one\""), Err(CliError::Usage(_))));
    }

    #[test]
    fn command_tolerances() {
        let c = ExperimentConfig::default();
        assert_eq!(c.tolerance_for(Command::Cov), 0.05);
        assert_eq!(c.tolerance_for(Command::Verify), 1e-3);
        let c = ExperimentConfig { tolerance: Some(0.0), ..c };
        assert_eq!(c.tolerance_for(Command::Cov), 0.0);
    }
}
