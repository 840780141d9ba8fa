//! JSON configuration: one file fully determines an experiment.
//!
//! The model schema is
//! `{"L", "phases": [{"T", "b", "d", "c"}], "kernel"?, "K", "alpha",
//! "lambda_K"}`; optional `stop` and `experiment` blocks carry
//! stopping-time and harness settings with sensible defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::StopSpec;
use crate::model::{ModelSpec, PhaseSpec, ScalingSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseConfig {
    #[serde(rename = "T")]
    pub duration: f64,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub c: Vec<Vec<f64>>,
}

/// Stopping-time settings; `null`/absent disables a predicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StopSettings {
    pub invasion_epsilon: Option<f64>,
    pub mutant_mass_epsilon: Option<f64>,
    pub max_time: Option<f64>,
    pub max_events: Option<u64>,
}

impl Default for StopSettings {
    fn default() -> Self {
        StopSettings {
            invasion_epsilon: Some(0.05),
            mutant_mass_epsilon: None,
            max_time: None,
            max_events: Some(200_000_000),
        }
    }
}

impl StopSettings {
    pub fn to_stop_spec(&self) -> StopSpec {
        StopSpec {
            invasion_epsilon: self.invasion_epsilon,
            mutant_mass_epsilon: self.mutant_mass_epsilon,
            watch_arrival: None,
            max_time: self.max_time.unwrap_or(f64::INFINITY),
            max_events: self.max_events.unwrap_or(u64::MAX),
        }
    }
}

/// Harness settings with per-experiment defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub replicas: usize,
    /// Horizon for fixed-length experiments, in environment periods.
    pub horizon_periods: f64,
    /// Relative stability band around the resident equilibrium.
    pub stability_band: f64,
    /// Fraction of each phase discarded as burn-in.
    pub burn_in: f64,
    /// Significance level for the KS shape test.
    pub ks_alpha: f64,
    /// Accepted band for (empirical mean) / (predicted mean).
    pub mean_ratio_band: (f64, f64),
    /// Sup-distance tolerance for the deterministic-limit experiment.
    pub ode_epsilon: f64,
    pub ode_step: f64,
    /// Fraction of replicas allowed to exceed a band.
    pub exceedance_fraction: f64,
    /// Relative tolerance for the first mesoscopic trait.
    pub mesoscopic_rel_tol: f64,
    /// Multiplicative factor allowed at the edge of mesoscopic validity.
    pub mesoscopic_edge_factor: f64,
    /// Clock stretches swept by the pit-stop peak experiment.
    pub lambda_sweep: Vec<f64>,
    /// Trajectory stride override (simulation time units).
    pub stride: Option<f64>,
    /// Pure birth-death parameters for the excursion experiment.
    pub excursion_birth: f64,
    pub excursion_death: f64,
    pub excursion_runs: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            replicas: 100,
            horizon_periods: 10.0,
            stability_band: 0.1,
            burn_in: 0.1,
            ks_alpha: 0.01,
            mean_ratio_band: (0.5, 2.0),
            ode_epsilon: 0.05,
            ode_step: 1e-3,
            exceedance_fraction: 0.05,
            mesoscopic_rel_tol: 0.25,
            mesoscopic_edge_factor: 2.0,
            lambda_sweep: vec![5.0, 10.0, 15.0],
            stride: None,
            excursion_birth: 1.0,
            excursion_death: 2.0,
            excursion_runs: 100_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    #[serde(rename = "L")]
    pub num_traits: usize,
    pub phases: Vec<PhaseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K")]
    pub carrying_capacity: u64,
    pub alpha: f64,
    #[serde(rename = "lambda_K")]
    pub lambda_k: f64,
    #[serde(default)]
    pub stop: StopSettings,
    #[serde(default)]
    pub experiment: ExperimentSettings,
}

/// A parsed configuration plus the SHA-256 of the exact bytes it came
/// from, used as the provenance tag on every output file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub sha256: String,
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<LoadedConfig> {
        let config: Config =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(LoadedConfig {
            config,
            sha256: hex_sha256(text.as_bytes()),
        })
    }

    pub fn from_path(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn model(&self) -> ModelSpec {
        let phases = self
            .phases
            .iter()
            .map(|p| PhaseSpec {
                duration: p.duration,
                birth: p.b.clone(),
                death: p.d.clone(),
                competition: p.c.clone(),
            })
            .collect();
        let mut model = ModelSpec::new(self.num_traits, phases);
        if let Some(kernel) = &self.kernel {
            model.mutation_kernel = kernel.clone();
        }
        model
    }

    pub fn scaling(&self) -> ScalingSpec {
        ScalingSpec {
            carrying_capacity: self.carrying_capacity,
            alpha: self.alpha,
            lambda_k: self.lambda_k,
        }
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
