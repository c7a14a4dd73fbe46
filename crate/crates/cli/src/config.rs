//! Experiment files: parsing, validation and the hash stamped on every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use serverfarm::allocator::SearchOptions;
use serverfarm::economics::{EconomicModel, ReconfigCost};
use serverfarm::queueing::Traffic;
use serverfarm::simulator::{Policy, SimConfig};
use serverfarm::workload::ArrivalProcess;

use crate::CliError;

/// Top-level experiment file. Each command reads the sections it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Analytic model used by `analyze` and `optimize`.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Base simulation used by `simulate`, `sweep` and `sensitivity`.
    #[serde(default)]
    pub simulation: Option<SimConfig>,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Arrival rate (jobs/s).
    pub lambda: f64,
    /// Service rate of one server (jobs/s).
    pub mu: f64,
    /// Abandonment rate (1/s).
    pub theta: f64,
    /// Total number of servers S.
    pub capacity: usize,
    /// Servers running now; the starting point of `optimize`.
    #[serde(default)]
    pub n_current: usize,
    /// First allocation tabulated by `analyze`.
    #[serde(default)]
    pub n_min: usize,
    /// Last allocation tabulated by `analyze`; defaults to `capacity`.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub econ: EconomicModel,
    #[serde(default)]
    pub reconfig: ReconfigCost,
    #[serde(default)]
    pub search: SearchOptions,
}

impl ModelConfig {
    pub fn traffic(&self) -> Result<Traffic, CliError> {
        Traffic::new(self.lambda, self.mu, self.theta).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn n_range(&self) -> (usize, usize) {
        (self.n_min, self.n_max.unwrap_or(self.capacity))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.traffic()?;
        self.econ.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.reconfig.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.n_current > self.capacity {
            return Err(CliError::Config(format!("n_current {} exceeds capacity {}", self.n_current, self.capacity)));
        }
        let (lo, hi) = self.n_range();
        if lo > hi || hi > self.capacity {
            return Err(CliError::Config(format!("need n_min <= n_max <= capacity, got {lo}..{hi} with capacity {}", self.capacity)));
        }
        if self.search.granularity == 0 || !(self.search.epsilon.is_finite() && self.search.epsilon >= 0.0) {
            return Err(CliError::Config("search granularity must be >= 1 and epsilon finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Load sweep: every policy at every arrival rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Poisson arrival rates (jobs/s).
    pub lambdas: Vec<f64>,
    pub policies: Vec<Policy>,
}

/// Forecast-error sweep over the base simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Mean absolute forecast error as a fraction of the true rate.
    pub error_fractions: Vec<f64>,
}

/// A parsed experiment with the hash of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
}

/// Reads a `.json` or `.toml` experiment file. Trace paths are taken
/// relative to the file's directory.
pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse(&text, path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(sim) = config.simulation.as_mut() {
        if let ArrivalProcess::Trace { path, .. } = &mut sim.workload.arrivals {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
    let hash = config_hash(&config);
    Ok(LoadedConfig { config, hash })
}

fn parse(text: &str, path: &Path) -> Result<ExperimentConfig, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => serde_json::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        "toml" => toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        _ => Err(CliError::Config(format!("{}: expected a .json or .toml file", path.display()))),
    }
}

/// SHA-256 of the configuration serialized as JSON, so equivalent JSON and
/// TOML files hash alike.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("configuration serializes");
    hex::encode(Sha256::digest(&canonical))
}

pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section.as_ref().ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
}

/// Directory outputs are written to, created on demand.
pub fn out_dir(path: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = path.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}
