//! Run configuration: a flat `key = value` file (TOML syntax) whose keys are
//! the channel parameters plus the protocol parameters. Every key is
//! optional; command-line flags override file values.
//!
//! ```text
//! path_loss_exponent = 3.0
//! shadowing_sigma_cdbm = 400
//! seed = 7
//! sla = "centralized"
//! epsilon_cdbm = 2500.0
//! half_open_capacity = 64
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::protocol::{ProtocolParams, SlaMode, WorldSpec};
use crate::radio::{EnvironmentConfig, RadioError};
use crate::zone::{DEFAULT_CELLS_PER_ZONE, DEFAULT_PERCENTILE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid SLA mode {0:?}")]
    Sla(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

/// Merged configuration. Defaults are documented per field.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// 3.0
    pub path_loss_exponent: f64,
    /// 1.0 m
    pub reference_distance_m: f64,
    /// 4000 cdB
    pub reference_loss_cdbm: i32,
    /// 400 cdB
    pub shadowing_sigma_cdbm: i32,
    /// 50 ns
    pub toa_jitter_ns: u64,
    /// -9500 cdBm
    pub noise_floor_cdbm: i32,
    /// 7
    pub seed: u64,
    /// "centralized"
    pub sla: String,
    /// 32
    pub sqn_window: u64,
    /// Calibrated from the map when absent.
    pub epsilon_cdbm: Option<f64>,
    /// 0.99
    pub epsilon_percentile: f64,
    /// 1.0
    pub epsilon_headroom: f64,
    /// 1000
    pub calibration_queries: usize,
    /// 3
    pub knn_k: usize,
    /// 2 s
    pub freshness_window_ns: u64,
    /// 64
    pub half_open_capacity: usize,
    /// 500 ms
    pub half_open_timeout_ns: u64,
    /// 1 h
    pub cache_ttl_ns: u64,
    /// 5 ms
    pub hop_latency_ns: u64,
    /// 4
    pub cells_per_zone: usize,
    /// 4
    pub orientations: u32,
    /// 25
    pub samples_per_combo: u32,
    /// Radio map to load instead of synthesizing one.
    pub map_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvironmentConfig::default();
        let p = ProtocolParams::default();
        let spec = WorldSpec::default();
        Self {
            path_loss_exponent: env.path_loss_exponent,
            reference_distance_m: env.reference_distance_m,
            reference_loss_cdbm: env.reference_loss_cdbm,
            shadowing_sigma_cdbm: env.shadowing_sigma_cdbm,
            toa_jitter_ns: env.toa_jitter_ns,
            noise_floor_cdbm: env.noise_floor_cdbm,
            seed: env.seed,
            sla: SlaMode::Centralized.as_str().to_string(),
            sqn_window: p.sqn_window,
            epsilon_cdbm: None,
            epsilon_percentile: DEFAULT_PERCENTILE,
            epsilon_headroom: spec.epsilon_headroom,
            calibration_queries: spec.calibration_queries,
            knn_k: p.knn_k,
            freshness_window_ns: p.freshness_window_ns,
            half_open_capacity: p.half_open_capacity,
            half_open_timeout_ns: p.half_open_timeout_ns,
            cache_ttl_ns: p.cache_ttl_ns,
            hop_latency_ns: p.hop_latency_ns,
            cells_per_zone: DEFAULT_CELLS_PER_ZONE,
            orientations: spec.orientations,
            samples_per_combo: spec.samples_per_combo,
            map_path: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn env_config(&self) -> Result<EnvironmentConfig, ConfigError> {
        let cfg = EnvironmentConfig {
            path_loss_exponent: self.path_loss_exponent,
            reference_distance_m: self.reference_distance_m,
            reference_loss_cdbm: self.reference_loss_cdbm,
            shadowing_sigma_cdbm: self.shadowing_sigma_cdbm,
            toa_jitter_ns: self.toa_jitter_ns,
            noise_floor_cdbm: self.noise_floor_cdbm,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sla_mode(&self) -> Result<SlaMode, ConfigError> {
        self.sla.parse().map_err(|_| ConfigError::Sla(self.sla.clone()))
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams, ConfigError> {
        if self.sqn_window == 0 {
            return Err(ConfigError::Invalid("sqn_window must be >= 1".into()));
        }
        if self.knn_k == 0 {
            return Err(ConfigError::Invalid("knn_k must be >= 1".into()));
        }
        if self.half_open_capacity == 0 {
            return Err(ConfigError::Invalid("half_open_capacity must be >= 1".into()));
        }
        if let Some(e) = self.epsilon_cdbm {
            if e.is_nan() || e <= 0.0 {
                return Err(ConfigError::Invalid("epsilon_cdbm must be > 0".into()));
            }
        }
        Ok(ProtocolParams {
            sqn_window: self.sqn_window,
            knn_k: self.knn_k,
            epsilon_cdbm: self.epsilon_cdbm.unwrap_or(f64::INFINITY),
            freshness_window_ns: self.freshness_window_ns,
            half_open_capacity: self.half_open_capacity,
            half_open_timeout_ns: self.half_open_timeout_ns,
            cache_ttl_ns: self.cache_ttl_ns,
            hop_latency_ns: self.hop_latency_ns,
            ..ProtocolParams::default()
        })
    }

    pub fn world_spec(&self) -> Result<WorldSpec, ConfigError> {
        if !(0.0..=1.0).contains(&self.epsilon_percentile) || self.epsilon_headroom <= 0.0 {
            return Err(ConfigError::Invalid(
                "epsilon_percentile must be in [0, 1] and epsilon_headroom > 0".into(),
            ));
        }
        Ok(WorldSpec {
            env: self.env_config()?,
            cells_per_zone: self.cells_per_zone,
            orientations: self.orientations,
            samples_per_combo: self.samples_per_combo,
            calibration_queries: self.calibration_queries,
            percentile: self.epsilon_percentile,
            epsilon_headroom: self.epsilon_headroom,
            epsilon_override: self.epsilon_cdbm,
            params: self.protocol_params()?,
        })
    }
}
