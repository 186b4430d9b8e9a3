// SPDX-License-Identifier: Apache-2.0

//! The JSON run configuration.
//!
//! One document drives every command. Missing sections fall back to their
//! defaults; unknown fields are rejected so typos surface as errors. Command
//! line flags may override the top-level scalars only.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::{CampaignError, TrialConfig};
use crate::phase::{AlignParams, PiConfig, SelfAlignBaseline};
use crate::tdl::{AcquisitionConfig, TdlConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(#[from] CampaignError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub master_seed: u64,
    pub num_trials: usize,
    pub num_channels: usize,
    /// Code-density events for calibration.
    pub num_events: u64,
    pub histogram_bin_width_ps: f64,
    /// Existing calibration table for `sync`; relative paths resolve against
    /// the config file's directory.
    pub table_path: Option<PathBuf>,
    pub tdl: TdlConfig,
    pub acquisition: AcquisitionConfig,
    pub pi: PiConfig,
    pub alignment: AlignParams,
    pub baseline: SelfAlignBaseline,
}

impl Default for SimConfig {
    fn default() -> Self {
        let t = TrialConfig::default();
        Self {
            master_seed: t.master_seed,
            num_trials: t.num_trials,
            num_channels: t.num_channels,
            num_events: t.calibration_events,
            histogram_bin_width_ps: t.histogram_bin_width_ps,
            table_path: None,
            tdl: t.tdl,
            acquisition: t.acquisition,
            pi: t.pi,
            alignment: t.alignment,
            baseline: t.baseline,
        }
    }
}

/// Top-level scalars settable from the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub num_trials: Option<usize>,
}

impl SimConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::from_json(&text, path)?;
        if let (Some(table), Some(dir)) = (cfg.table_path.as_ref(), path.parent()) {
            if table.is_relative() {
                cfg.table_path = Some(dir.join(table));
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.master_seed {
            self.master_seed = seed;
        }
        if let Some(trials) = overrides.num_trials {
            self.num_trials = trials;
        }
    }

    pub fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            num_trials: self.num_trials,
            num_channels: self.num_channels,
            master_seed: self.master_seed,
            calibration_events: self.num_events,
            histogram_bin_width_ps: self.histogram_bin_width_ps,
            tdl: self.tdl.clone(),
            acquisition: self.acquisition.clone(),
            pi: self.pi.clone(),
            alignment: self.alignment.clone(),
            baseline: self.baseline.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.trial_config().validate()?;
        let b = &self.baseline;
        if !(b.rms_ps > 0.0 && b.rms_ps < b.max_abs_ps / 3f64.sqrt()) {
            return Err(CampaignError::InvalidField {
                field: "baseline.rms_ps",
                reason: format!(
                    "must lie in (0, {}) for truncation at {} ps",
                    b.max_abs_ps / 3f64.sqrt(),
                    b.max_abs_ps
                ),
            }
            .into());
        }
        Ok(())
    }

    /// Canonical serialisation; its digest identifies the run.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }
}
