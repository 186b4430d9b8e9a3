// SPDX-License-Identifier: Apache-2.0

//! Power-up campaigns.
//!
//! Each trial models one reset: every slave channel comes up with a fresh
//! uniformly distributed skew and is aligned to the common target. Trials and
//! channels draw from indexed streams of the master seed, so the report is the
//! same for any thread count or evaluation order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{derive_table, run_code_density, CalibrationError, CalibrationTable};
use crate::phase::{
    align_channel, AlignError, AlignParams, ChannelModel, PhaseInterpolatorState, PiConfig,
    SelfAlignBaseline,
};
use crate::rng::{self, Domain};
use crate::stats;
use crate::tdl::{build_tdl, AcquisitionConfig, TapDelayLine, TdlConfig, TdlError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Tdl(#[from] TdlError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("invalid trial config field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub num_trials: usize,
    /// Master plus slaves.
    pub num_channels: usize,
    pub master_seed: u64,
    pub calibration_events: u64,
    pub histogram_bin_width_ps: f64,
    pub tdl: TdlConfig,
    pub acquisition: AcquisitionConfig,
    pub pi: PiConfig,
    pub alignment: AlignParams,
    pub baseline: SelfAlignBaseline,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            num_trials: 1000,
            num_channels: 8,
            master_seed: 1,
            calibration_events: 1_000_000,
            histogram_bin_width_ps: 1.0,
            tdl: TdlConfig::default(),
            acquisition: AcquisitionConfig::default(),
            pi: PiConfig::default(),
            alignment: AlignParams::default(),
            baseline: SelfAlignBaseline::default(),
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.num_trials == 0 {
            return Err(CampaignError::InvalidField {
                field: "num_trials",
                reason: "must be positive".into(),
            });
        }
        if self.num_channels < 2 {
            return Err(CampaignError::InvalidField {
                field: "num_channels",
                reason: "needs a master and at least one slave".into(),
            });
        }
        if self.calibration_events == 0 {
            return Err(CampaignError::InvalidField {
                field: "num_events",
                reason: "must be positive".into(),
            });
        }
        if !(self.histogram_bin_width_ps.is_finite() && self.histogram_bin_width_ps > 0.0) {
            return Err(CampaignError::InvalidField {
                field: "histogram_bin_width_ps",
                reason: "must be a finite value > 0".into(),
            });
        }
        self.tdl.validate()?;
        self.acquisition.validate()?;
        self.pi.validate()?;
        self.alignment.validate()?;
        Ok(())
    }

    pub fn slaves(&self) -> usize {
        self.num_channels - 1
    }

    fn stream_index(&self, trial: usize, channel: usize) -> u64 {
        (trial * self.num_channels + channel) as u64
    }
}

/// One aligned slave channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub trial: usize,
    pub channel: usize,
    pub converged: bool,
    pub residual_ps: f64,
    pub iterations: u32,
    pub pi_code: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_center_ps: f64,
    pub count: u64,
}

/// Residual statistics over the converged channels of a campaign.
///
/// RMS is taken about the mean residual. With no converged channel the
/// moments are zero and `convergence_rate` is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub target_skew_ps: f64,
    pub rms_ps: f64,
    pub mean_ps: f64,
    pub max_abs_deviation_ps: f64,
    pub convergence_rate: f64,
    pub histogram_bin_width_ps: f64,
    pub histogram: Vec<HistogramBin>,
    pub baseline_rms_ps: Option<f64>,
    pub residuals: Vec<ResidualRow>,
}

impl SyncReport {
    /// Aggregates rows in `(trial, channel)` order, whatever order they came in.
    pub fn from_rows(
        mut rows: Vec<ResidualRow>,
        target_skew_ps: f64,
        histogram_bin_width_ps: f64,
    ) -> Self {
        rows.sort_by_key(|r| (r.trial, r.channel));
        let ok = converged_residuals(&rows);
        let convergence_rate = if rows.is_empty() {
            0.0
        } else {
            ok.len() as f64 / rows.len() as f64
        };
        let mean_ps = stats::mean(&ok);
        Self {
            target_skew_ps,
            rms_ps: stats::rms_about_mean(&ok),
            mean_ps,
            max_abs_deviation_ps: stats::max_abs_deviation(&ok),
            convergence_rate,
            histogram_bin_width_ps,
            histogram: bin_residuals(&ok, mean_ps, histogram_bin_width_ps),
            baseline_rms_ps: None,
            residuals: rows,
        }
    }

    pub fn converged_residuals(&self) -> Vec<f64> {
        converged_residuals(&self.residuals)
    }
}

fn converged_residuals(rows: &[ResidualRow]) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.converged)
        .map(|r| r.residual_ps)
        .collect()
}

fn bin_residuals(xs: &[f64], center: f64, width: f64) -> Vec<HistogramBin> {
    if xs.is_empty() {
        return Vec::new();
    }
    let idx: Vec<i64> = xs
        .iter()
        .map(|x| ((x - center) / width).round() as i64)
        .collect();
    let lo = *idx.iter().min().expect("non-empty");
    let hi = *idx.iter().max().expect("non-empty");
    let mut counts = vec![0u64; (hi - lo + 1) as usize];
    for i in idx {
        counts[(i - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            bin_center_ps: center + (lo + k as i64) as f64 * width,
            count,
        })
        .collect()
}

/// Bins converged residuals with one bin centered on the report mean. Empty
/// bins between the extremes are kept so the series plots directly.
pub fn residual_histogram(report: &SyncReport, bin_width_ps: f64) -> Vec<HistogramBin> {
    assert!(bin_width_ps > 0.0, "bin width must be positive");
    bin_residuals(&report.converged_residuals(), report.mean_ps, bin_width_ps)
}

/// The delay line and calibration shared by every trial of a campaign.
#[derive(Clone, Debug)]
pub struct Bench {
    pub tdl: TapDelayLine,
    pub table: CalibrationTable,
}

impl Bench {
    /// Builds the configured line and calibrates it from the master seed.
    pub fn calibrate(config: &TrialConfig) -> Result<Self, CampaignError> {
        let tdl = build_tdl(&config.tdl)?;
        let mut rng = rng::stream(config.master_seed, Domain::Calibration, 0);
        let hist = run_code_density(
            &tdl,
            &config.acquisition,
            config.calibration_events,
            &mut rng,
        );
        let table = derive_table(&hist)?;
        Ok(Self { tdl, table })
    }
}

/// Aligns slave `channel` after power-up `trial`.
pub fn run_channel(
    config: &TrialConfig,
    bench: &Bench,
    trial: usize,
    channel: usize,
) -> Result<ResidualRow, CampaignError> {
    let mut rng = rng::stream(
        config.master_seed,
        Domain::Trial,
        config.stream_index(trial, channel),
    );
    let period = bench.tdl.clock_period();
    let skew = rng.random_range(0.0..period);
    let mut ch = ChannelModel::new(skew, PhaseInterpolatorState::new(&config.pi), period);
    let res = align_channel(
        &mut ch,
        &config.alignment,
        &bench.tdl,
        &config.acquisition,
        &bench.table,
        &mut rng,
    )?;
    Ok(ResidualRow {
        trial,
        channel,
        converged: res.converged,
        residual_ps: res.final_residual_ps,
        iterations: res.iterations,
        pi_code: res.final_pi_code,
    })
}

pub fn run_trials(config: &TrialConfig) -> Result<SyncReport, CampaignError> {
    config.validate()?;
    let bench = Bench::calibrate(config)?;
    run_trials_on(config, &bench)
}

/// Runs the campaign against an existing line and table.
pub fn run_trials_on(config: &TrialConfig, bench: &Bench) -> Result<SyncReport, CampaignError> {
    config.validate()?;
    let slaves = config.slaves();
    let rows = (0..config.num_trials * slaves)
        .into_par_iter()
        .map(|i| run_channel(config, bench, i / slaves, 1 + i % slaves))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SyncReport::from_rows(
        rows,
        config.alignment.target_skew_ps,
        config.histogram_bin_width_ps,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSample {
    pub rms_ps: f64,
    pub mean_ps: f64,
    pub max_abs_deviation_ps: f64,
    pub residuals: Vec<f64>,
}

/// Draws `count` self-alignment residuals, one indexed stream per draw.
pub fn baseline_sample(config: &TrialConfig, count: usize) -> BaselineSample {
    let sampler = config.baseline.sampler();
    let residuals: Vec<f64> = (0..count as u64)
        .into_par_iter()
        .map(|i| sampler.residual(&mut rng::stream(config.master_seed, Domain::Baseline, i)))
        .collect();
    BaselineSample {
        rms_ps: stats::rms_about_mean(&residuals),
        mean_ps: stats::mean(&residuals),
        max_abs_deviation_ps: stats::max_abs_deviation(&residuals),
        residuals,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub tdc: SyncReport,
    pub baseline: BaselineSample,
    /// Baseline RMS over TDC-aligned RMS.
    pub rms_ratio: f64,
}

pub fn compare_methods(config: &TrialConfig) -> Result<MethodComparison, CampaignError> {
    config.validate()?;
    let bench = Bench::calibrate(config)?;
    compare_methods_on(config, &bench)
}

pub fn compare_methods_on(
    config: &TrialConfig,
    bench: &Bench,
) -> Result<MethodComparison, CampaignError> {
    let mut tdc = run_trials_on(config, bench)?;
    let baseline = baseline_sample(config, tdc.residuals.len());
    tdc.baseline_rms_ps = Some(baseline.rms_ps);
    Ok(MethodComparison {
        rms_ratio: baseline.rms_ps / tdc.rms_ps,
        tdc,
        baseline,
    })
}
