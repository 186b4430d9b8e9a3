// SPDX-License-Identifier: Apache-2.0

//! Phase interpolator model and the TDC-driven alignment loop.
//!
//! The slave channel's divided clock is fed to the TDC as the hit, the
//! master's parallel clock samples it, and the calibrated code gives the
//! rising-edge skew. The loop steps the slave's PI until the measured skew is
//! within tolerance of the target.
//!
//! The PI code register wraps every unit interval, but the phase it applies to
//! the divided clock does not: a full turn of the interpolator slips the
//! serial clock, and therefore the parallel clock, by one UI. The channel model
//! tracks that cumulative shift and reduces it modulo the clock period.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::calibration::CalibrationTable;
use crate::encoder::encode_ones_count;
use crate::stats;
use crate::tdl::{acquire_unchecked, AcquisitionConfig, TapDelayLine};

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error(
        "calibration table covers codes 0..={table_max} over {table_period} ps, \
         line has {taps} taps over {line_period} ps"
    )]
    TableMismatch {
        table_max: usize,
        table_period: f64,
        taps: usize,
        line_period: f64,
    },
    #[error("invalid alignment parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiConfig {
    pub step_ps: f64,
    pub codes_per_ui: u32,
}

impl Default for PiConfig {
    /// 3.125 ps steps; 128 codes span one 400 ps UI at 2.5 Gb/s.
    fn default() -> Self {
        Self {
            step_ps: 3.125,
            codes_per_ui: 128,
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.step_ps.is_finite() && self.step_ps > 0.0) {
            return Err(AlignError::InvalidParameter {
                field: "step_ps",
                reason: "must be a finite value > 0".into(),
            });
        }
        if self.codes_per_ui == 0 {
            return Err(AlignError::InvalidParameter {
                field: "codes_per_ui",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterpolatorState {
    code: u32,
    step_ps: f64,
    codes_per_ui: u32,
    /// Net full turns since reset.
    ui_turns: i64,
}

impl PhaseInterpolatorState {
    pub fn new(config: &PiConfig) -> Self {
        Self {
            code: 0,
            step_ps: config.step_ps,
            codes_per_ui: config.codes_per_ui,
            ui_turns: 0,
        }
    }

    pub fn code(&self) -> u32 {
        self.code
    }

    pub fn step_ps(&self) -> f64 {
        self.step_ps
    }

    pub fn codes_per_ui(&self) -> u32 {
        self.codes_per_ui
    }

    pub fn ui_ps(&self) -> f64 {
        self.codes_per_ui as f64 * self.step_ps
    }

    /// Phase within the current UI, `code * step_ps`.
    pub fn phase_shift_ps(&self) -> f64 {
        self.code as f64 * self.step_ps
    }

    /// Total phase slipped since reset, including full UI turns.
    pub fn cumulative_shift_ps(&self) -> f64 {
        self.position() as f64 * self.step_ps
    }

    fn position(&self) -> i64 {
        self.ui_turns * self.codes_per_ui as i64 + self.code as i64
    }

    /// Moves the interpolator by `delta_codes`, wrapping the code register.
    pub fn apply(&self, delta_codes: i64) -> Self {
        let cpu = self.codes_per_ui as i64;
        let pos = self.position() + delta_codes;
        Self {
            code: pos.rem_euclid(cpu) as u32,
            ui_turns: pos.div_euclid(cpu),
            ..self.clone()
        }
    }
}

pub fn pi_apply(pi: &PhaseInterpolatorState, delta_codes: i64) -> PhaseInterpolatorState {
    pi.apply(delta_codes)
}

/// Wraps `x` into `(-period/2, period/2]`.
pub fn wrap_error(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    /// Slave minus master rising edge at power-up, ps.
    pub true_skew_ps: f64,
    pub pi: PhaseInterpolatorState,
    pub clock_period_ps: f64,
}

impl ChannelModel {
    pub fn new(true_skew_ps: f64, pi: PhaseInterpolatorState, clock_period_ps: f64) -> Self {
        Self {
            true_skew_ps,
            pi,
            clock_period_ps,
        }
    }

    /// Skew seen by the TDC, in `[0, clock_period)`.
    pub fn effective_skew(&self) -> f64 {
        let s =
            (self.true_skew_ps + self.pi.cumulative_shift_ps()).rem_euclid(self.clock_period_ps);
        // rem_euclid can round up to the period itself for tiny negatives.
        if s >= self.clock_period_ps {
            0.0
        } else {
            s
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewMeasurement {
    pub mean_ps: f64,
    pub std_ps: f64,
    pub samples: u32,
}

fn check_table(tdl: &TapDelayLine, table: &CalibrationTable) -> Result<(), AlignError> {
    if table.max_code() != tdl.num_taps() || table.clock_period != tdl.clock_period() {
        return Err(AlignError::TableMismatch {
            table_max: table.max_code(),
            table_period: table.clock_period,
            taps: tdl.num_taps(),
            line_period: tdl.clock_period(),
        });
    }
    Ok(())
}

/// Averages `num_samples` calibrated TDC readings of the channel's skew.
pub fn measure_skew<R: Rng + ?Sized>(
    channel: &ChannelModel,
    tdl: &TapDelayLine,
    acq: &AcquisitionConfig,
    table: &CalibrationTable,
    num_samples: u32,
    rng: &mut R,
) -> Result<SkewMeasurement, AlignError> {
    check_table(tdl, table)?;
    if num_samples == 0 {
        return Err(AlignError::InvalidParameter {
            field: "num_samples",
            reason: "must be at least 1".into(),
        });
    }
    Ok(measure_unchecked(
        channel,
        tdl,
        acq,
        table,
        num_samples,
        rng,
    ))
}

fn measure_unchecked<R: Rng + ?Sized>(
    channel: &ChannelModel,
    tdl: &TapDelayLine,
    acq: &AcquisitionConfig,
    table: &CalibrationTable,
    num_samples: u32,
    rng: &mut R,
) -> SkewMeasurement {
    let phase = channel.effective_skew();
    let readings: Vec<f64> = (0..num_samples)
        .map(|_| {
            let sample = acquire_unchecked(tdl, phase, acq, rng);
            table.bin_centers[encode_ones_count(&sample).code]
        })
        .collect();
    SkewMeasurement {
        mean_ps: stats::mean(&readings),
        std_ps: stats::sample_std(&readings),
        samples: num_samples,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    /// `round(error / step)` codes per iteration.
    #[default]
    Proportional,
    /// One code toward the target per iteration.
    UnitStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignParams {
    pub target_skew_ps: f64,
    pub tolerance_ps: f64,
    pub max_iters: u32,
    pub num_samples: u32,
    pub policy: StepPolicy,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            target_skew_ps: 306.5,
            tolerance_ps: 3.125,
            max_iters: 64,
            num_samples: 1024,
            policy: StepPolicy::Proportional,
        }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<(), AlignError> {
        let bad = |field, reason: &str| {
            Err(AlignError::InvalidParameter {
                field,
                reason: reason.into(),
            })
        };
        if !self.target_skew_ps.is_finite() {
            return bad("target_skew_ps", "must be finite");
        }
        if !(self.tolerance_ps.is_finite() && self.tolerance_ps >= 0.0) {
            return bad("tolerance_ps", "must be a finite value >= 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters", "must be at least 1");
        }
        if self.num_samples == 0 {
            return bad("num_samples", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignResult {
    pub converged: bool,
    /// Correction steps taken.
    pub iterations: u32,
    /// True effective skew minus target, wrapped to half a clock period.
    pub final_residual_ps: f64,
    /// Last measured error, target minus measured, wrapped.
    pub final_error_ps: f64,
    pub final_pi_code: u32,
    /// Measured error before each step, and the last one.
    pub error_trace: Vec<f64>,
}

/// Runs the closed loop on `channel`, leaving its PI at the final setting.
#[allow(clippy::too_many_arguments)]
pub fn align_channel<R: Rng + ?Sized>(
    channel: &mut ChannelModel,
    params: &AlignParams,
    tdl: &TapDelayLine,
    acq: &AcquisitionConfig,
    table: &CalibrationTable,
    rng: &mut R,
) -> Result<AlignResult, AlignError> {
    params.validate()?;
    check_table(tdl, table)?;
    let period = tdl.clock_period();
    let step = channel.pi.step_ps();
    let max_delta = (channel.pi.codes_per_ui() / 2).max(1) as i64;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let m = measure_unchecked(channel, tdl, acq, table, params.num_samples, rng);
        let error = wrap_error(params.target_skew_ps - m.mean_ps, period);
        trace.push(error);
        if error.abs() <= params.tolerance_ps {
            converged = true;
            break;
        }
        if iterations == params.max_iters {
            break;
        }
        let delta = match params.policy {
            StepPolicy::Proportional => {
                ((error / step).round() as i64).clamp(-max_delta, max_delta)
            }
            StepPolicy::UnitStep => error.signum() as i64,
        };
        channel.pi = channel.pi.apply(delta);
        iterations += 1;
    }
    Ok(AlignResult {
        converged,
        iterations,
        final_residual_ps: wrap_error(channel.effective_skew() - params.target_skew_ps, period),
        final_error_ps: *trace.last().expect("at least one measurement"),
        final_pi_code: channel.pi.code(),
        error_trace: trace,
    })
}

/// Statistical stand-in for the transceiver's built-in phase alignment:
/// residuals are Gaussian, truncated at `±max_abs_ps`, with the width chosen so
/// the truncated distribution has RMS `rms_ps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfAlignBaseline {
    pub rms_ps: f64,
    pub max_abs_ps: f64,
}

impl Default for SelfAlignBaseline {
    fn default() -> Self {
        Self {
            rms_ps: 22.0,
            max_abs_ps: 50.0,
        }
    }
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// RMS of N(0, sigma) truncated to `[-a, a]`.
pub fn truncated_normal_rms(sigma: f64, a: f64) -> f64 {
    let alpha = a / sigma;
    let mass = erf(alpha / std::f64::consts::SQRT_2);
    sigma * (1.0 - 2.0 * alpha * std_normal_pdf(alpha) / mass).sqrt()
}

impl SelfAlignBaseline {
    /// Width of the untruncated Gaussian. Truncated RMS rises monotonically
    /// with sigma toward `a / sqrt(3)`, so bisection converges.
    pub fn sigma(&self) -> f64 {
        let target = self.rms_ps;
        assert!(
            target > 0.0 && target < self.max_abs_ps / 3f64.sqrt(),
            "rms {target} unreachable under truncation at {}",
            self.max_abs_ps
        );
        let (mut lo, mut hi) = (target, target);
        while truncated_normal_rms(hi, self.max_abs_ps) < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if truncated_normal_rms(mid, self.max_abs_ps) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sampler(&self) -> BaselineSampler {
        BaselineSampler {
            normal: Normal::new(0.0, self.sigma()).expect("positive sigma"),
            max_abs_ps: self.max_abs_ps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineSampler {
    normal: Normal<f64>,
    max_abs_ps: f64,
}

impl BaselineSampler {
    /// Residual skew after one self-alignment run.
    pub fn residual<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.normal.sample(rng);
            if x.abs() <= self.max_abs_ps {
                return x;
            }
        }
    }
}

pub fn self_align_baseline<R: Rng + ?Sized>(baseline: &SelfAlignBaseline, rng: &mut R) -> f64 {
    baseline.sampler().residual(rng)
}
