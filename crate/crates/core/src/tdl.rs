// SPDX-License-Identifier: Apache-2.0

//! Tapped delay line model and single-shot TDC acquisition.
//!
//! A hit edge enters the line `hit_phase` picoseconds before the sampling
//! clock edge. At the clock edge every tap the edge has already passed reads
//! `1`, the rest read `0`. Static per-tap variation, bank-crossing delay, hit
//! jitter and bubble corruption are all drawn from caller-supplied RNGs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum TdlError {
    #[error("invalid TDL config field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error(
        "nominal line delay {total_ps} ps is shorter than the clock period {clock_period_ps} ps"
    )]
    LineTooShort { total_ps: f64, clock_period_ps: f64 },
    #[error("invalid acquisition config field `{field}`: {reason}")]
    InvalidAcquisition { field: &'static str, reason: String },
    #[error("hit phase {hit_phase} ps outside [0, {clock_period_ps})")]
    HitPhaseOutOfRange {
        hit_phase: f64,
        clock_period_ps: f64,
    },
    #[error("invalid thermometer bit `{0}`")]
    InvalidBit(char),
}

fn default_min_tap_delay() -> f64 {
    1.0
}

/// Construction parameters for a synthetic delay line. All times in ps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdlConfig {
    pub num_taps: usize,
    pub mean_tap_delay: f64,
    pub tap_delay_jitter: f64,
    /// Every `bank_period`-th tap crosses a bank boundary; 0 disables banks.
    pub bank_period: usize,
    pub bank_extra_delay: f64,
    pub clock_period: f64,
    pub rng_seed: u64,
    /// Floor applied to each drawn tap delay.
    #[serde(default = "default_min_tap_delay")]
    pub min_tap_delay: f64,
}

impl Default for TdlConfig {
    /// 6.4 ns clock, mean tap 40.7 ps with bank crossings included. 168 taps
    /// leave several sigma of margin over one period for any seed.
    fn default() -> Self {
        Self {
            num_taps: 168,
            mean_tap_delay: 38.49,
            tap_delay_jitter: 3.0,
            bank_period: 24,
            bank_extra_delay: 53.0,
            clock_period: 6400.0,
            rng_seed: 2019,
            min_tap_delay: default_min_tap_delay(),
        }
    }
}

impl TdlConfig {
    /// Uniform line without variation or banks.
    pub fn uniform(num_taps: usize, tap_delay: f64, clock_period: f64) -> Self {
        Self {
            num_taps,
            mean_tap_delay: tap_delay,
            tap_delay_jitter: 0.0,
            bank_period: 0,
            bank_extra_delay: 0.0,
            clock_period,
            rng_seed: 0,
            min_tap_delay: default_min_tap_delay(),
        }
    }

    pub fn is_bank_tap(&self, index: usize) -> bool {
        self.bank_period > 0 && (index + 1).is_multiple_of(self.bank_period)
    }

    pub fn bank_taps(&self) -> usize {
        self.num_taps.checked_div(self.bank_period).unwrap_or(0)
    }

    /// Noiseless total delay: base taps plus every bank crossing.
    pub fn nominal_total_delay(&self) -> f64 {
        self.num_taps as f64 * self.mean_tap_delay + self.bank_taps() as f64 * self.bank_extra_delay
    }

    pub fn validate(&self) -> Result<(), TdlError> {
        let bad = |field, reason: &str| {
            Err(TdlError::InvalidField {
                field,
                reason: reason.to_owned(),
            })
        };
        if self.num_taps == 0 {
            return bad("num_taps", "must be positive");
        }
        if !(self.mean_tap_delay.is_finite() && self.mean_tap_delay > 0.0) {
            return bad("mean_tap_delay", "must be a finite value > 0");
        }
        if !(self.tap_delay_jitter.is_finite() && self.tap_delay_jitter >= 0.0) {
            return bad("tap_delay_jitter", "must be a finite value >= 0");
        }
        if !(self.bank_extra_delay.is_finite() && self.bank_extra_delay >= 0.0) {
            return bad("bank_extra_delay", "must be a finite value >= 0");
        }
        if !(self.clock_period.is_finite() && self.clock_period > 0.0) {
            return bad("clock_period", "must be a finite value > 0");
        }
        if !(self.min_tap_delay.is_finite() && self.min_tap_delay > 0.0) {
            return bad("min_tap_delay", "must be a finite value > 0");
        }
        let total = self.nominal_total_delay();
        if total < self.clock_period {
            return Err(TdlError::LineTooShort {
                total_ps: total,
                clock_period_ps: self.clock_period,
            });
        }
        Ok(())
    }
}

/// A realised delay line: per-tap delays and their exact prefix sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapDelayLine {
    tap_delays: Vec<f64>,
    boundaries: Vec<f64>,
    clock_period: f64,
}

impl TapDelayLine {
    /// Builds a line from explicit tap delays.
    pub fn from_tap_delays(tap_delays: Vec<f64>, clock_period: f64) -> Result<Self, TdlError> {
        if tap_delays.is_empty() {
            return Err(TdlError::InvalidField {
                field: "num_taps",
                reason: "must be positive".into(),
            });
        }
        if let Some(d) = tap_delays.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(TdlError::InvalidField {
                field: "tap_delays",
                reason: format!("tap delay {d} is not a finite value > 0"),
            });
        }
        let boundaries: Vec<f64> = tap_delays
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d;
                Some(*acc)
            })
            .collect();
        let total = *boundaries.last().expect("non-empty");
        if total < clock_period {
            return Err(TdlError::LineTooShort {
                total_ps: total,
                clock_period_ps: clock_period,
            });
        }
        Ok(Self {
            tap_delays,
            boundaries,
            clock_period,
        })
    }

    pub fn num_taps(&self) -> usize {
        self.tap_delays.len()
    }

    pub fn tap_delays(&self) -> &[f64] {
        &self.tap_delays
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn clock_period(&self) -> f64 {
        self.clock_period
    }

    pub fn total_delay(&self) -> f64 {
        *self.boundaries.last().expect("non-empty")
    }

    /// Number of taps the edge has passed after `interval` ps.
    pub fn ideal_code(&self, interval: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= interval)
    }

    /// Width of each code's time span inside one clock period. Codes whose
    /// span starts at or beyond the period get zero.
    pub fn bin_widths_within_period(&self) -> Vec<f64> {
        let t = self.clock_period;
        let mut widths = Vec::with_capacity(self.num_taps() + 1);
        let mut left = 0.0f64;
        for &b in &self.boundaries {
            widths.push((b.min(t) - left.min(t)).max(0.0));
            left = b;
        }
        widths.push((t - left.min(t)).max(0.0));
        widths
    }
}

/// Draws a delay line from `config`. Deterministic in `config.rng_seed`.
pub fn build_tdl(config: &TdlConfig) -> Result<TapDelayLine, TdlError> {
    config.validate()?;
    let mut rng = rng::seeded(config.rng_seed);
    let spread = Normal::new(0.0, config.tap_delay_jitter).map_err(|e| TdlError::InvalidField {
        field: "tap_delay_jitter",
        reason: e.to_string(),
    })?;
    let delays = (0..config.num_taps)
        .map(|i| {
            let base = if config.tap_delay_jitter > 0.0 {
                config.mean_tap_delay + spread.sample(&mut rng)
            } else {
                config.mean_tap_delay
            };
            let mut d = base.max(config.min_tap_delay);
            if config.is_bank_tap(i) {
                d += config.bank_extra_delay;
            }
            d
        })
        .collect();
    TapDelayLine::from_tap_delays(delays, config.clock_period)
}

/// Noise applied to each acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub hit_jitter_sigma: f64,
    pub bubble_probability: f64,
    pub bubble_depth: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            hit_jitter_sigma: 15.0,
            bubble_probability: 0.02,
            bubble_depth: 2,
        }
    }
}

impl AcquisitionConfig {
    pub fn noiseless() -> Self {
        Self {
            hit_jitter_sigma: 0.0,
            bubble_probability: 0.0,
            bubble_depth: 0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.hit_jitter_sigma == 0.0 && (self.bubble_probability == 0.0 || self.bubble_depth == 0)
    }

    pub fn validate(&self) -> Result<(), TdlError> {
        if !(self.hit_jitter_sigma.is_finite() && self.hit_jitter_sigma >= 0.0) {
            return Err(TdlError::InvalidAcquisition {
                field: "hit_jitter_sigma",
                reason: "must be a finite value >= 0".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.bubble_probability) {
            return Err(TdlError::InvalidAcquisition {
                field: "bubble_probability",
                reason: "must lie in [0, 1]".into(),
            });
        }
        Ok(())
    }
}

/// One raw snapshot of the line, one bit per tap.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ThermometerSample {
    words: Vec<u64>,
    len: usize,
}

impl ThermometerSample {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    /// Clean thermometer code with the lowest `ones` bits set.
    pub fn thermometer(len: usize, ones: usize) -> Self {
        assert!(ones <= len, "{ones} ones do not fit in {len} taps");
        let mut s = Self::zeros(len);
        let full = ones / 64;
        for w in &mut s.words[..full] {
            *w = u64::MAX;
        }
        let rem = ones % 64;
        if rem > 0 {
            s.words[full] = (1u64 << rem) - 1;
        }
        s
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            s.set(i, true);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, index: usize) -> bool {
        assert!(index < self.len);
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn set(&mut self, index: usize, value: bool) {
        assert!(index < self.len);
        let mask = 1u64 << (index % 64);
        if value {
            self.words[index / 64] |= mask;
        } else {
            self.words[index / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, index: usize) {
        assert!(index < self.len);
        self.words[index / 64] ^= 1u64 << (index % 64);
    }

    /// Packed little-endian words; bit `i` is tap `i`. Bits past `len` are zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }
}

impl fmt::Display for ThermometerSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ThermometerSample {
    type Err = TdlError;

    /// Parses `"1100"`, tap 0 first.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(TdlError::InvalidBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_bits(&bits))
    }
}

/// Takes one snapshot of a hit arriving `hit_phase` ps before the clock edge.
pub fn acquire<R: Rng + ?Sized>(
    tdl: &TapDelayLine,
    hit_phase: f64,
    acq: &AcquisitionConfig,
    rng: &mut R,
) -> Result<ThermometerSample, TdlError> {
    check_phase(tdl, hit_phase)?;
    Ok(acquire_unchecked(tdl, hit_phase, acq, rng))
}

pub(crate) fn check_phase(tdl: &TapDelayLine, hit_phase: f64) -> Result<(), TdlError> {
    if !(hit_phase >= 0.0 && hit_phase < tdl.clock_period) {
        return Err(TdlError::HitPhaseOutOfRange {
            hit_phase,
            clock_period_ps: tdl.clock_period,
        });
    }
    Ok(())
}

pub(crate) fn acquire_unchecked<R: Rng + ?Sized>(
    tdl: &TapDelayLine,
    hit_phase: f64,
    acq: &AcquisitionConfig,
    rng: &mut R,
) -> ThermometerSample {
    let mut interval = hit_phase;
    if acq.hit_jitter_sigma > 0.0 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        interval += acq.hit_jitter_sigma * z;
    }
    let interval = interval.clamp(0.0, tdl.total_delay());
    let code = tdl.ideal_code(interval);
    let n = tdl.num_taps();
    let mut sample = ThermometerSample::thermometer(n, code);
    if acq.bubble_depth > 0
        && acq.bubble_probability > 0.0
        && rng.random_bool(acq.bubble_probability)
    {
        // Candidate bits sit within `bubble_depth` taps on either side of the
        // 1->0 boundary.
        let lo = code.saturating_sub(acq.bubble_depth);
        let hi = (code + acq.bubble_depth).min(n);
        if hi > lo {
            let idx = rng.random_range(lo..hi);
            sample.flip(idx);
        }
    }
    sample
}
