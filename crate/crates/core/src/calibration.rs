// SPDX-License-Identifier: Apache-2.0

//! Code-density calibration.
//!
//! Hits uniformly distributed over one clock period land in each code with
//! probability proportional to that code's bin width, so the histogram of
//! codes gives the bin widths directly. From those we derive bin centers, the
//! LSB, DNL and INL, and the code-to-time lookup used when measuring skew.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::encode_ones_count;
use crate::rng::{self, Domain};
use crate::tdl::{acquire_unchecked, AcquisitionConfig, TapDelayLine};

pub const TABLE_VERSION: u32 = 1;

const EVENTS_PER_SHARD: u64 = 1 << 16;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("histogram holds no events")]
    EmptyHistogram,
    #[error("code {code} outside [0, {max_code}]")]
    CodeOutOfRange { code: usize, max_code: usize },
    #[error("clock period {0} ps must be a finite value > 0")]
    InvalidClockPeriod(f64),
}

/// Occurrence count of each code, `0..=num_taps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeHistogram {
    counts: Vec<u64>,
    total: u64,
    clock_period: f64,
}

impl CodeHistogram {
    pub fn new(num_codes: usize, clock_period: f64) -> Self {
        Self {
            counts: vec![0; num_codes],
            total: 0,
            clock_period,
        }
    }

    pub fn from_counts(counts: Vec<u64>, clock_period: f64) -> Self {
        let total = counts.iter().sum();
        Self {
            counts,
            total,
            clock_period,
        }
    }

    pub fn record(&mut self, code: usize) {
        self.counts[code] += 1;
        self.total += 1;
    }

    /// Adds another shard. Both histograms must cover the same codes.
    pub fn merge(&mut self, other: &CodeHistogram) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn clock_period(&self) -> f64 {
        self.clock_period
    }
}

/// Runs a code-density test of `num_events` uniformly distributed hits.
///
/// Events are split into fixed-size shards, each drawing from its own stream
/// seeded off `rng`, so the histogram does not depend on the thread count.
pub fn run_code_density<R: Rng + ?Sized>(
    tdl: &TapDelayLine,
    acq: &AcquisitionConfig,
    num_events: u64,
    rng: &mut R,
) -> CodeHistogram {
    let base: u64 = rng.random();
    let t = tdl.clock_period();
    let num_codes = tdl.num_taps() + 1;
    let shards = num_events.div_ceil(EVENTS_PER_SHARD);
    (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = rng::stream(base, Domain::Shard, shard);
            let events = EVENTS_PER_SHARD.min(num_events - shard * EVENTS_PER_SHARD);
            let mut hist = CodeHistogram::new(num_codes, t);
            for _ in 0..events {
                let phase = rng.random_range(0.0..t);
                let sample = acquire_unchecked(tdl, phase, acq, &mut rng);
                hist.record(encode_ones_count(&sample).code);
            }
            hist
        })
        .reduce(
            || CodeHistogram::new(num_codes, t),
            |mut a, b| {
                a.merge(&b);
                a
            },
        )
}

/// The code-to-time map with its linearity figures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTable {
    pub version: u32,
    #[serde(rename = "clock_period_ps")]
    pub clock_period: f64,
    pub counts: Vec<u64>,
    #[serde(rename = "bin_widths_ps")]
    pub bin_widths: Vec<f64>,
    #[serde(rename = "bin_centers_ps")]
    pub bin_centers: Vec<f64>,
    #[serde(rename = "lsb_ps")]
    pub lsb: f64,
    /// In LSB; zero for unpopulated bins.
    pub dnl: Vec<f64>,
    /// Running sum of `dnl`, in LSB.
    pub inl: Vec<f64>,
}

pub fn derive_table(hist: &CodeHistogram) -> Result<CalibrationTable, CalibrationError> {
    CalibrationTable::from_counts(hist.counts.clone(), hist.clock_period)
}

impl CalibrationTable {
    pub fn from_counts(counts: Vec<u64>, clock_period: f64) -> Result<Self, CalibrationError> {
        if !(clock_period.is_finite() && clock_period > 0.0) {
            return Err(CalibrationError::InvalidClockPeriod(clock_period));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(CalibrationError::EmptyHistogram);
        }
        let bin_widths: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / total as f64 * clock_period)
            .collect();
        let mut bin_centers = Vec::with_capacity(counts.len());
        let mut left = 0.0;
        for &w in &bin_widths {
            bin_centers.push(left + w / 2.0);
            left += w;
        }
        let populated = counts.iter().filter(|&&c| c > 0).count();
        let lsb = clock_period / populated as f64;
        let dnl: Vec<f64> = counts
            .iter()
            .zip(&bin_widths)
            .map(|(&c, &w)| if c > 0 { w / lsb - 1.0 } else { 0.0 })
            .collect();
        let inl = prefix_sum(&dnl);
        Ok(Self {
            version: TABLE_VERSION,
            clock_period,
            counts,
            bin_widths,
            bin_centers,
            lsb,
            dnl,
            inl,
        })
    }

    pub fn max_code(&self) -> usize {
        self.bin_widths.len() - 1
    }

    pub fn is_populated(&self, code: usize) -> bool {
        self.counts.get(code).is_some_and(|&c| c > 0)
    }

    pub fn populated_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn bin_width(&self, code: usize) -> Result<f64, CalibrationError> {
        self.check_code(code)?;
        Ok(self.bin_widths[code])
    }

    /// Time of the center of `code`'s bin. An empty bin has zero width, so its
    /// center is the shared edge of its populated neighbours.
    pub fn code_to_time(&self, code: usize) -> Result<f64, CalibrationError> {
        self.check_code(code)?;
        Ok(self.bin_centers[code])
    }

    fn check_code(&self, code: usize) -> Result<(), CalibrationError> {
        if code > self.max_code() {
            return Err(CalibrationError::CodeOutOfRange {
                code,
                max_code: self.max_code(),
            });
        }
        Ok(())
    }

    /// INL restricted to populated bins.
    pub fn populated_inl(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.inl)
            .filter(|(&c, _)| c > 0)
            .map(|(_, &v)| v)
            .collect()
    }

    /// Re-derives every field from `counts` and reports each invariant that a
    /// stored table breaks.
    pub fn check_invariants(&self) -> Vec<InvariantViolation> {
        let mut out = Vec::new();
        let mut fail = |name: &'static str, detail: String| {
            out.push(InvariantViolation { name, detail });
        };
        if self.version != TABLE_VERSION {
            fail(
                "version",
                format!("table version {} is not {TABLE_VERSION}", self.version),
            );
            return out;
        }
        let n = self.counts.len();
        let lens = [
            self.bin_widths.len(),
            self.bin_centers.len(),
            self.dnl.len(),
            self.inl.len(),
        ];
        if n == 0 || lens.iter().any(|&l| l != n) {
            fail(
                "lengths",
                format!("counts has {n} entries but widths/centers/dnl/inl have {lens:?}"),
            );
            return out;
        }
        let reference = match Self::from_counts(self.counts.clone(), self.clock_period) {
            Ok(t) => t,
            Err(e) => {
                fail("counts", e.to_string());
                return out;
            }
        };
        let tol = 1e-9 * self.clock_period;
        let sum: f64 = self.bin_widths.iter().sum();
        if (sum - self.clock_period).abs() > tol {
            fail(
                "sum_widths",
                format!(
                    "bin widths sum to {sum} ps, clock period is {} ps",
                    self.clock_period
                ),
            );
        }
        if let Some(k) = first_mismatch(&self.bin_widths, &reference.bin_widths, tol) {
            fail(
                "widths_from_counts",
                format!(
                    "bin_widths[{k}] = {} ps but counts give {} ps",
                    self.bin_widths[k], reference.bin_widths[k]
                ),
            );
        }
        if (self.lsb - reference.lsb).abs() > tol {
            fail(
                "lsb",
                format!(
                    "lsb {} ps, clock period over populated bins gives {} ps",
                    self.lsb, reference.lsb
                ),
            );
        }
        if let Some(k) = first_mismatch(&self.dnl, &reference.dnl, 1e-9) {
            fail(
                "dnl",
                format!("dnl[{k}] = {}, expected {}", self.dnl[k], reference.dnl[k]),
            );
        }
        let dnl_sum: f64 = self.dnl.iter().sum();
        if dnl_sum.abs() >= 1e-9 {
            fail("dnl_sum", format!("dnl sums to {dnl_sum} LSB, not 0"));
        }
        let expected_inl = prefix_sum(&self.dnl);
        if let Some(k) = self.inl.iter().zip(&expected_inl).position(|(a, b)| a != b) {
            fail(
                "inl_prefix_sum",
                format!(
                    "inl[{k}] = {} but the dnl prefix sum is {}",
                    self.inl[k], expected_inl[k]
                ),
            );
        }
        if let Some(k) = first_mismatch(&self.bin_centers, &reference.bin_centers, tol) {
            fail(
                "bin_centers",
                format!(
                    "bin_centers[{k}] = {} ps, edges give {} ps",
                    self.bin_centers[k], reference.bin_centers[k]
                ),
            );
        }
        let populated_centers: Vec<f64> = (0..n)
            .filter(|&k| self.counts[k] > 0)
            .map(|k| self.bin_centers[k])
            .collect();
        if populated_centers.windows(2).any(|w| w[0] >= w[1]) {
            fail(
                "centers_increasing",
                "bin centers are not strictly increasing over populated bins".into(),
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantViolation {
    pub name: &'static str,
    pub detail: String,
}

// NaN counts as a mismatch.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn first_mismatch(a: &[f64], b: &[f64], tol: f64) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| !((x - y).abs() <= tol))
}

fn prefix_sum(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub populated_bins: usize,
    pub mean_bin_width_ps: f64,
    pub max_abs_dnl: f64,
    pub max_abs_inl: f64,
    /// Strongest INL period in bins; `None` when too few bins are populated.
    pub inl_period_bins: Option<usize>,
}

pub fn table_stats(table: &CalibrationTable) -> TableStats {
    let populated = table.populated_bins();
    let width_sum: f64 = (0..table.counts.len())
        .filter(|&k| table.is_populated(k))
        .map(|k| table.bin_widths[k])
        .sum();
    let max_abs = |xs: &[f64]| xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    TableStats {
        populated_bins: populated,
        mean_bin_width_ps: width_sum / populated as f64,
        max_abs_dnl: max_abs(&table.dnl),
        max_abs_inl: max_abs(&table.inl),
        inl_period_bins: dominant_period(&table.populated_inl()),
    }
}

/// Period, in samples, of the strongest spectral line of `series`.
///
/// The least-squares line is removed first, then the DFT magnitude is taken
/// at each integer period from 2 up to half the record length, so at least two
/// full cycles are observed. The zero-frequency term never participates.
pub fn dominant_period(series: &[f64]) -> Option<usize> {
    let n = series.len();
    if n < 4 {
        return None;
    }
    let detrended = detrend(series);
    (2..=n / 2)
        .map(|period| (period, magnitude_at(&detrended, 1.0 / period as f64)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p)
}

fn detrend(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean_t = (n - 1.0) / 2.0;
    let mean_x = xs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, x) in xs.iter().enumerate() {
        let dt = t as f64 - mean_t;
        sxy += dt * (x - mean_x);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    xs.iter()
        .enumerate()
        .map(|(t, x)| x - mean_x - slope * (t as f64 - mean_t))
        .collect()
}

fn magnitude_at(xs: &[f64], freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (t, x) in xs.iter().enumerate() {
        let phase = 2.0 * PI * freq * t as f64;
        re += x * phase.cos();
        im -= x * phase.sin();
    }
    re.hypot(im)
}
