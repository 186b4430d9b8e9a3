// SPDX-License-Identifier: Apache-2.0

//! Thermometer-to-binary encoding.
//!
//! The ones-counting encoder maps a snapshot to the number of set bits. A
//! single flipped bit moves the code by exactly one, whatever its position,
//! so bubbles near the transition cost at most one code each.

use serde::{Deserialize, Serialize};

use crate::tdl::ThermometerSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCode {
    pub code: usize,
    /// 0->1 transitions after the first 1->0 transition.
    pub bubble_count: usize,
}

pub fn encode_ones_count(sample: &ThermometerSample) -> BinaryCode {
    let code = sample.words().iter().map(|w| w.count_ones() as usize).sum();
    BinaryCode {
        code,
        bubble_count: bubble_count(sample),
    }
}

/// Counts rising (0->1) edges along the line, with a virtual `1` ahead of
/// tap 0. Before the first fall every bit is `1`, so every rising edge
/// counted here follows the first 1->0 transition.
pub fn bubble_count(sample: &ThermometerSample) -> usize {
    let mut carry = 1u64;
    let mut rising = 0;
    for &w in sample.words() {
        let prev = (w << 1) | carry;
        rising += (w & !prev).count_ones() as usize;
        carry = w >> 63;
    }
    rising
}

/// True iff the sample is a run of ones followed by a run of zeros.
pub fn is_clean_thermometer(sample: &ThermometerSample) -> bool {
    let ones: usize = sample.words().iter().map(|w| w.count_ones() as usize).sum();
    (0..ones).all(|i| sample.get(i))
}
