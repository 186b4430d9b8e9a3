// SPDX-License-Identifier: Apache-2.0

pub mod calibration;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod io;
pub mod montecarlo;
pub mod phase;
pub mod rng;
pub mod stats;
pub mod tdl;
