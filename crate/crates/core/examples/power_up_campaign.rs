// SPDX-License-Identifier: Apache-2.0

//! Repeated power-ups of a two-channel system, each followed by TDC-driven
//! alignment, against the transceiver's own phase alignment.
//!
//! ```bash
//! cargo run --release --example power_up_campaign -- 1000
//! ```

use tdcsync::montecarlo::{compare_methods, TrialConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1000);
    let config = TrialConfig {
        num_trials: trials,
        num_channels: 2,
        ..TrialConfig::default()
    };
    let start = std::time::Instant::now();
    let cmp = compare_methods(&config)?;
    let tdc = &cmp.tdc;
    println!("power-ups            {}", tdc.residuals.len());
    println!("converged            {:.1} %", 100.0 * tdc.convergence_rate);
    println!("mean residual        {:+.3} ps", tdc.mean_ps);
    println!("TDC-based RMS        {:.3} ps", tdc.rms_ps);
    println!("max |dev from mean|  {:.3} ps", tdc.max_abs_deviation_ps);
    println!("self-align RMS       {:.3} ps", cmp.baseline.rms_ps);
    println!(
        "self-align max dev   {:.3} ps",
        cmp.baseline.max_abs_deviation_ps
    );
    println!("improvement          {:.1}x", cmp.rms_ratio);
    let iters: Vec<u32> = tdc.residuals.iter().map(|r| r.iterations).collect();
    println!(
        "PI corrections       mean {:.2}, max {}",
        iters.iter().sum::<u32>() as f64 / iters.len() as f64,
        iters.iter().max().unwrap_or(&0)
    );
    println!("elapsed              {:.2?}", start.elapsed());
    Ok(())
}
