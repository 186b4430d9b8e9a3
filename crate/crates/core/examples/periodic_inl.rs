// SPDX-License-Identifier: Apache-2.0

//! Slower taps at every bank boundary leave a periodic INL pattern. The
//! detected period follows the configured bank period.
//!
//! ```bash
//! cargo run --release --example periodic_inl
//! ```

use tdcsync::calibration::{derive_table, run_code_density, table_stats};
use tdcsync::rng::seeded;
use tdcsync::tdl::{build_tdl, AcquisitionConfig, TdlConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("bank  extra ps  detected  max|INL|");
    for (bank_period, extra) in [(8, 40.0), (16, 53.0), (24, 53.0), (12, 53.0), (24, 0.0)] {
        let cfg = TdlConfig {
            bank_period,
            bank_extra_delay: extra,
            ..TdlConfig::default()
        };
        let tdl = build_tdl(&cfg)?;
        let hist = run_code_density(
            &tdl,
            &AcquisitionConfig::default(),
            1_000_000,
            &mut seeded(5),
        );
        let s = table_stats(&derive_table(&hist)?);
        let detected = s.inl_period_bins.map_or("-".to_string(), |p| p.to_string());
        println!(
            "{bank_period:>4}  {extra:>8.1}  {detected:>8}  {:>8.3}",
            s.max_abs_inl
        );
    }
    Ok(())
}
