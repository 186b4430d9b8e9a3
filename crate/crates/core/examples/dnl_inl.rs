// SPDX-License-Identifier: Apache-2.0

//! Code-density calibration of the default delay line, with a text plot of
//! DNL and INL.
//!
//! ```bash
//! cargo run --release --example dnl_inl -- 1000000
//! ```

use tdcsync::calibration::{derive_table, run_code_density, table_stats};
use tdcsync::rng::seeded;
use tdcsync::tdl::{build_tdl, AcquisitionConfig, TdlConfig};

fn bar(x: f64, scale: f64) -> String {
    let n = (x.abs() * scale).round() as usize;
    let s = if x < 0.0 { "-" } else { "+" };
    s.repeat(n.min(40))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let events = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1_000_000u64);
    let cfg = TdlConfig::default();
    let tdl = build_tdl(&cfg)?;
    let hist = run_code_density(&tdl, &AcquisitionConfig::default(), events, &mut seeded(1));
    let table = derive_table(&hist)?;
    let s = table_stats(&table);

    println!(
        "taps {}  line {:.1} ps  clock {} ps",
        tdl.num_taps(),
        tdl.total_delay(),
        cfg.clock_period
    );
    println!("populated bins   {}", s.populated_bins);
    println!("mean bin width   {:.3} ps", s.mean_bin_width_ps);
    println!("LSB              {:.3} ps", table.lsb);
    println!("max |DNL|        {:.3} LSB", s.max_abs_dnl);
    println!("max |INL|        {:.3} LSB", s.max_abs_inl);
    println!("INL period       {:?} bins", s.inl_period_bins);
    println!();
    println!("code   width     DNL     INL");
    for k in (0..table.counts.len()).filter(|&k| table.is_populated(k)) {
        println!(
            "{k:>4} {:>7.2} {:>+7.3} {:>+7.3}  {}",
            table.bin_widths[k],
            table.dnl[k],
            table.inl[k],
            bar(table.inl[k], 10.0)
        );
    }
    Ok(())
}
