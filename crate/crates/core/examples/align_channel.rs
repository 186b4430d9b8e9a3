// SPDX-License-Identifier: Apache-2.0

//! One slave channel walked onto the target skew by the PI loop, printing the
//! measured error at each step.
//!
//! ```bash
//! cargo run --release --example align_channel -- 2100.0
//! ```

use tdcsync::calibration::{derive_table, run_code_density};
use tdcsync::phase::{align_channel, AlignParams, ChannelModel, PhaseInterpolatorState, PiConfig};
use tdcsync::rng::seeded;
use tdcsync::tdl::{build_tdl, AcquisitionConfig, TdlConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let skew: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(2100.0);
    let cfg = TdlConfig::default();
    let acq = AcquisitionConfig::default();
    let tdl = build_tdl(&cfg)?;
    let table = derive_table(&run_code_density(&tdl, &acq, 1_000_000, &mut seeded(1)))?;

    let pi = PhaseInterpolatorState::new(&PiConfig::default());
    let mut ch = ChannelModel::new(skew, pi, cfg.clock_period);
    let params = AlignParams::default();
    let res = align_channel(&mut ch, &params, &tdl, &acq, &table, &mut seeded(2))?;

    println!(
        "power-up skew {skew:.1} ps, target {} ps",
        params.target_skew_ps
    );
    for (i, e) in res.error_trace.iter().enumerate() {
        println!("  step {i:>2}  error {e:>+9.3} ps");
    }
    println!(
        "converged {} after {} corrections",
        res.converged, res.iterations
    );
    println!(
        "PI code {}, {} full turns",
        res.final_pi_code,
        (ch.pi.cumulative_shift_ps() / ch.pi.ui_ps()).floor()
    );
    println!("true residual {:+.3} ps", res.final_residual_ps);
    Ok(())
}
