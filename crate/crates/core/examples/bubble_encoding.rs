// SPDX-License-Identifier: Apache-2.0

//! Thermometer samples with bubbles and their ones-count codes.
//!
//! ```bash
//! cargo run --example bubble_encoding
//! ```

use tdcsync::encoder::{encode_ones_count, is_clean_thermometer};
use tdcsync::rng::seeded;
use tdcsync::tdl::{acquire, AcquisitionConfig, TapDelayLine, ThermometerSample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for bits in ["1111000", "1101000", "1110100", "1011101000"] {
        let s: ThermometerSample = bits.parse()?;
        let c = encode_ones_count(&s);
        println!("{bits:<12} code {}  bubbles {}", c.code, c.bubble_count);
    }

    // A short uniform line with every acquisition disturbed.
    let tdl = TapDelayLine::from_tap_delays(vec![50.0; 16], 600.0)?;
    let acq = AcquisitionConfig {
        hit_jitter_sigma: 0.0,
        bubble_probability: 1.0,
        bubble_depth: 2,
    };
    let mut rng = seeded(3);
    println!();
    println!("hit 325 ps, ideal code {}", tdl.ideal_code(325.0));
    for _ in 0..8 {
        let s = acquire(&tdl, 325.0, &acq, &mut rng)?;
        let c = encode_ones_count(&s);
        println!(
            "{s}  code {:>2}  bubbles {}  clean {}",
            c.code,
            c.bubble_count,
            is_clean_thermometer(&s)
        );
    }
    Ok(())
}
