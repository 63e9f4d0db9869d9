//! Plays the bipolar calibration signal through an ideal 20 ms channel.
//!
//! Each 2.5 V, 10 ms lobe moves the output by 1.25 V, so the output steps to -1.25 V and
//! comes back to zero. Run with `cargo run --example standard_signal`.

use integrator_twin::signal::{gen_pulse_signal, PulseSpec};
use integrator_twin::{gen_standard_signal, ideal_integrate, IntegratorParams, SignalTrace};

pub fn run() -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let params = IntegratorParams::ideal();
    let rate = 1e6;
    let input = gen_standard_signal(rate)?;
    let out = ideal_integrate(&input, &params)?;

    let lobe = (0.010 * rate) as usize;
    let plateau = out.samples()[lobe];
    let last = out.last().unwrap_or(0.0);
    println!("standard signal at {rate} Hz, {} samples", input.len());
    println!("  plateau after first lobe: {plateau:+.6} V");
    println!("  final value:              {last:+.3e} V");

    // A constant input is a straight ramp: 2.5 V for 10 ms gives -1.25 V.
    let ramp = ideal_integrate(&SignalTrace::constant(100e3, 0.010, 2.5)?, &params)?;
    println!(
        "  2.5 V for 10 ms:          {:+.6} V",
        ramp.last().unwrap_or(0.0)
    );

    // The single-pulse presets, integrated without saturation.
    for width in [0.001, 0.005, 0.010] {
        let pulse = gen_pulse_signal(&PulseSpec::positive(width), 1e5)?;
        let peak = ideal_integrate(&pulse, &params)?.span();
        println!("  {:>4.0} ms pulse peak:      {peak:.4} V", width * 1e3);
    }
    Ok((plateau, last))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
