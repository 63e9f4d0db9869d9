//! Reference-shot drift correction.
//!
//! A shot with no plasma records only the integrator drift; its fitted line is subtracted
//! sample by sample from the next shot. Run with `cargo run --example drift_correction`.

use integrator_twin::harness::{
    fit_reference, run_shot, CorrectionMode, ShotConfig, Source, Thresholds,
};

pub fn run() -> Result<bool, Box<dyn std::error::Error>> {
    let reference = ShotConfig {
        sample_rate: 100.0,
        ..ShotConfig::default()
    };
    let (fit, ref_shot) = fit_reference(&reference)?;
    println!(
        "reference: {:.1} mV raw drift over {} s, fitted slope {:.3} uV/s",
        ref_shot.report.raw.span * 1e3,
        ref_shot.raw.time_span(),
        fit.slope * 1e6
    );

    let shot = ShotConfig {
        source: Source::ProbeSynthetic { flux_peak: 0.0 },
        correction: CorrectionMode::Reference,
        noise_rms: 0.5e-3,
        seed: 7,
        // Peak-to-peak noise alone is about 4 mV, so the limits are widened.
        thresholds: Thresholds {
            max_span: 6e-3,
            max_normalized: 300e-6,
        },
        ..reference
    };
    let out = run_shot(&shot, Some(&fit))?;
    let corrected = out.report.corrected.expect("correction was requested");
    println!(
        "raw:       span {:7.3} mV, normalized {:9.2} uV*s",
        out.report.raw.span * 1e3,
        out.report.raw.normalized * 1e6
    );
    println!(
        "corrected: span {:7.3} mV, normalized {:9.2} uV*s",
        corrected.span * 1e3,
        corrected.normalized * 1e6
    );
    println!(
        "verdict on corrected trace: {}",
        if out.report.pass { "pass" } else { "fail" }
    );
    Ok(corrected.normalized < out.report.raw.normalized)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
