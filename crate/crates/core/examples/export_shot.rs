//! Runs a synthetic plasma shot, exports it to CSV and recomputes the report from the file.
//!
//! Run with `cargo run --example export_shot -- [output.csv]`.

use integrator_twin::harness::{import_trace, run_shot, ShotConfig, ShotReport, Source};
use integrator_twin::ideal_integrate;
use integrator_twin::signal::gen_probe_synthetic;

pub fn run(path: &std::path::Path) -> Result<bool, Box<dyn std::error::Error>> {
    let cfg = ShotConfig {
        duration: 20.0,
        sample_rate: 1000.0,
        source: Source::ProbeSynthetic { flux_peak: 0.05 },
        preset: "datasheet".into(),
        ..ShotConfig::default()
    };
    let shot = run_shot(&cfg, None)?;
    integrator_twin::harness::export_trace(&shot.raw, path)?;
    println!("wrote {} samples to {}", shot.raw.len(), path.display());

    // The ideal response is -flux/RC at the flat top.
    let ideal = ideal_integrate(
        &gen_probe_synthetic(cfg.sample_rate, cfg.duration, 0.05)?,
        &cfg.params()?,
    )?;
    let mid = shot.raw.len() / 2;
    println!(
        "flat top: simulated {:+.4} V, ideal {:+.4} V",
        shot.raw.samples()[mid],
        ideal.samples()[mid]
    );

    let back = import_trace(path)?;
    let report = ShotReport::from_traces(&back, None, &cfg.params()?, cfg.thresholds);
    let identical = back == shot.raw && report == shot.report;
    println!("re-imported trace and report identical: {identical}");
    Ok(identical)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("integrator-twin-shot.csv"));
    run(&path).map(|_| ())
}
