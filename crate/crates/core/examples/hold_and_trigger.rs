//! Integrate, hold and reset on a single channel, then the same through the controller's
//! hardware trigger line. Run with `cargo run --example hold_and_trigger`.

use integrator_twin::controller::{Controller, ControllerConfig, TriggerEdge};
use integrator_twin::integrator::{ModeAction, ModeEvent};
use integrator_twin::{simulate, IntegratorParams, SignalTrace};

pub fn run() -> Result<Vec<f64>, Box<dyn std::error::Error>> {
    let params = IntegratorParams::ideal();
    let rate = 1000.0;
    let v_diff = SignalTrace::constant(rate, 0.1, 0.1)?;
    let v_cm = v_diff.with_samples(vec![0.0; v_diff.len()])?;
    let schedule = [
        ModeEvent {
            time: 0.02,
            action: ModeAction::Hold,
        },
        ModeEvent {
            time: 0.05,
            action: ModeAction::Integrate,
        },
        ModeEvent {
            time: 0.08,
            action: ModeAction::Reset,
        },
    ];
    let out = simulate(&v_diff, &v_cm, &params, &schedule)?;
    let probes: Vec<f64> = [0.02, 0.04, 0.05, 0.07, 0.09]
        .iter()
        .map(|t| out.samples()[(t * rate) as usize])
        .collect();
    for (t, v) in [0.02, 0.04, 0.05, 0.07, 0.09].iter().zip(&probes) {
        println!("t = {t:.2} s  v_out = {v:+.4} V");
    }

    let mut c = Controller::in_memory(ControllerConfig {
        channel_params: IntegratorParams::fig5(),
        ..ControllerConfig::default()
    })?;
    c.hardware_trigger(TriggerEdge::Start)?;
    c.advance(10.0, 100.0);
    c.hardware_trigger(TriggerEdge::Stop)?;
    let held = c.bank().outputs()[0];
    c.advance(10.0, 100.0);
    println!(
        "fig5 drift after 10 s: {:.3} mV, still {:.3} mV after 10 s of hold",
        held * 1e3,
        c.bank().outputs()[0] * 1e3
    );
    Ok(probes)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
