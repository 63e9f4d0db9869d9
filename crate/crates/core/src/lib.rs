//! Software twin of a differential analog integrator system for magnetic diagnostics.
//!
//! The crate is organised along the signal chain:
//!
//! * [`signal`]: sampled traces and the calibration waveforms of the on-board generator.
//! * [`integrator`]: one difference-integrator channel with offset drift, finite CMRR,
//!   saturation and integrate/hold/reset modes.
//! * [`drift`]: reference-shot least-squares drift fitting and real-time correction.
//! * [`controller`]: the eight-channel controller, its line protocol, parameter store and
//!   TCP service.
//! * [`harness`]: shot runner, CSV trace export and protocol client used by the CLI.
//!
//! Runnable walk-throughs for each part live in `examples/` (`cargo run --example <name>`).

pub mod controller;
pub mod drift;
pub mod harness;
pub mod integrator;
pub mod signal;

pub use drift::{correct, fit_drift_slope, normalized_drift, DriftFit, DriftMetric};
pub use integrator::{
    common_mode_drift_rate, compute_cmrr, ideal_integrate, simulate, CmrrReading, IntegratorParams,
};
pub use signal::{add_noise, gen_pulse_signal, gen_standard_signal, PulseSpec, SignalTrace};
