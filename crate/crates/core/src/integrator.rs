//! Behavioral model of one difference-integrator channel.
//!
//! The differential input is integrated as `V_o = -(1/RC) * integral(V_i dt)` with the
//! trapezoidal rule. On top of that the channel accumulates three drift terms:
//!
//! * input offset voltage, contributing `V_os / RC` V/s,
//! * input offset current, contributing `I_os / C` V/s,
//! * common-mode leakage through a finite CMRR, `V_cm / (RC * 10^(CMRR/20))` V/s.
//!
//! The output is hard-clamped at the supply rails. A channel is either integrating or holding;
//! a reset zeroes the accumulator and resumes integration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{SignalError, SignalTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("invalid integrator parameters: {0}")]
    InvalidParams(&'static str),
    #[error("differential and common-mode traces differ in shape")]
    ShapeMismatch,
    #[error("mode schedule must be in ascending time order")]
    UnorderedSchedule,
    #[error("cmrr inputs must be positive and finite")]
    InvalidCmrrInput,
    #[error("unknown integrator preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Physical parameters of one channel. `cmrr_db = +inf` is the ideal difference integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorParams {
    pub resistance: f64,
    pub capacitance: f64,
    pub offset_voltage: f64,
    pub offset_current: f64,
    #[serde(with = "cmrr_serde")]
    pub cmrr_db: f64,
    pub rail_voltage: f64,
}

pub const DEFAULT_RESISTANCE: f64 = 20e3;
pub const DEFAULT_CAPACITANCE: f64 = 1e-6;
pub const DEFAULT_RAIL: f64 = 10.0;
pub const DEFAULT_CMRR_DB: f64 = 125.0;

/// Names accepted by [`IntegratorParams::preset`].
pub const PRESET_NAMES: [&str; 3] = ["ideal", "datasheet", "fig5"];

impl Default for IntegratorParams {
    fn default() -> Self {
        Self::ideal()
    }
}

impl IntegratorParams {
    /// 20 ms channel (20 kOhm, 1 uF) with no offsets and perfect common-mode rejection.
    pub fn ideal() -> Self {
        Self {
            resistance: DEFAULT_RESISTANCE,
            capacitance: DEFAULT_CAPACITANCE,
            offset_voltage: 0.0,
            offset_current: 0.0,
            cmrr_db: f64::INFINITY,
            rail_voltage: DEFAULT_RAIL,
        }
    }

    /// Chopper op-amp typicals: 0.5 uV offset voltage, 20 pA offset current.
    pub fn datasheet() -> Self {
        Self {
            offset_voltage: 0.5e-6,
            offset_current: 20e-12,
            cmrr_db: DEFAULT_CMRR_DB,
            ..Self::ideal()
        }
    }

    /// Offsets calibrated to a raw drift of 50 mV over 400 s (125 uV/s) at RC = 20 ms.
    pub fn fig5() -> Self {
        Self {
            offset_voltage: 2.0e-6,
            offset_current: 25e-12,
            cmrr_db: DEFAULT_CMRR_DB,
            ..Self::ideal()
        }
    }

    pub fn preset(name: &str) -> Result<Self, IntegratorError> {
        match name {
            "ideal" => Ok(Self::ideal()),
            "datasheet" => Ok(Self::datasheet()),
            "fig5" => Ok(Self::fig5()),
            other => Err(IntegratorError::UnknownPreset(other.to_string())),
        }
    }

    pub fn with_cmrr_db(self, cmrr_db: f64) -> Self {
        Self { cmrr_db, ..self }
    }

    pub fn without_offsets(self) -> Self {
        Self {
            offset_voltage: 0.0,
            offset_current: 0.0,
            ..self
        }
    }

    pub fn time_constant(&self) -> f64 {
        self.resistance * self.capacitance
    }

    pub fn is_ideal_cmrr(&self) -> bool {
        self.cmrr_db == f64::INFINITY
    }

    /// Output drift rate (V/s) from the input offsets alone.
    pub fn offset_drift_rate(&self) -> f64 {
        self.offset_voltage / self.time_constant() + self.offset_current / self.capacitance
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.resistance.is_finite() && self.resistance > 0.0) {
            return Err(IntegratorError::InvalidParams(
                "resistance must be positive",
            ));
        }
        if !(self.capacitance.is_finite() && self.capacitance > 0.0) {
            return Err(IntegratorError::InvalidParams(
                "capacitance must be positive",
            ));
        }
        if !(self.rail_voltage.is_finite() && self.rail_voltage > 0.0) {
            return Err(IntegratorError::InvalidParams(
                "rail voltage must be positive",
            ));
        }
        if !(self.offset_voltage.is_finite() && self.offset_current.is_finite()) {
            return Err(IntegratorError::InvalidParams("offsets must be finite"));
        }
        if self.cmrr_db.is_nan() || self.cmrr_db < 0.0 {
            return Err(IntegratorError::InvalidParams("cmrr must be >= 0 dB"));
        }
        Ok(())
    }
}

mod cmrr_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Db(f64),
        Tag(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            Repr::Tag("ideal".into()).serialize(s)
        } else {
            Repr::Db(*v).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Db(v) => Ok(v),
            Repr::Tag(t) if t == "ideal" => Ok(f64::INFINITY),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected dB value or \"ideal\", got {t:?}"
            ))),
        }
    }
}

/// Trapezoidal increment of `-(1/RC) * integral(v dt)` between two adjacent samples.
#[inline]
fn diff_increment(prev: f64, cur: f64, dt: f64, rc: f64) -> f64 {
    -(prev + cur) * 0.5 * dt / rc
}

/// Noise-free integration of `v_i` with no drift and no saturation.
pub fn ideal_integrate(
    v_i: &SignalTrace,
    params: &IntegratorParams,
) -> Result<SignalTrace, IntegratorError> {
    params.validate()?;
    let rc = params.time_constant();
    let dt = v_i.dt();
    let s = v_i.samples();
    let mut out = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    for (k, &v) in s.iter().enumerate() {
        if k > 0 {
            acc += diff_increment(s[k - 1], v, dt, rc);
        }
        out.push(acc);
    }
    Ok(v_i.with_samples(out)?)
}

/// Output drift rate (V/s) caused by a common-mode voltage leaking through a finite CMRR.
pub fn common_mode_drift_rate(v_cm: f64, params: &IntegratorParams) -> f64 {
    if params.is_ideal_cmrr() {
        return 0.0;
    }
    v_cm / (params.time_constant() * 10f64.powf(params.cmrr_db / 20.0))
}

/// Result of a CMRR measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmrrReading {
    Db(f64),
    /// No output drift was observed, so the rejection exceeds what the window can resolve.
    BeyondMeasurable,
}

impl CmrrReading {
    pub fn db(&self) -> Option<f64> {
        match self {
            CmrrReading::Db(v) => Some(*v),
            CmrrReading::BeyondMeasurable => None,
        }
    }
}

impl std::fmt::Display for CmrrReading {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmrrReading::Db(v) => write!(f, "{v:.1} dB"),
            CmrrReading::BeyondMeasurable => f.write_str("beyond measurable"),
        }
    }
}

/// CMRR from a common-mode drift test.
///
/// The observed `output_drift` over `window` seconds is referred back to the input
/// (`output_drift * RC / window`) and compared against the applied common-mode voltage:
/// `20 * log10(v_cm / (output_drift * RC / window))`.
pub fn compute_cmrr(
    v_cm: f64,
    output_drift: f64,
    window: f64,
    params: &IntegratorParams,
) -> Result<CmrrReading, IntegratorError> {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(v_cm) || !positive(window) || !output_drift.is_finite() || output_drift < 0.0 {
        return Err(IntegratorError::InvalidCmrrInput);
    }
    params.validate()?;
    if output_drift == 0.0 {
        return Ok(CmrrReading::BeyondMeasurable);
    }
    let equivalent_input = output_drift * params.time_constant() / window;
    Ok(CmrrReading::Db(20.0 * (v_cm / equivalent_input).log10()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    #[default]
    Integrate,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntegratorState {
    pub accumulated_output: f64,
    pub mode: Mode,
}

impl IntegratorState {
    pub fn reset(&mut self) {
        self.accumulated_output = 0.0;
        self.mode = Mode::Integrate;
    }
}

/// Mode change applied at a point in time during [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeAction {
    Integrate,
    Hold,
    /// Zero the accumulator and resume integrating.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEvent {
    pub time: f64,
    pub action: ModeAction,
}

impl ModeEvent {
    pub fn new(time: f64, action: ModeAction) -> Self {
        Self { time, action }
    }
}

/// Streaming channel: feed one (differential, common-mode) sample pair at a time.
#[derive(Debug, Clone)]
pub struct IntegratorChannel {
    params: IntegratorParams,
    state: IntegratorState,
    // Previous (differential input, common-mode drift rate); None before the first sample.
    prev: Option<(f64, f64)>,
}

impl IntegratorChannel {
    pub fn new(params: IntegratorParams) -> Result<Self, IntegratorError> {
        params.validate()?;
        Ok(Self {
            params,
            state: IntegratorState::default(),
            prev: None,
        })
    }

    pub fn params(&self) -> &IntegratorParams {
        &self.params
    }

    pub fn state(&self) -> IntegratorState {
        self.state
    }

    pub fn output(&self) -> f64 {
        self.state.accumulated_output
    }

    pub fn mode(&self) -> Mode {
        self.state.mode
    }

    pub fn apply(&mut self, action: ModeAction) {
        match action {
            ModeAction::Integrate => self.state.mode = Mode::Integrate,
            ModeAction::Hold => self.state.mode = Mode::Hold,
            ModeAction::Reset => self.state.reset(),
        }
    }

    /// Forgets the previous input sample, so the next step starts a fresh trapezoid.
    pub fn disconnect_input(&mut self) {
        self.prev = None;
    }

    /// Advances by one sample and returns the new output.
    pub fn step(&mut self, v_diff: f64, v_cm: f64, dt: f64) -> f64 {
        let cm_rate = common_mode_drift_rate(v_cm, &self.params);
        if let (Some((prev_diff, prev_cm_rate)), Mode::Integrate) = (self.prev, self.state.mode) {
            let rc = self.params.time_constant();
            let drift = (self.params.offset_drift_rate() + 0.5 * (prev_cm_rate + cm_rate)) * dt;
            let rail = self.params.rail_voltage;
            let next =
                self.state.accumulated_output + diff_increment(prev_diff, v_diff, dt, rc) + drift;
            self.state.accumulated_output = next.clamp(-rail, rail);
        }
        self.prev = Some((v_diff, cm_rate));
        self.state.accumulated_output
    }

    /// Runs a constant input for `duration` seconds at `rate` and returns the final output.
    pub fn run_constant(&mut self, v_diff: f64, v_cm: f64, duration: f64, rate: f64) -> f64 {
        let steps = (duration * rate).round() as usize;
        let dt = 1.0 / rate;
        if self.prev.is_none() {
            self.step(v_diff, v_cm, dt);
        }
        for _ in 0..steps {
            self.step(v_diff, v_cm, dt);
        }
        self.output()
    }
}

/// Simulates one channel over a whole shot, starting from a zeroed accumulator.
///
/// Each sample first integrates the interval ending at that sample, then applies every
/// scheduled event whose time has been reached, then records the output. A hold scheduled
/// at `t` therefore freezes the value reached at `t`, and a reset at `t` records 0 at `t`.
pub fn simulate(
    v_diff: &SignalTrace,
    v_cm: &SignalTrace,
    params: &IntegratorParams,
    mode_schedule: &[ModeEvent],
) -> Result<SignalTrace, IntegratorError> {
    if v_diff.len() != v_cm.len()
        || v_diff.sample_rate() != v_cm.sample_rate()
        || v_diff.t_start() != v_cm.t_start()
    {
        return Err(IntegratorError::ShapeMismatch);
    }
    if mode_schedule.iter().any(|e| e.time.is_nan())
        || mode_schedule.windows(2).any(|w| w[0].time > w[1].time)
    {
        return Err(IntegratorError::UnorderedSchedule);
    }
    let mut channel = IntegratorChannel::new(*params)?;
    let dt = v_diff.dt();
    let slack = 1e-6 * dt;
    let mut events = mode_schedule.iter().peekable();
    let mut out = Vec::with_capacity(v_diff.len());
    for (k, (&vd, &vc)) in v_diff.samples().iter().zip(v_cm.samples()).enumerate() {
        channel.step(vd, vc, dt);
        let t = v_diff.time_at(k);
        while let Some(ev) = events.next_if(|ev| ev.time <= t + slack) {
            channel.apply(ev.action);
        }
        out.push(channel.output());
    }
    Ok(v_diff.with_samples(out)?)
}
