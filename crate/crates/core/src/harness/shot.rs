//! Scripted shots: source waveform → integrator channel → drift correction → report.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::drift::{correct, fit_drift_slope, normalized_drift, DriftFit, DriftMetric};
use crate::integrator::{compute_cmrr, simulate, CmrrReading, IntegratorParams};
use crate::signal::{
    add_noise, gen_probe_synthetic, gen_pulse_signal, gen_standard_signal, samples_spanning,
    PulseSpec, SignalTrace,
};

/// Output drift below this (V over the test window) counts as "no measurable drift".
pub const MEASURABILITY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    /// Smooth flux ramp, flat top and ramp-down; `flux_peak` in V*s.
    ProbeSynthetic {
        flux_peak: f64,
    },
    StandardSignal,
    Pulse {
        width: f64,
    },
    ZeroInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    #[default]
    None,
    /// Subtract a drift line fitted on an earlier reference shot.
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Largest acceptable output span (V).
    pub max_span: f64,
    /// Largest acceptable normalized drift (V*s per 1000 s).
    pub max_normalized: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_span: 4e-3,
            max_normalized: 200e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotConfig {
    pub duration: f64,
    pub sample_rate: f64,
    pub source: Source,
    /// Common-mode voltage on both inputs (V).
    pub common_mode: f64,
    /// Integrator preset name, see [`IntegratorParams::preset`].
    pub preset: String,
    /// Overrides the preset's CMRR when set.
    pub cmrr_db: Option<f64>,
    pub correction: CorrectionMode,
    /// RMS noise added to the acquired output (V).
    pub noise_rms: f64,
    pub seed: u64,
    /// Reference fit window (s); the whole shot when unset.
    pub fit_window: Option<(f64, f64)>,
    pub thresholds: Thresholds,
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self {
            duration: 400.0,
            sample_rate: 1000.0,
            source: Source::ZeroInput,
            common_mode: 0.0,
            preset: "fig5".into(),
            cmrr_db: None,
            correction: CorrectionMode::None,
            noise_rms: 0.0,
            seed: 0,
            fit_window: None,
            thresholds: Thresholds::default(),
        }
    }
}

impl ShotConfig {
    pub fn params(&self) -> Result<IntegratorParams, HarnessError> {
        let mut params = IntegratorParams::preset(&self.preset)?;
        if let Some(db) = self.cmrr_db {
            params = params.with_cmrr_db(db);
        }
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(HarnessError::Config(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(HarnessError::Config(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if !self.common_mode.is_finite() {
            return Err(HarnessError::Config(
                "common-mode voltage must be finite".into(),
            ));
        }
        Ok(())
    }

    fn len(&self) -> usize {
        samples_spanning(self.duration, self.sample_rate)
    }

    /// Differential input waveform for the whole shot.
    pub fn source_trace(&self) -> Result<SignalTrace, HarnessError> {
        self.validate()?;
        let rate = self.sample_rate;
        let len = self.len();
        let trace = match &self.source {
            Source::ZeroInput => SignalTrace::zeros(rate, len)?,
            Source::ProbeSynthetic { flux_peak } => {
                gen_probe_synthetic(rate, self.duration, *flux_peak)?
            }
            Source::StandardSignal => gen_standard_signal(rate)?,
            Source::Pulse { width } => gen_pulse_signal(&PulseSpec::positive(*width), rate)?,
        };
        let mut samples = trace.into_samples();
        samples.resize(len, 0.0);
        Ok(SignalTrace::new(rate, 0.0, samples)?)
    }
}

/// Drift metrics of one shot plus the pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotReport {
    pub raw: DriftMetric,
    pub corrected: Option<DriftMetric>,
    pub cmrr: Option<CmrrReading>,
    pub thresholds: Thresholds,
    pub pass: bool,
}

impl ShotReport {
    /// Computes the report from the traces alone, so it can be recomputed from exported files.
    /// The verdict is taken on the corrected trace when there is one.
    pub fn from_traces(
        raw: &SignalTrace,
        corrected: Option<&SignalTrace>,
        params: &IntegratorParams,
        thresholds: Thresholds,
    ) -> Self {
        let raw_metric = normalized_drift(raw, params);
        let corrected = corrected.map(|c| normalized_drift(c, params));
        let judged = corrected.unwrap_or(raw_metric);
        Self {
            raw: raw_metric,
            corrected,
            cmrr: None,
            thresholds,
            pass: judged.span <= thresholds.max_span
                && judged.normalized <= thresholds.max_normalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotOutput {
    pub raw: SignalTrace,
    /// Present when the shot was corrected with a reference fit.
    pub corrected: Option<SignalTrace>,
    pub report: ShotReport,
}

/// Acquires one shot and, if configured, corrects it in real time with `reference`.
pub fn run_shot(
    config: &ShotConfig,
    reference: Option<&DriftFit>,
) -> Result<ShotOutput, HarnessError> {
    let params = config.params()?;
    let fit = match (config.correction, reference) {
        (CorrectionMode::None, _) => None,
        (CorrectionMode::Reference, Some(fit)) => Some(fit),
        (CorrectionMode::Reference, None) => return Err(HarnessError::MissingReference),
    };
    let v_diff = config.source_trace()?;
    let v_cm = v_diff.with_samples(vec![config.common_mode; v_diff.len()])?;
    let mut raw = simulate(&v_diff, &v_cm, &params, &[])?;
    if config.noise_rms > 0.0 {
        raw = add_noise(&raw, config.noise_rms, config.seed)?;
    }
    let corrected = fit.map(|f| correct(&raw, f, true)).transpose()?;
    let report = ShotReport::from_traces(&raw, corrected.as_ref(), &params, config.thresholds);
    Ok(ShotOutput {
        raw,
        corrected,
        report,
    })
}

/// Runs an uncorrected shot and fits its drift line over `config.fit_window`.
pub fn fit_reference(config: &ShotConfig) -> Result<(DriftFit, ShotOutput), HarnessError> {
    let uncorrected = ShotConfig {
        correction: CorrectionMode::None,
        ..config.clone()
    };
    let shot = run_shot(&uncorrected, None)?;
    let window = config
        .fit_window
        .unwrap_or((shot.raw.t_start(), shot.raw.time_at(shot.raw.len() - 1)));
    let fit = fit_drift_slope(&shot.raw, window)?;
    Ok((fit, shot))
}

/// Span of the output drift attributable to `v_cm` over `window` seconds.
///
/// The channel is run twice with shorted differential input, once with and once without
/// the common-mode voltage, and the difference is measured, so offset drift does not
/// masquerade as common-mode leakage.
pub fn measure_common_mode_drift(
    v_cm: f64,
    window: f64,
    params: &IntegratorParams,
    rate: f64,
) -> Result<f64, HarnessError> {
    let len = samples_spanning(window, rate);
    let zeros = SignalTrace::zeros(rate, len)?;
    let cm = zeros.with_samples(vec![v_cm; len])?;
    let with_cm = simulate(&zeros, &cm, params, &[])?;
    let baseline = simulate(&zeros, &zeros, params, &[])?;
    Ok(with_cm.combine(1.0, &baseline, -1.0)?.span())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmrrTest {
    pub v_cm: f64,
    pub window: f64,
    /// Measured common-mode output drift (V).
    pub drift: f64,
    pub reading: CmrrReading,
}

/// Common-mode rejection test. Drift under [`MEASURABILITY_FLOOR`] reports
/// [`CmrrReading::BeyondMeasurable`].
pub fn cmrr_test(
    v_cm: f64,
    window: f64,
    params: &IntegratorParams,
    rate: f64,
) -> Result<CmrrTest, HarnessError> {
    if !(v_cm.is_finite() && v_cm >= 0.0) {
        return Err(HarnessError::Config(format!(
            "common-mode voltage must be >= 0, got {v_cm}"
        )));
    }
    if !(window.is_finite() && window > 0.0 && rate.is_finite() && rate > 0.0) {
        return Err(HarnessError::Config(
            "window and rate must be positive".into(),
        ));
    }
    let drift = measure_common_mode_drift(v_cm, window, params, rate)?;
    let reading = if v_cm == 0.0 || drift < MEASURABILITY_FLOOR {
        CmrrReading::BeyondMeasurable
    } else {
        compute_cmrr(v_cm, drift, window, params)?
    };
    Ok(CmrrTest {
        v_cm,
        window,
        drift,
        reading,
    })
}
