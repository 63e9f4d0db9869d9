//! Sampled voltage traces and the test waveforms fed into the integrators.
//!
//! Every generator returns a [`SignalTrace`]: a uniformly sampled series with an explicit
//! sample rate. Lobe boundaries snap to whole samples (`floor(width * rate)`), so generated
//! lobes are always an integer number of samples long.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Amplitude of the on-board standard signal generator (V).
pub const STANDARD_AMPLITUDE: f64 = 2.5;

/// Width of each lobe of the standard bipolar signal (s).
pub const STANDARD_LOBE_WIDTH: f64 = 0.010;

/// Lowest sample rate accepted by [`gen_standard_signal`] (100 samples per lobe).
pub const MIN_STANDARD_RATE: f64 = 10_000.0;

/// Minimum number of samples a pulse lobe must span.
pub const MIN_SAMPLES_PER_LOBE: f64 = 10.0;

// Slack for width * rate products that land a hair under an integer (0.01 * 1e5 and friends).
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("sample rate {rate} Hz too low: need at least {min} Hz")]
    Resolution { rate: f64, min: f64 },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid pulse spec: {0}")]
    InvalidPulse(&'static str),
    #[error("noise rms must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
}

/// Uniformly sampled voltage time series.
///
/// Sample `k` sits at `t_start + k / sample_rate`. All samples are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    sample_rate: f64,
    t_start: f64,
    samples: Vec<f64>,
}

impl SignalTrace {
    pub fn new(sample_rate: f64, t_start: f64, samples: Vec<f64>) -> Result<Self, SignalError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SignalError::InvalidRate(sample_rate));
        }
        if !t_start.is_finite() {
            return Err(SignalError::NonFinite(0));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self {
            sample_rate,
            t_start,
            samples,
        })
    }

    /// All-zero trace of `len` samples starting at `t = 0`.
    pub fn zeros(sample_rate: f64, len: usize) -> Result<Self, SignalError> {
        Self::new(sample_rate, 0.0, vec![0.0; len])
    }

    /// Trace of constant value, `duration * rate + 1` samples covering `[0, duration]`.
    pub fn constant(sample_rate: f64, duration: f64, value: f64) -> Result<Self, SignalError> {
        let len = samples_spanning(duration, sample_rate);
        Self::new(sample_rate, 0.0, vec![value; len])
    }

    /// Samples a function of time on `[0, duration]` inclusive.
    pub fn from_fn(
        sample_rate: f64,
        duration: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, SignalError> {
        let len = samples_spanning(duration, sample_rate);
        let samples = (0..len).map(|k| f(k as f64 / sample_rate)).collect();
        Self::new(sample_rate, 0.0, samples)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `len / sample_rate`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Elapsed time between the first and last sample.
    pub fn time_span(&self) -> f64 {
        self.samples.len().saturating_sub(1) as f64 / self.sample_rate
    }

    /// Time stamp of sample `k`. Every consumer derives time through this one expression.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t_start + k as f64 / self.sample_rate
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| self.time_at(k))
    }

    pub fn last(&self) -> Option<f64> {
        self.samples.last().copied()
    }

    /// `max - min`, or 0 for an empty trace.
    pub fn span(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    /// Area under the sample sequence treated as zero-order hold: `sum(samples) / rate`.
    pub fn area(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.sample_rate
    }

    /// New trace with the same timing and different samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self, SignalError> {
        Self::new(self.sample_rate, self.t_start, samples)
    }

    /// Appends zeros until the trace holds `len` samples. Longer traces are left as-is.
    pub fn padded_to(mut self, len: usize) -> Self {
        if self.samples.len() < len {
            self.samples.resize(len, 0.0);
        }
        self
    }

    /// Sample-wise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &SignalTrace, b: f64) -> Result<Self, SignalError> {
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| a * x + b * y)
            .collect();
        self.with_samples(samples)
    }
}

/// Number of samples covering `[0, duration]` inclusive at `rate`.
pub fn samples_spanning(duration: f64, rate: f64) -> usize {
    (duration * rate).round().max(0.0) as usize + 1
}

fn lobe_samples(width: f64, rate: f64) -> usize {
    (width * rate + SNAP_EPS).floor() as usize
}

/// Piecewise-constant pulse: one lobe per polarity entry, then one lobe width of zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub amplitude: f64,
    pub width: f64,
    pub polarity_sequence: Vec<i8>,
}

impl PulseSpec {
    pub fn new(amplitude: f64, width: f64, polarity_sequence: Vec<i8>) -> Self {
        Self {
            amplitude,
            width,
            polarity_sequence,
        }
    }

    /// The generator's second output: a single positive 2.5 V pulse of the given width.
    pub fn positive(width: f64) -> Self {
        Self::new(STANDARD_AMPLITUDE, width, vec![1])
    }

    /// +2.5 V for 10 ms immediately followed by -2.5 V for 10 ms.
    pub fn standard() -> Self {
        Self::new(STANDARD_AMPLITUDE, STANDARD_LOBE_WIDTH, vec![1, -1])
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !self.amplitude.is_finite() {
            return Err(SignalError::InvalidPulse("amplitude must be finite"));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(SignalError::InvalidPulse("width must be positive"));
        }
        if self.polarity_sequence.is_empty() {
            return Err(SignalError::InvalidPulse("empty polarity sequence"));
        }
        if self.polarity_sequence.iter().any(|&p| p != 1 && p != -1) {
            return Err(SignalError::InvalidPulse(
                "polarity entries must be +1 or -1",
            ));
        }
        Ok(())
    }
}

/// Pulse widths offered by the generator's single-pulse output: 1..=10 ms and 1 s.
pub fn pulse_width_presets() -> Vec<f64> {
    let mut widths: Vec<f64> = (1..=10).map(|ms| ms as f64 * 1e-3).collect();
    widths.push(1.0);
    widths
}

pub fn gen_pulse_signal(spec: &PulseSpec, sample_rate: f64) -> Result<SignalTrace, SignalError> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(SignalError::InvalidRate(sample_rate));
    }
    spec.validate()?;
    if sample_rate * spec.width + SNAP_EPS < MIN_SAMPLES_PER_LOBE {
        return Err(SignalError::Resolution {
            rate: sample_rate,
            min: MIN_SAMPLES_PER_LOBE / spec.width,
        });
    }
    let lobe = lobe_samples(spec.width, sample_rate);
    let mut samples = Vec::with_capacity(lobe * (spec.polarity_sequence.len() + 1));
    for &p in &spec.polarity_sequence {
        let level = spec.amplitude * f64::from(p);
        samples.extend(std::iter::repeat_n(level, lobe));
    }
    samples.extend(std::iter::repeat_n(0.0, lobe));
    SignalTrace::new(sample_rate, 0.0, samples)
}

/// The bipolar calibration signal: +2.5 V / 10 ms, -2.5 V / 10 ms, then 10 ms of zeros.
pub fn gen_standard_signal(sample_rate: f64) -> Result<SignalTrace, SignalError> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(SignalError::InvalidRate(sample_rate));
    }
    if sample_rate < MIN_STANDARD_RATE {
        return Err(SignalError::Resolution {
            rate: sample_rate,
            min: MIN_STANDARD_RATE,
        });
    }
    gen_pulse_signal(&PulseSpec::standard(), sample_rate)
}

/// Adds zero-mean white Gaussian noise of the given RMS, reproducible per `seed`.
pub fn add_noise(trace: &SignalTrace, rms: f64, seed: u64) -> Result<SignalTrace, SignalError> {
    if !(rms.is_finite() && rms >= 0.0) {
        return Err(SignalError::InvalidNoise(rms));
    }
    if rms == 0.0 {
        return Ok(trace.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, rms).map_err(|_| SignalError::InvalidNoise(rms))?;
    let samples = trace
        .samples()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    trace.with_samples(samples)
}

/// Analytic magnetic-probe voltage: the time derivative of a flux that ramps up smoothly,
/// holds a flat top, and ramps back down.
///
/// Ramp-up occupies 10-30% of the shot and ramp-down 70-90%. `flux_peak` is the flat-top
/// flux in V*s; the integral of the returned trace over the whole shot is zero.
pub fn gen_probe_synthetic(
    sample_rate: f64,
    duration: f64,
    flux_peak: f64,
) -> Result<SignalTrace, SignalError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SignalError::InvalidPulse("duration must be positive"));
    }
    let ramp = 0.2 * duration;
    let up = 0.1 * duration;
    let down = 0.7 * duration;
    // d/dt of smoothstep s(x) = 3x^2 - 2x^3 is 6x(1-x) / ramp.
    let dsmooth = |x: f64| {
        if (0.0..=1.0).contains(&x) {
            6.0 * x * (1.0 - x) / ramp
        } else {
            0.0
        }
    };
    SignalTrace::from_fn(sample_rate, duration, |t| {
        flux_peak * (dsmooth((t - up) / ramp) - dsmooth((t - down) / ramp))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_signal_layout_at_100khz() {
        let trace = gen_standard_signal(100_000.0).unwrap();
        let s = trace.samples();
        assert_eq!(s.iter().filter(|v| **v != 0.0).count(), 2000);
        assert!(s[..1000].iter().all(|&v| v == 2.5));
        assert!(s[1000..2000].iter().all(|&v| v == -2.5));
        assert!(s[2000..].iter().all(|&v| v == 0.0));
        let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(peak, 2.5);
    }

    #[test]
    fn standard_signal_has_zero_area() {
        for rate in [10_000.0, 44_100.0, 100_000.0, 123_457.0, 1e6] {
            let trace = gen_standard_signal(rate).unwrap();
            assert_eq!(trace.area(), 0.0, "rate {rate}");
        }
    }

    #[test]
    fn standard_signal_rejects_coarse_rate() {
        assert!(matches!(
            gen_standard_signal(9_999.0),
            Err(SignalError::Resolution { .. })
        ));
        assert!(matches!(
            gen_standard_signal(0.0),
            Err(SignalError::InvalidRate(_))
        ));
    }

    #[test]
    fn one_second_pulse_at_1khz() {
        let trace = gen_pulse_signal(&PulseSpec::positive(1.0), 1000.0).unwrap();
        assert_eq!(trace.len(), 2000);
        assert!(trace.samples()[..1000].iter().all(|&v| v == 2.5));
        assert!(trace.samples()[1000..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_amplitude_pulse_is_all_zero() {
        let spec = PulseSpec::new(0.0, 0.005, vec![1]);
        let trace = gen_pulse_signal(&spec, 50_000.0).unwrap();
        assert!(trace.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bipolar_pulse_spec_matches_standard_signal() {
        let spec = PulseSpec::new(2.5, 0.010, vec![1, -1]);
        assert_eq!(
            gen_pulse_signal(&spec, 100_000.0).unwrap(),
            gen_standard_signal(100_000.0).unwrap()
        );
    }

    #[test]
    fn pulse_rejects_bad_specs() {
        let rate = 1000.0;
        let bad = [
            PulseSpec::new(f64::NAN, 1.0, vec![1]),
            PulseSpec::new(f64::INFINITY, 1.0, vec![1]),
            PulseSpec::new(1.0, 0.0, vec![1]),
            PulseSpec::new(1.0, 1.0, vec![]),
            PulseSpec::new(1.0, 1.0, vec![2]),
        ];
        for spec in bad {
            assert!(matches!(
                gen_pulse_signal(&spec, rate),
                Err(SignalError::InvalidPulse(_))
            ));
        }
        // 5 ms at 1 kHz is only 5 samples per lobe.
        assert!(matches!(
            gen_pulse_signal(&PulseSpec::positive(0.005), rate),
            Err(SignalError::Resolution { .. })
        ));
    }

    #[test]
    fn pulse_presets_cover_ms_range_and_one_second() {
        let widths = pulse_width_presets();
        assert_eq!(widths.len(), 11);
        assert_eq!(widths[0], 0.001);
        assert_eq!(widths[10], 1.0);
    }

    #[test]
    fn generator_durations_honor_rate() {
        for rate in [10_000.0, 33_333.0, 100_000.0] {
            let trace = gen_standard_signal(rate).unwrap();
            assert!((trace.duration() - 0.030).abs() <= 3.0 / rate);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let trace = gen_standard_signal(10_000.0).unwrap();
        assert_eq!(add_noise(&trace, 0.0, 9).unwrap(), trace);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let trace = SignalTrace::zeros(1000.0, 5000).unwrap();
        let a = add_noise(&trace, 1e-3, 42).unwrap();
        let b = add_noise(&trace, 1e-3, 42).unwrap();
        let c = add_noise(&trace, 1e-3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_rms_and_mean_match_request() {
        let n = 1_000_000;
        let trace = SignalTrace::new(1e6, 0.0, vec![0.25; n]).unwrap();
        let noisy = add_noise(&trace, 1e-3, 7).unwrap();
        let diffs: Vec<f64> = noisy
            .samples()
            .iter()
            .zip(trace.samples())
            .map(|(a, b)| a - b)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt();
        assert!((rms - 1e-3).abs() < 0.05e-3, "rms {rms}");
        // Standard error of the mean is 1 mV / 1000.
        assert!(mean.abs() < 5e-6, "mean {mean}");
    }

    #[test]
    fn noise_rejects_negative_rms() {
        let trace = SignalTrace::zeros(1000.0, 10).unwrap();
        assert!(add_noise(&trace, -1.0, 0).is_err());
        assert!(add_noise(&trace, f64::NAN, 0).is_err());
    }

    #[test]
    fn trace_rejects_non_finite_samples() {
        assert_eq!(
            SignalTrace::new(10.0, 0.0, vec![0.0, f64::NAN]),
            Err(SignalError::NonFinite(1))
        );
        assert!(SignalTrace::new(-1.0, 0.0, vec![]).is_err());
    }

    #[test]
    fn probe_synthetic_returns_to_zero_flux() {
        let trace = gen_probe_synthetic(1000.0, 10.0, 0.04).unwrap();
        // Rectangle-rule integral of the derivative.
        let flux: f64 = trace.area();
        assert!(flux.abs() < 1e-6, "flux {flux}");
        let peak_flux: f64 = trace.samples()[..5000].iter().sum::<f64>() / 1000.0;
        assert!((peak_flux - 0.04).abs() < 1e-4, "flat top {peak_flux}");
    }
}
