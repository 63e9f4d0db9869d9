//! Reference-shot drift correction.
//!
//! A plasma-free reference shot is fitted with an ordinary least-squares line. The fitted
//! line is then subtracted from later shots, either over a whole trace or one sample at a
//! time as a real-time consumer would do it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::IntegratorParams;
use crate::signal::{SignalError, SignalTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("fit window [{lo}, {hi}] s does not overlap the trace")]
    WindowOutsideTrace { lo: f64, hi: f64 },
    #[error("fit window holds {0} samples, need at least 2")]
    TooFewSamples(usize),
    #[error("drift fit must be finite")]
    NonFiniteFit,
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Least-squares drift line `intercept + slope * t` fitted over `window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub window: (f64, f64),
}

impl DriftFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }

    /// Same slope with the intercept dropped, for slope-only correction.
    pub fn without_intercept(self) -> Self {
        Self {
            intercept: 0.0,
            ..self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slope.is_finite() && self.intercept.is_finite()
    }
}

/// Fits `intercept + slope * t` to the samples of `reference` whose time falls in `window`.
///
/// Uses centered sums, so the recovered line is accurate even for long windows far from t = 0.
pub fn fit_drift_slope(
    reference: &SignalTrace,
    window: (f64, f64),
) -> Result<DriftFit, DriftError> {
    let (lo, hi) = window;
    let t_first = reference.t_start();
    let t_last = reference.time_at(reference.len().saturating_sub(1));
    if reference.is_empty() || lo.is_nan() || hi.is_nan() || lo > hi || hi < t_first || lo > t_last
    {
        return Err(DriftError::WindowOutsideTrace { lo, hi });
    }
    let (t, y): (Vec<f64>, Vec<f64>) = reference
        .times()
        .zip(reference.samples().iter().copied())
        .filter(|(t, _)| *t >= lo && *t <= hi)
        .unzip();
    let n = t.len();
    if n < 2 {
        return Err(DriftError::TooFewSamples(n));
    }
    let nf = n as f64;
    let t_mean = t.iter().sum::<f64>() / nf;
    let y_mean = y.iter().sum::<f64>() / nf;
    let (sxx, sxy) = t.iter().zip(&y).fold((0.0, 0.0), |(sxx, sxy), (ti, yi)| {
        let dt = ti - t_mean;
        (sxx + dt * dt, sxy + dt * (yi - y_mean))
    });
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let sse: f64 = t
        .iter()
        .zip(&y)
        .map(|(ti, yi)| {
            let r = yi - (intercept + slope * ti);
            r * r
        })
        .sum();
    Ok(DriftFit {
        slope,
        intercept,
        rms_residual: (sse / nf).sqrt(),
        window,
    })
}

/// Fit over the whole trace.
pub fn fit_full(reference: &SignalTrace) -> Result<DriftFit, DriftError> {
    let lo = reference.t_start();
    let hi = reference.time_at(reference.len().saturating_sub(1));
    fit_drift_slope(reference, (lo, hi))
}

/// Sample-by-sample corrector. Holds only the pre-computed fit; time is passed in by the
/// caller with each sample.
#[derive(Debug, Clone, Copy)]
pub struct CausalCorrector {
    fit: DriftFit,
}

impl CausalCorrector {
    pub fn new(fit: DriftFit) -> Self {
        Self { fit }
    }

    #[inline]
    pub fn correct_sample(&self, t: f64, v: f64) -> f64 {
        v - (self.fit.intercept + self.fit.slope * t)
    }
}

/// Subtracts the fitted drift line from `trace`.
///
/// With `causal` set, samples are pushed one at a time through a [`CausalCorrector`]; the
/// batch path applies the identical affine map, so both produce bit-identical output.
pub fn correct(
    trace: &SignalTrace,
    fit: &DriftFit,
    causal: bool,
) -> Result<SignalTrace, DriftError> {
    if !fit.is_finite() {
        return Err(DriftError::NonFiniteFit);
    }
    let samples = if causal {
        let corrector = CausalCorrector::new(*fit);
        let mut out = Vec::with_capacity(trace.len());
        for (k, &v) in trace.samples().iter().enumerate() {
            out.push(corrector.correct_sample(trace.time_at(k), v));
        }
        out
    } else {
        trace
            .times()
            .zip(trace.samples())
            .map(|(t, v)| v - (fit.intercept + fit.slope * t))
            .collect()
    };
    Ok(trace.with_samples(samples)?)
}

/// Drift figure of merit: output span scaled by RC to a 1000 s window (V*s per 1000 s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftMetric {
    /// max - min of the trace (V).
    pub span: f64,
    /// Elapsed time the span was observed over (s).
    pub window: f64,
    /// `span * RC * 1000 / window` (V*s).
    pub normalized: f64,
}

/// Span-based drift metric. Traces shorter than two samples report zero.
pub fn normalized_drift(trace: &SignalTrace, params: &IntegratorParams) -> DriftMetric {
    let span = trace.span();
    let window = trace.time_span();
    let normalized = if window > 0.0 {
        span * params.time_constant() * (1000.0 / window)
    } else {
        0.0
    };
    DriftMetric {
        span,
        window,
        normalized,
    }
}
