//! Two-column CSV trace files: header `t_s,v_V`, one row per sample.
//!
//! Values are written with Rust's shortest round-trip float formatting, so importing a file
//! reproduces every sample bit for bit. The sample rate is recovered from the time column.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use super::HarnessError;
use crate::signal::SignalTrace;

pub const CSV_HEADER: &str = "t_s,v_V";

const RATE_SEARCH_ULPS: usize = 64;

/// Streams `trace` to `w` row by row.
pub fn write_trace<W: Write>(trace: &SignalTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for (t, v) in trace.times().zip(trace.samples()) {
        writeln!(w, "{t},{v}")?;
    }
    w.flush()
}

pub fn export_trace(trace: &SignalTrace, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_trace(trace, BufWriter::new(file)).map_err(|e| HarnessError::io(path, e))
}

pub fn import_trace(path: impl AsRef<Path>) -> Result<SignalTrace, HarnessError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_trace(BufReader::new(file), path)
}

/// Parses a trace; `origin` only labels error messages.
pub fn read_trace<R: BufRead>(r: R, origin: &Path) -> Result<SignalTrace, HarnessError> {
    let csv_err = |line: usize, msg: String| HarnessError::Csv {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == CSV_HEADER => {}
        Some(Ok(h)) => {
            return Err(csv_err(
                1,
                format!("expected header {CSV_HEADER:?}, got {h:?}"),
            ))
        }
        Some(Err(e)) => return Err(HarnessError::io(origin, e)),
        None => return Err(csv_err(1, "empty file".into())),
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| HarnessError::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| csv_err(lineno, "expected two columns".into()))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| csv_err(lineno, format!("{s:?}: {e}")))
        };
        times.push(parse(t)?);
        values.push(parse(v)?);
    }
    if times.len() < 2 {
        return Err(csv_err(
            0,
            "need at least two rows to recover the sample rate".into(),
        ));
    }
    let rate = recover_rate(&times)
        .ok_or_else(|| csv_err(0, "time column is not uniformly increasing".into()))?;
    SignalTrace::new(rate, times[0], values).map_err(|e| csv_err(0, e.to_string()))
}

/// Finds the sample rate that regenerates the time column exactly: the nearest integer rate
/// first, then the floats within a few ulps of the estimate. Recovery is exact for integer
/// rates and for any rate when the trace starts at t = 0; otherwise the closest regenerating
/// (or, failing that, estimated) rate is used.
fn recover_rate(times: &[f64]) -> Option<f64> {
    let n = times.len();
    let t0 = times[0];
    let estimate = (n - 1) as f64 / (times[n - 1] - t0);
    if !(estimate.is_finite() && estimate > 0.0) {
        return None;
    }
    let regenerates = |rate: f64| {
        times
            .iter()
            .enumerate()
            .all(|(k, &t)| t0 + k as f64 / rate == t)
    };
    let rounded = estimate.round();
    if rounded > 0.0 && regenerates(rounded) {
        return Some(rounded);
    }
    let (mut up, mut down) = (estimate, estimate);
    if regenerates(estimate) {
        return Some(estimate);
    }
    for _ in 0..RATE_SEARCH_ULPS {
        up = up.next_up();
        down = down.next_down();
        if let Some(rate) = [up, down].into_iter().find(|&r| regenerates(r)) {
            return Some(rate);
        }
    }
    let tolerance = 1e-6 / estimate;
    let uniform = times
        .iter()
        .enumerate()
        .all(|(k, &t)| (t0 + k as f64 / estimate - t).abs() <= tolerance.max(1e-9 * t.abs()));
    if !uniform {
        return None;
    }
    warn!("time column does not regenerate exactly; using estimated rate {estimate} Hz");
    Some(estimate)
}
