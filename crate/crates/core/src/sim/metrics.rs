//! Tracking metrics over holds of a piecewise-constant reference.
//!
//! A hold is a maximal run of samples with the same reference. Its step is
//! measured from the previous reference (from the initial output for the
//! first hold).
//!
//! * overshoot: largest excursion past the setpoint in the step direction,
//!   maximized over holds;
//! * rise time: 10 % to 90 % of the step, averaged over holds that reach 90 %;
//! * steady-state error: mean `|y − r|` over the last 20 % of each hold,
//!   averaged over holds;
//! * oscillation amplitude: half peak-to-peak of `y − r` after the output
//!   enters a ±5 % band around the setpoint and stays there for 100 ms,
//!   maximized over holds. Holds without a step use the whole hold.
//!
//! Metrics are NaN when the phase never occurs.

use serde::{Deserialize, Serialize};

use super::SimTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overshoot: f64,
    pub rise_time: f64,
    pub steady_state_error: f64,
    pub oscillation_amplitude: f64,
    pub samples: usize,
    pub holds: usize,
}

/// Settling band relative to the step size.
pub const SETTLE_BAND: f64 = 0.05;
/// Time the output must stay inside the band (s).
pub const SETTLE_HOLD: f64 = 0.1;

pub fn segments(trace: &SimTrace) -> Vec<Segment> {
    let rows = &trace.rows;
    let mut out = Vec::new();
    let mut start = 0;
    let mut from = rows.first().map_or(0.0, |r| r.y);
    for k in 1..=rows.len() {
        if k == rows.len() || rows[k].r != rows[start].r {
            out.push(Segment {
                start,
                end: k,
                from,
                to: rows[start].r,
            });
            if k < rows.len() {
                from = rows[start].r;
                start = k;
            }
        }
    }
    out
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() {
        b
    } else if b.is_nan() {
        a
    } else {
        a.max(b)
    }
}

pub fn measure(trace: &SimTrace) -> Result<Metrics> {
    if trace.rows.len() < 10 {
        return Err(Error::Invalid(format!(
            "trace too short for metrics ({} samples)",
            trace.rows.len()
        )));
    }
    let ts = trace.ts;
    let rows = &trace.rows;
    let segs = segments(trace);
    let hold_n = (SETTLE_HOLD / ts).round() as usize;
    let mut overshoot = f64::NAN;
    let mut rises = Vec::new();
    let mut ss = Vec::new();
    let mut osc = f64::NAN;
    for s in &segs {
        let step = s.to - s.from;
        let e: Vec<f64> = rows[s.start..s.end].iter().map(|r| r.y - r.r).collect();
        let len = e.len();
        let tail = ((len as f64) * 0.2).ceil().max(1.0) as usize;
        ss.push(e[len - tail..].iter().map(|x| x.abs()).sum::<f64>() / tail as f64);

        let window_start = if step.abs() <= 1e-12 {
            Some(0)
        } else {
            let dir = step.signum();
            let over = e.iter().map(|x| x * dir).fold(0.0, f64::max);
            overshoot = nan_max(overshoot, over);
            let frac = |y: f64| (y - s.from) / step;
            let ys = rows[s.start..s.end].iter().map(|r| r.y);
            let i10 = ys.clone().position(|y| frac(y) >= 0.1);
            let i90 = ys.clone().position(|y| frac(y) >= 0.9);
            if let (Some(a), Some(b)) = (i10, i90) {
                rises.push((b - a) as f64 * ts);
            }
            let band = SETTLE_BAND * step.abs();
            (0..len).find(|&i| i + hold_n <= len && e[i..i + hold_n].iter().all(|x| x.abs() <= band))
        };
        if let Some(w) = window_start {
            let win = &e[w..];
            let hi = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = win.iter().copied().fold(f64::INFINITY, f64::min);
            osc = nan_max(osc, 0.5 * (hi - lo));
        }
    }
    let rise_time = if rises.is_empty() {
        f64::NAN
    } else {
        rises.iter().sum::<f64>() / rises.len() as f64
    };
    Ok(Metrics {
        overshoot,
        rise_time,
        steady_state_error: ss.iter().sum::<f64>() / ss.len() as f64,
        oscillation_amplitude: osc,
        samples: rows.len(),
        holds: segs.len(),
    })
}

impl Metrics {
    /// `key = value` lines; floats with nine decimals, `nan` for missing phases.
    pub fn to_text(&self) -> String {
        let f = |x: f64| {
            if x.is_nan() {
                "nan".to_string()
            } else {
                format!("{x:.9}")
            }
        };
        format!(
            "overshoot = {}\nrise_time = {}\nsteady_state_error = {}\noscillation_amplitude = {}\nsamples = {}\nholds = {}\n",
            f(self.overshoot),
            f(self.rise_time),
            f(self.steady_state_error),
            f(self.oscillation_amplitude),
            self.samples,
            self.holds
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TraceRow;

    fn trace(r: &[f64], y: &[f64]) -> SimTrace {
        SimTrace {
            ts: 1e-3,
            rows: r
                .iter()
                .zip(y)
                .enumerate()
                .map(|(k, (&r, &y))| TraceRow {
                    t: k as f64 * 1e-3,
                    r,
                    y,
                    v: 0.0,
                    u: 0.0,
                    region: 3,
                    status: "ok".into(),
                })
                .collect(),
            fault: None,
            config_hash: String::new(),
        }
    }

    #[test]
    fn perfect_tracking_is_all_zero() {
        let r: Vec<f64> = (0..1000).map(|k| if (k / 250) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let m = measure(&trace(&r, &r)).unwrap();
        assert_eq!(m.overshoot, 0.0);
        assert_eq!(m.rise_time, 0.0);
        assert_eq!(m.steady_state_error, 0.0);
        assert_eq!(m.oscillation_amplitude, 0.0);
        assert_eq!(m.holds, 4);
    }

    #[test]
    fn sustained_sinusoid_amplitude() {
        // Period of 20 samples puts samples exactly on the peaks.
        let n = 600;
        let r = vec![2.0; n];
        let mut y: Vec<f64> = (0..n)
            .map(|k| 2.0 + 0.05 * (2.0 * std::f64::consts::PI * k as f64 / 20.0).sin())
            .collect();
        y[0] = 0.0;
        let mut t = trace(&r, &y);
        t.rows[0].r = 2.0;
        let m = measure(&t).unwrap();
        assert!((m.oscillation_amplitude - 0.05).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn known_overshoot() {
        let n = 400;
        let r = vec![1.0; n];
        let y: Vec<f64> = (0..n)
            .map(|k| match k {
                0 => 0.0,
                1..=49 => k as f64 / 50.0 * 1.05,
                50..=99 => 1.05 - (k - 50) as f64 / 50.0 * 0.05,
                _ => 1.0,
            })
            .collect();
        let m = measure(&trace(&r, &y)).unwrap();
        assert!((m.overshoot - 0.05).abs() < 1e-12);
    }

    #[test]
    fn short_trace_rejected() {
        assert!(measure(&trace(&[1.0; 3], &[0.0; 3])).is_err());
    }
}
