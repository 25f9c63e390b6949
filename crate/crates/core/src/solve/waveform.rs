//! Piecewise-linear source waveforms.

use super::SolveError;

/// A piecewise-linear voltage waveform: sorted `(time, volts)` breakpoints
/// with linear interpolation between them and constant extension beyond the
/// first and last points.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwl {
    points: Vec<(f64, f64)>,
}

impl Pwl {
    /// Builds a waveform from breakpoints, which must be finite and have
    /// strictly increasing times.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SolveError> {
        if points.is_empty() {
            return Err(SolveError::InvalidWaveform {
                message: "waveform needs at least one breakpoint".into(),
            });
        }
        for (i, (t, v)) in points.iter().enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(SolveError::InvalidWaveform {
                    message: format!("breakpoint {i} is not finite: ({t}, {v})"),
                });
            }
            if i > 0 && *t <= points[i - 1].0 {
                return Err(SolveError::InvalidWaveform {
                    message: format!(
                        "breakpoint times must strictly increase ({} then {t})",
                        points[i - 1].0
                    ),
                });
            }
        }
        Ok(Self { points })
    }

    /// A waveform that holds `volts` forever.
    pub fn constant(volts: f64) -> Self {
        Self { points: vec![(0.0, volts)] }
    }

    /// Step sequence for batched evaluation: level `i` holds during window
    /// `[i·period, (i+1)·period)`, with a linear ramp of length `ramp` at the
    /// start of each window after the first. The waveform starts at
    /// `levels[0]` so a DC solve at t = 0 gives the first window's state.
    pub fn step_schedule(levels: &[f64], period: f64, ramp: f64) -> Result<Self, SolveError> {
        if levels.is_empty() || period <= 0.0 || ramp <= 0.0 || ramp >= period {
            return Err(SolveError::InvalidWaveform {
                message: format!(
                    "step schedule needs levels and 0 < ramp < period (ramp {ramp}, period {period})"
                ),
            });
        }
        let mut points = vec![(0.0, levels[0])];
        for (i, &level) in levels.iter().enumerate().skip(1) {
            let t = i as f64 * period;
            points.push((t, levels[i - 1]));
            points.push((t + ramp, level));
        }
        Self::new(points)
    }

    /// Value at time `t` (clamped to the first/last breakpoint outside the
    /// defined range).
    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        // Index of the first breakpoint strictly after t.
        let hi = pts.partition_point(|&(pt, _)| pt <= t);
        let (t0, v0) = pts[hi - 1];
        let (t1, v1) = pts[hi];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Time of the last breakpoint.
    pub fn end_time(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }
}
