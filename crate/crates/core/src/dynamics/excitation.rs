use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Shaker displacement `A sin(2πft)` in mm.
pub fn base_excitation(t: f64, amplitude: f64, frequency: f64) -> f64 {
    amplitude * (2.0 * PI * frequency * t).sin()
}

fn base_velocity(t: f64, amplitude: f64, frequency: f64) -> f64 {
    let w = 2.0 * PI * frequency;
    amplitude * w * (w * t).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSegment {
    pub amplitude_mm: f64,
    pub frequency_hz: f64,
    pub duration_s: f64,
}

/// Piecewise sinusoidal base motion. Each segment restarts at zero phase,
/// like a signal generator reprogrammed between segments. After the last
/// segment the base rests at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    pub segments: Vec<ExcitationSegment>,
}

impl ExcitationSpec {
    pub fn sine(amplitude_mm: f64, frequency_hz: f64, duration_s: f64) -> Self {
        Self {
            segments: vec![ExcitationSegment {
                amplitude_mm,
                frequency_hz,
                duration_s,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter("excitation has no segments".into()));
        }
        for s in &self.segments {
            if !(s.frequency_hz > 0.0) || !s.frequency_hz.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "excitation frequency must be positive, got {}",
                    s.frequency_hz
                )));
            }
            if !(s.duration_s > 0.0) || !s.duration_s.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "segment duration must be positive, got {}",
                    s.duration_s
                )));
            }
            if !s.amplitude_mm.is_finite() {
                return Err(Error::InvalidParameter("amplitude must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// Segment index active at `t` and the segment's start time.
    pub fn segment_at(&self, t: f64) -> Option<(usize, f64)> {
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            let end = start + s.duration_s;
            if t >= start && t < end {
                return Some((i, start));
            }
            start = end;
        }
        None
    }

    /// Base displacement in mm.
    pub fn displacement(&self, t: f64) -> f64 {
        match self.segment_at(t) {
            Some((i, t0)) => {
                let s = &self.segments[i];
                base_excitation(t - t0, s.amplitude_mm, s.frequency_hz)
            }
            None => 0.0,
        }
    }

    /// Base velocity in mm/s.
    pub fn velocity(&self, t: f64) -> f64 {
        match self.segment_at(t) {
            Some((i, t0)) => {
                let s = &self.segments[i];
                base_velocity(t - t0, s.amplitude_mm, s.frequency_hz)
            }
            None => 0.0,
        }
    }
}
