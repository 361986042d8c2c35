use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Amplitude of the `freq` component of `x` sampled at `rate`, by direct
/// projection onto sine and cosine. Exact for records holding an integer
/// number of periods.
pub fn tone_amplitude(x: &[f64], rate: f64, freq: f64) -> f64 {
    let n = x.len() as f64;
    let w = 2.0 * PI * freq / rate;
    let (mut c, mut s) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let (sn, cs) = (w * k as f64).sin_cos();
        c += v * cs;
        s += v * sn;
    }
    2.0 * (c * c + s * s).sqrt() / n
}

/// Longest prefix length holding a whole number of periods of `freq`.
fn whole_period_length(samples: usize, rate: f64, freq: f64) -> Option<usize> {
    (1..=samples).rev().find(|&n| {
        let periods = n as f64 * freq / rate;
        periods >= 1.0 && (periods - periods.round()).abs() < 1e-9
    })
}

/// Harmonic distortion of the most distorted channel: energy at `2f` and
/// `3f` (those below Nyquist) over energy at `f`.
pub fn nonlinearity_index(traj: &Trajectory, f: f64) -> Result<f64> {
    let rate = traj.sample_rate();
    if !(f > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency must be positive, got {f}")));
    }
    if rate / f < 4.0 {
        return Err(Error::InsufficientSamples(format!(
            "{:.2} samples per period at {f} Hz (need at least 4)",
            rate / f
        )));
    }
    let n = whole_period_length(traj.samples(), rate, f).ok_or_else(|| {
        Error::InsufficientSamples(format!("record shorter than one period of {f} Hz"))
    })?;
    let harmonics: Vec<f64> = [2.0, 3.0]
        .iter()
        .map(|h| h * f)
        .filter(|&hf| hf < 0.5 * rate - 1e-9)
        .collect();

    let mut per_channel = Vec::with_capacity(traj.node_count());
    for node in 0..traj.node_count() {
        let col = traj.states.column(node);
        let mean = col.rows(0, n).mean();
        let x: Vec<f64> = col.rows(0, n).iter().map(|v| v - mean).collect();
        let fundamental = tone_amplitude(&x, rate, f);
        let distortion: f64 = harmonics.iter().map(|&hf| tone_amplitude(&x, rate, hf).powi(2)).sum();
        per_channel.push((fundamental, distortion));
    }
    let largest = per_channel.iter().map(|c| c.0).fold(0.0, f64::max);
    if largest == 0.0 {
        return Ok(0.0);
    }
    Ok(per_channel
        .iter()
        .filter(|(a, _)| *a > 1e-6 * largest)
        .map(|(a, d)| d / (a * a))
        .fold(0.0, f64::max))
}
