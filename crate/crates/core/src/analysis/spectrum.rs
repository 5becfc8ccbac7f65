//! One-sided periodogram of a uniformly sampled series.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 64;

/// Relative tolerance on sample spacing for a trace to count as uniform.
pub const UNIFORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    pub power: Vec<f64>,
    /// Frequency resolution `sample_rate / n`.
    pub resolution_hz: f64,
}

/// A spectral maximum standing out of the low-frequency floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance {
    pub freq_hz: f64,
    /// Mean power of the band around the peak.
    pub peak_power: f64,
    /// Mean power of the bands below a third of the peak frequency.
    pub floor_power: f64,
}

impl Resonance {
    pub fn contrast(&self) -> f64 {
        self.peak_power / self.floor_power
    }
}

impl Spectrum {
    /// Highest bin at or above `min_freq_hz`.
    pub fn dominant_peak(&self, min_freq_hz: f64) -> Option<(f64, f64)> {
        self.freq_hz
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= min_freq_hz)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, p)| (*f, *p))
    }

    /// Looks for an interior spectral maximum.
    ///
    /// The spectrum (without the DC bin) is averaged over bands of `band`
    /// bins. The band with the largest mean power is the peak; it counts as
    /// a resonance when it is not one of the two lowest bands and its mean
    /// exceeds `min_contrast` times the mean of the bands below a third of
    /// its frequency.
    pub fn resonance(&self, band: usize, min_contrast: f64) -> Option<Resonance> {
        let band = band.max(1);
        let bands: Vec<(f64, f64)> = self.power[1..]
            .chunks(band)
            .zip(self.freq_hz[1..].chunks(band))
            .filter(|(p, _)| p.len() == band)
            .map(|(p, f)| {
                (
                    f.iter().sum::<f64>() / band as f64,
                    p.iter().sum::<f64>() / band as f64,
                )
            })
            .collect();
        let (k, &(freq, peak)) = bands
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
        if k < 2 {
            return None;
        }
        let low: Vec<f64> = bands
            .iter()
            .take_while(|b| b.0 < freq / 3.0)
            .map(|b| b.1)
            .collect();
        let floor = if low.is_empty() {
            bands[0].1
        } else {
            low.iter().sum::<f64>() / low.len() as f64
        };
        let r = Resonance {
            freq_hz: freq,
            peak_power: peak,
            floor_power: floor,
        };
        (r.contrast() >= min_contrast).then_some(r)
    }
}

/// Magnitude-squared DFT of the mean-removed samples, one-sided
/// (interior bins doubled), normalised by the sample count.
pub fn periodogram(samples: &[f64], sample_rate_hz: f64) -> Result<Spectrum> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::domain(format!(
            "periodogram needs at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    if !(sample_rate_hz > 0.0) {
        return Err(Error::domain("sample rate must be positive"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let resolution_hz = sample_rate_hz / n as f64;
    let (freq_hz, power) = (0..=half)
        .map(|k| {
            let edge = k == 0 || (n.is_multiple_of(2) && k == half);
            let p = buf[k].norm_sqr() / n as f64 * if edge { 1.0 } else { 2.0 };
            (k as f64 * resolution_hz, p)
        })
        .unzip();
    Ok(Spectrum {
        freq_hz,
        power,
        resolution_hz,
    })
}

/// Periodogram of a `(t_s, value)` trace, which must be uniformly sampled.
pub fn periodogram_trace(times_s: &[f64], values: &[f64]) -> Result<Spectrum> {
    if times_s.len() != values.len() {
        return Err(Error::domain("times and values differ in length"));
    }
    if times_s.len() < MIN_SAMPLES {
        return Err(Error::domain(format!(
            "periodogram needs at least {MIN_SAMPLES} samples, got {}",
            times_s.len()
        )));
    }
    let n = times_s.len();
    let dt = (times_s[n - 1] - times_s[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::domain("trace times must increase"));
    }
    if let Some(i) = times_s
        .windows(2)
        .position(|w| ((w[1] - w[0]) - dt).abs() > UNIFORM_TOLERANCE * dt)
    {
        return Err(Error::domain(format!(
            "non-uniform trace: step {} to {} is {} s, expected {dt} s",
            i,
            i + 1,
            times_s[i + 1] - times_s[i]
        )));
    }
    periodogram(values, 1.0 / dt)
}
