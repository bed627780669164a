//! Synthetic calibration signals with known ground truth.
//!
//! All generators produce 16 kHz `f64` sample buffers; wrap them with
//! [`AudioClip::from_samples`](crate::audio::AudioClip::from_samples).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::SAMPLE_RATE;

const FS: f64 = SAMPLE_RATE as f64;

fn n_samples(secs: f64) -> usize {
    (secs * FS).round() as usize
}

pub fn sine(freq: f64, amplitude: f64, secs: f64) -> Vec<f64> {
    (0..n_samples(secs))
        .map(|n| amplitude * (std::f64::consts::TAU * freq * n as f64 / FS).sin())
        .collect()
}

pub fn silence(secs: f64) -> Vec<f64> {
    vec![0.0; n_samples(secs)]
}

/// Uniform white noise in `[-amplitude, amplitude]`.
pub fn white_noise(amplitude: f64, secs: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples(secs))
        .map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

/// A train of smooth glottal-like pulses with known cycle lengths and peaks.
#[derive(Debug, Clone)]
pub struct PulseTrain {
    pub samples: Vec<f64>,
    /// Peak times in seconds.
    pub pulse_times: Vec<f64>,
    /// Peak heights.
    pub amplitudes: Vec<f64>,
}

impl PulseTrain {
    /// Generator periods (differences of consecutive pulse times).
    pub fn periods(&self) -> Vec<f64> {
        self.pulse_times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Gaussian pulse width (standard deviation) in seconds.
pub const PULSE_WIDTH_SECS: f64 = 0.0004;

/// Places Gaussian bumps so that pulse `i + 1` follows pulse `i` by
/// `periods[i % periods.len()]` seconds and has height
/// `amplitudes[i % amplitudes.len()]`.
pub fn pulse_train(periods: &[f64], amplitudes: &[f64], secs: f64) -> PulseTrain {
    assert!(!periods.is_empty() && !amplitudes.is_empty());
    let n = n_samples(secs);
    let mut samples = vec![0.0; n];
    let mut pulse_times = Vec::new();
    let mut pulse_amps = Vec::new();
    let mut t = periods[0] / 2.0;
    let mut i = 0;
    let width = PULSE_WIDTH_SECS * FS;
    let reach = (6.0 * width).ceil() as i64;
    while t * FS + 6.0 * width < n as f64 {
        let a = amplitudes[i % amplitudes.len()];
        let centre = t * FS;
        let c = centre.round() as i64;
        for k in (c - reach).max(0)..=(c + reach).min(n as i64 - 1) {
            let d = (k as f64 - centre) / width;
            samples[k as usize] += a * (-0.5 * d * d).exp();
        }
        pulse_times.push(t);
        pulse_amps.push(a);
        t += periods[i % periods.len()];
        i += 1;
    }
    PulseTrain {
        samples,
        pulse_times,
        amplitudes: pulse_amps,
    }
}

/// Pulse train whose periods and peak heights carry independent Gaussian
/// relative perturbations of size `period_sigma` and `amp_sigma`.
pub fn perturbed_pulse_train(
    f0: f64,
    amplitude: f64,
    period_sigma: f64,
    amp_sigma: f64,
    secs: f64,
    seed: u64,
) -> PulseTrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (secs * f0).ceil() as usize + 2;
    let periods: Vec<f64> = (0..count)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (1.0 + period_sigma * z) / f0
        })
        .collect();
    let amps: Vec<f64> = (0..count)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            amplitude * (1.0 + amp_sigma * z)
        })
        .collect();
    pulse_train(&periods, &amps, secs)
}

/// Impulse train at integer sample positions (flat spectrum excitation).
pub fn impulse_train(f0: f64, secs: f64) -> Vec<f64> {
    let n = n_samples(secs);
    let mut x = vec![0.0; n];
    let mut t = 0.0;
    while (t * FS).round() < n as f64 {
        x[(t * FS).round() as usize] = 1.0;
        t += 1.0 / f0;
    }
    x
}

/// Two-pole resonator at `freq` Hz with `bandwidth` Hz, output peak
/// normalized to `peak`.
pub fn resonate(x: &[f64], freq: f64, bandwidth: f64, peak: f64) -> Vec<f64> {
    let r = (-std::f64::consts::PI * bandwidth / FS).exp();
    let theta = std::f64::consts::TAU * freq / FS;
    let (b1, b2) = (2.0 * r * theta.cos(), -r * r);
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let y1 = if n >= 1 { y[n - 1] } else { 0.0 };
        let y2 = if n >= 2 { y[n - 2] } else { 0.0 };
        y[n] = x[n] + b1 * y1 + b2 * y2;
    }
    normalize(&mut y, peak);
    y
}

pub fn normalize(x: &mut [f64], peak: f64) {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / max);
    }
}

/// One-pole low-pass giving the excitation the usual -6 dB/octave glottal
/// source (plus radiation) tilt.
pub const GLOTTAL_POLE: f64 = 0.97;

/// Impulse train shaped by the glottal tilt filter.
pub fn glottal_source(f0: f64, secs: f64) -> Vec<f64> {
    let mut x = impulse_train(f0, secs);
    for n in 1..x.len() {
        x[n] += GLOTTAL_POLE * x[n - 1];
    }
    x
}

/// Synthetic vowel: glottal pulse train at `f0` through one resonator.
pub fn vowel(f0: f64, formant: f64, bandwidth: f64, secs: f64) -> Vec<f64> {
    resonate(&glottal_source(f0, secs), formant, bandwidth, 0.5)
}

/// `count` tone bursts of `on` seconds separated by `off` seconds of
/// silence, each with raised-cosine ramps of `ramp` seconds.
pub fn tone_bursts(
    count: usize,
    freq: f64,
    on: f64,
    off: f64,
    ramp: f64,
    amplitude: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    let tone = sine(freq, amplitude, on);
    let ramp_n = n_samples(ramp);
    let len = tone.len();
    for b in 0..count {
        for (k, &s) in tone.iter().enumerate() {
            let edge = k.min(len - 1 - k);
            let gain = if edge < ramp_n {
                0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp_n as f64).cos()
            } else {
                1.0
            };
            out.push(s * gain);
        }
        if b + 1 < count || off > 0.0 {
            out.extend(silence(off));
        }
    }
    out
}

/// Speech-like clip: syllable `i` is a glottal pulse train at `f0s[i]` with
/// Gaussian relative period jitter `perturbation`, shaped by a resonator at
/// `formants[i % formants.len()]` (80 Hz bandwidth), lasting `on` seconds
/// with raised-cosine edges of `ramp` seconds; syllables are separated by
/// `gap` seconds of silence.
pub fn syllables(
    f0s: &[f64],
    formants: &[f64],
    on: f64,
    gap: f64,
    ramp: f64,
    perturbation: f64,
    seed: u64,
) -> Vec<f64> {
    assert!(!formants.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let n = n_samples(on);
    let ramp = n_samples(ramp).min(n / 2).max(1);
    for (i, &f0) in f0s.iter().enumerate() {
        let mut source = vec![0.0; n];
        let mut t = 0.0;
        while (t * FS).round() < n as f64 {
            source[(t * FS).round() as usize] = 1.0;
            let z: f64 = rng.sample(StandardNormal);
            t += (1.0 + perturbation * z) / f0;
        }
        for k in 1..n {
            source[k] += GLOTTAL_POLE * source[k - 1];
        }
        let mut voiced = resonate(&source, formants[i % formants.len()], 80.0, 0.5);
        for (k, v) in voiced.iter_mut().enumerate() {
            let edge = k.min(n - 1 - k);
            if edge < ramp {
                *v *= 0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos();
            }
        }
        out.extend(voiced);
        if i + 1 < f0s.len() {
            out.extend(silence(gap));
        }
    }
    out
}
