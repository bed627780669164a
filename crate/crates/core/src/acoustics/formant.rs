//! First-formant tracking by linear prediction.

use num_complex::Complex;

use super::pitch::PitchTrack;
use super::AcousticsError;
use crate::audio::AudioClip;
use crate::real::{population_variance, Real};

pub const PRE_EMPHASIS: f64 = 0.97;
pub const LPC_ORDER: usize = 10;
pub const WINDOW_SECS: f64 = 0.025;
pub const MAX_BANDWIDTH_HZ: f64 = 400.0;
pub const F1_MIN_HZ: f64 = 200.0;
pub const F1_MAX_HZ: f64 = 1000.0;
/// Relative lift applied to the zero-lag autocorrelation before the
/// recursion, keeping it well conditioned on near-sinusoidal input.
const WHITE_NOISE_CORRECTION: f64 = 1e-4;

/// A resonance candidate from one LPC root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonance<T> {
    pub frequency: T,
    pub bandwidth: T,
}

/// Predictor coefficients `a[1..=order]` of `A(z) = 1 + Σ a_k z^-k` by the
/// autocorrelation method (Levinson–Durbin). Returns `None` for a silent or
/// degenerate frame.
pub fn lpc_coefficients<T: Real>(frame: &[T], order: usize) -> Option<Vec<T>> {
    if frame.len() <= order {
        return None;
    }
    let mut r: Vec<T> = (0..=order)
        .map(|lag| {
            frame[..frame.len() - lag]
                .iter()
                .zip(&frame[lag..])
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect();
    if !(r[0] > T::zero()) {
        return None;
    }
    r[0] = r[0] * (T::one() + T::lit(WHITE_NOISE_CORRECTION));

    let mut a = vec![T::zero(); order + 1];
    a[0] = T::one();
    let mut err = r[0];
    for i in 1..=order {
        let acc: T = (1..i).map(|j| a[j] * r[i - j]).sum::<T>() + r[i];
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err = err * (T::one() - k * k);
        if !(err > T::zero()) {
            return None;
        }
    }
    Some(a[1..].to_vec())
}

fn eval_with_derivative<T: Real>(coeffs: &[T], z: Complex<T>) -> (Complex<T>, Complex<T>) {
    // coeffs in descending powers, leading coefficient first
    let mut p = Complex::new(T::zero(), T::zero());
    let mut dp = Complex::new(T::zero(), T::zero());
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + Complex::new(c, T::zero());
    }
    (p, dp)
}

/// All complex roots of a monic-or-not real polynomial given in descending
/// powers, by Aberth–Ehrlich simultaneous iteration.
pub fn polynomial_roots<T: Real>(coeffs: &[T]) -> Vec<Complex<T>> {
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 || coeffs[0] == T::zero() {
        return Vec::new();
    }
    // Cauchy-style bound for the initial circle
    let lead = coeffs[0].abs();
    let radius = coeffs[1..]
        .iter()
        .map(|c| c.abs() / lead)
        .fold(T::zero(), |m, v| m.max(v))
        .min(T::lit(2.0))
        .max(T::lit(0.5));
    let mut roots: Vec<Complex<T>> = (0..degree)
        .map(|k| {
            let angle =
                T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(degree) + T::lit(0.4);
            Complex::from_polar(radius, angle)
        })
        .collect();

    let tol = T::epsilon() * T::lit(16.0);
    for _ in 0..500 {
        let mut moved = T::zero();
        for k in 0..degree {
            let (p, dp) = eval_with_derivative(coeffs, roots[k]);
            if p.norm() == T::zero() {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex<T> = (0..degree)
                .filter(|&j| j != k)
                .map(|j| {
                    let d = roots[k] - roots[j];
                    if d.norm() == T::zero() {
                        Complex::new(T::zero(), T::zero())
                    } else {
                        d.inv()
                    }
                })
                .fold(Complex::new(T::zero(), T::zero()), |acc, v| acc + v);
            let denom = Complex::new(T::one(), T::zero()) - ratio * repulsion;
            let correction = if denom.norm() == T::zero() {
                ratio
            } else {
                ratio / denom
            };
            if !correction.re.is_finite() || !correction.im.is_finite() {
                continue;
            }
            roots[k] = roots[k] - correction;
            moved = moved.max(correction.norm() / (T::one() + roots[k].norm()));
        }
        if moved < tol {
            break;
        }
    }
    roots
}

/// Resonances (upper half-plane roots) of one pre-emphasised, windowed frame.
pub fn frame_resonances<T: Real>(frame: &[T], sample_rate: T) -> Vec<Resonance<T>> {
    let Some(a) = lpc_coefficients(frame, LPC_ORDER) else {
        return Vec::new();
    };
    let mut coeffs = Vec::with_capacity(a.len() + 1);
    coeffs.push(T::one());
    coeffs.extend_from_slice(&a);
    let mut res: Vec<Resonance<T>> = polynomial_roots(&coeffs)
        .into_iter()
        .filter(|z| z.im > T::zero())
        .map(|z| Resonance {
            frequency: z.arg() * sample_rate / T::TAU(),
            bandwidth: -z.norm().ln() * sample_rate / T::PI(),
        })
        .collect();
    res.sort_by(|a, b| {
        a.frequency
            .partial_cmp(&b.frequency)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    res
}

/// Lowest narrow-band resonance inside the F1 range, if any.
pub fn pick_f1<T: Real>(resonances: &[Resonance<T>]) -> Option<T> {
    resonances
        .iter()
        .filter(|r| {
            r.bandwidth < T::lit(MAX_BANDWIDTH_HZ)
                && r.frequency >= T::lit(F1_MIN_HZ)
                && r.frequency <= T::lit(F1_MAX_HZ)
        })
        .map(|r| r.frequency)
        .next()
}

fn hamming<T: Real>(len: usize) -> Vec<T> {
    let denom = T::from_usize_lossy(len.max(2) - 1);
    (0..len)
        .map(|k| T::lit(0.54) - T::lit(0.46) * (T::TAU() * T::from_usize_lossy(k) / denom).cos())
        .collect()
}

/// Per-voiced-frame F1 estimates; frames without an in-range candidate are
/// omitted. Each entry is (frame time, F1).
pub fn f1_track<T: Real>(
    clip: &AudioClip<T>,
    track: &PitchTrack<T>,
) -> Result<Vec<(T, T)>, AcousticsError> {
    if track.voiced_count() == 0 {
        return Err(AcousticsError::NoVoicedFrames);
    }
    let x = clip.samples();
    let fs = T::lit(f64::from(clip.sample_rate()));
    let len = (T::lit(WINDOW_SECS) * fs).round().to_usize().unwrap_or(0);
    let window = hamming::<T>(len);
    let alpha = T::lit(PRE_EMPHASIS);
    let mut buf = vec![T::zero(); len];

    let mut out = Vec::new();
    for frame in track.frames.iter().filter(|f| f.is_voiced()) {
        let centre = (frame.time * fs).round().to_usize().unwrap_or(0);
        let Some(start) = centre.checked_sub(len / 2) else {
            continue;
        };
        if start + len > x.len() {
            continue;
        }
        for (i, b) in buf.iter_mut().enumerate() {
            let n = start + i;
            let prev = if n > 0 { x[n - 1] } else { T::zero() };
            *b = (x[n] - alpha * prev) * window[i];
        }
        if let Some(f1) = pick_f1(&frame_resonances(&buf, fs)) {
            out.push((frame.time, f1));
        }
    }
    Ok(out)
}

/// Population variance (Hz²) of per-frame F1 over voiced frames.
pub fn f1_variance<T: Real>(
    clip: &AudioClip<T>,
    track: &PitchTrack<T>,
) -> Result<T, AcousticsError> {
    let values: Vec<T> = f1_track(clip, track)?.into_iter().map(|(_, f)| f).collect();
    population_variance(&values).ok_or(AcousticsError::NoFormantFrames)
}
