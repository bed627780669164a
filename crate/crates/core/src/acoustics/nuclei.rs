//! Syllable nucleus detection from intensity peaks.
//!
//! The intensity contour shares the pitch tracker's frame grid, so frame `i`
//! of one lines up with frame `i` of the other.

use super::pitch::{frame_starts, hann, track_pitch_default, PitchTrack};
use crate::audio::AudioClip;
use crate::real::Real;

/// Minimum drop on both sides of an intensity peak, dB.
pub const MIN_DIP_DB: f64 = 2.0;
/// Nuclei must exceed the silence floor by this much, dB.
pub const FLOOR_MARGIN_DB: f64 = 25.0;
/// Fallback threshold below the 0.99 intensity quantile, dB.
pub const PEAK_MARGIN_DB: f64 = 25.0;
/// Reference mean-square for the dB scale (20 µPa squared).
const REFERENCE_POWER: f64 = 4e-10;
const MIN_POWER: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyllableCount<T> {
    pub count: usize,
    /// Seconds of voiced, above-threshold frames.
    pub phonation_time: T,
    /// Clip duration in seconds.
    pub total_time: T,
}

/// Windowed intensity in dB for every frame of `track`'s grid.
pub fn intensity_contour<T: Real>(clip: &AudioClip<T>, track: &PitchTrack<T>) -> Vec<T> {
    let x = clip.samples();
    let len = track.window_len;
    let step = (track.frame_step * T::lit(f64::from(clip.sample_rate())))
        .round()
        .to_usize()
        .unwrap_or(1);
    let window = hann::<T>(len);
    let wsum: T = window.iter().copied().sum();
    let reference = T::lit(REFERENCE_POWER);
    frame_starts(x.len(), len, step)
        .into_iter()
        .map(|start| {
            let seg = &x[start..start + len];
            let mean = seg.iter().zip(&window).map(|(&s, &w)| s * w).sum::<T>() / wsum;
            let power = seg
                .iter()
                .zip(&window)
                .map(|(&s, &w)| w * (s - mean) * (s - mean))
                .sum::<T>()
                / wsum;
            T::lit(10.0) * (power.max(T::lit(MIN_POWER)) / reference).log10()
        })
        .collect()
}

fn median<T: Real>(mut v: Vec<T>) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    })
}

fn quantile<T: Real>(mut v: Vec<T>, q: f64) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, T::lit(pos.fract()));
    let j = (i + 1).min(v.len() - 1);
    Some(v[i] + (v[j] - v[i]) * frac)
}

/// Intensity threshold a nucleus must reach.
///
/// The silence floor is the median intensity of unvoiced frames; the
/// threshold is 25 dB above it, and never lower than 25 dB under the 0.99
/// intensity quantile. Without unvoiced frames only the quantile rule applies.
pub fn intensity_threshold<T: Real>(intensity: &[T], track: &PitchTrack<T>) -> Option<T> {
    let top = quantile(intensity.to_vec(), 0.99)? - T::lit(PEAK_MARGIN_DB);
    let silent: Vec<T> = intensity
        .iter()
        .zip(&track.frames)
        .filter(|(_, f)| !f.is_voiced())
        .map(|(&i, _)| i)
        .collect();
    Some(match median(silent) {
        Some(floor) => (floor + T::lit(FLOOR_MARGIN_DB)).max(top),
        None => top,
    })
}

/// Prominence of the local maximum at `i`: height above the higher of the
/// two dips separating it from taller peaks (or from the clip edges, which
/// count as silence). An equal peak to the left counts as taller, so a
/// plateau of equal maxima yields one nucleus.
fn prominence<T: Real>(contour: &[T], i: usize) -> T {
    let peak = contour[i];
    let mut left_min = peak;
    let mut left_edge = true;
    for &v in contour[..i].iter().rev() {
        if v >= peak {
            left_edge = false;
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = peak;
    let mut right_edge = true;
    for &v in &contour[i + 1..] {
        if v > peak {
            right_edge = false;
            break;
        }
        right_min = right_min.min(v);
    }
    let left = if left_edge {
        T::neg_infinity()
    } else {
        left_min
    };
    let right = if right_edge {
        T::neg_infinity()
    } else {
        right_min
    };
    peak - left.max(right)
}

/// Counts syllable nuclei with a precomputed pitch track on the default grid.
pub fn syllable_nuclei_with_track<T: Real>(
    clip: &AudioClip<T>,
    track: &PitchTrack<T>,
) -> SyllableCount<T> {
    let total_time = clip.duration();
    let intensity = intensity_contour(clip, track);
    let Some(threshold) = intensity_threshold(&intensity, track) else {
        return SyllableCount {
            count: 0,
            phonation_time: T::zero(),
            total_time,
        };
    };
    let frames = &track.frames;
    let active = |i: usize| frames[i].is_voiced() && intensity[i] >= threshold;

    let phonating = (0..intensity.len()).filter(|&i| active(i)).count();
    let n = intensity.len();
    let count = (0..n)
        .filter(|&i| {
            let left_ok = i == 0 || intensity[i] > intensity[i - 1];
            let right_ok = i + 1 == n || intensity[i] >= intensity[i + 1];
            left_ok && right_ok && active(i) && prominence(&intensity, i) >= T::lit(MIN_DIP_DB)
        })
        .count();
    SyllableCount {
        count,
        phonation_time: T::from_usize_lossy(phonating) * track.frame_step,
        total_time,
    }
}

/// Intensity-peak syllable nucleus detection.
pub fn syllable_nuclei<T: Real>(clip: &AudioClip<T>) -> SyllableCount<T> {
    syllable_nuclei_with_track(clip, &track_pitch_default(clip))
}
