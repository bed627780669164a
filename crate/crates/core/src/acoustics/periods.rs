//! Glottal cycle marking and the local jitter / shimmer measures.

use super::pitch::{parabolic_peak, PitchTrack};
use super::AcousticsError;
use crate::audio::AudioClip;
use crate::real::Real;

/// One located cycle peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMark<T> {
    /// Peak time in seconds (sub-sample accurate).
    pub time: T,
    /// Absolute peak amplitude.
    pub amplitude: T,
}

/// Cycle marks grouped into runs; consecutive marks inside a run are one
/// period apart, runs are separated by unvoiced stretches.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeriodMarks<T = f64> {
    pub runs: Vec<Vec<CycleMark<T>>>,
}

impl<T: Real> PeriodMarks<T> {
    pub fn mark_count(&self) -> usize {
        self.runs.iter().map(Vec::len).sum()
    }

    /// Period sequences, one per run.
    pub fn periods(&self) -> Vec<Vec<T>> {
        self.runs
            .iter()
            .map(|run| run.windows(2).map(|w| w[1].time - w[0].time).collect())
            .collect()
    }

    pub fn amplitudes(&self) -> Vec<Vec<T>> {
        self.runs
            .iter()
            .map(|run| run.iter().map(|m| m.amplitude).collect())
            .collect()
    }
}

/// Fraction of the expected period searched on either side of the prediction.
const SEARCH_SPAN: f64 = 0.2;
/// The walk stops once the next cycle correlates with the current one
/// below this (silence or noise at the edge of a voiced run).
pub const MIN_CYCLE_CORRELATION: f64 = 0.5;
/// The walk also stops at cycles whose peak falls below this fraction of
/// the seed cycle's; peak positions drift on steep onsets and offsets.
pub const MIN_RELATIVE_PEAK: f64 = 0.25;
/// Consecutive periods further apart than this ratio are not compared.
pub const MAX_PERIOD_FACTOR: f64 = 1.3;
/// Consecutive amplitudes further apart than this ratio are not compared.
pub const MAX_AMPLITUDE_FACTOR: f64 = 1.6;

struct Walker<'a, T> {
    x: &'a [T],
    fs: T,
    /// Voiced frame (time, f0) pairs of the current run.
    contour: &'a [(T, T)],
    polarity: T,
    /// Smallest acceptable polarity-aligned peak value.
    min_peak: T,
    lo: usize,
    hi: usize,
    min_period: T,
    max_period: T,
}

impl<T: Real> Walker<'_, T> {
    /// Period in samples at time `t`, linearly interpolated from the contour.
    fn period_at(&self, t: T) -> T {
        let c = self.contour;
        let f0 = if t <= c[0].0 {
            c[0].1
        } else if t >= c[c.len() - 1].0 {
            c[c.len() - 1].1
        } else {
            let i = c.partition_point(|&(ct, _)| ct <= t);
            let (t0, f0a) = c[i - 1];
            let (t1, f0b) = c[i];
            f0a + (f0b - f0a) * (t - t0) / (t1 - t0)
        };
        self.fs / f0
    }

    fn value(&self, i: usize) -> T {
        self.x[i] * self.polarity
    }

    /// Normalized cross-correlation of the `half`-radius neighbourhoods of
    /// `a` and `b`.
    fn correlation(&self, a: usize, b: usize, half: usize) -> T {
        let (sa, sb) = (&self.x[a - half..=a + half], &self.x[b - half..=b + half]);
        let (mut ab, mut aa, mut bb) = (T::zero(), T::zero(), T::zero());
        for (&u, &v) in sa.iter().zip(sb) {
            ab = ab + u * v;
            aa = aa + u * u;
            bb = bb + v * v;
        }
        let denom = (aa * bb).sqrt();
        if denom > T::zero() {
            ab / denom
        } else {
            T::zero()
        }
    }

    /// Polarity-aligned local extremum nearest `around` within `radius`.
    fn local_peak(&self, around: usize, radius: usize) -> usize {
        let from = around.saturating_sub(radius).max(self.lo + 1);
        let to = (around + radius).min(self.hi - 1);
        (from..=to)
            .max_by(|&i, &j| {
                self.value(i)
                    .partial_cmp(&self.value(j))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(j.cmp(&i))
            })
            .unwrap_or(around)
    }

    fn refine(&self, i: usize) -> CycleMark<T> {
        let (offset, peak) = parabolic_peak(self.value(i - 1), self.value(i), self.value(i + 1));
        CycleMark {
            time: (T::from_usize_lossy(i) + offset) / self.fs,
            amplitude: peak.abs(),
        }
    }

    /// Next mark index from `prev` in direction `forward`, if it stays in the
    /// run. The expected period is the last measured one once the walk has
    /// started; frames at run edges often carry unreliable F0.
    fn step(&self, prev: usize, last: Option<usize>, forward: bool) -> Option<usize> {
        let period = match last {
            Some(p) => T::from_usize_lossy(p),
            None => self.period_at(T::from_usize_lossy(prev) / self.fs),
        };
        let half = (period * T::lit(0.5)).round().to_usize()?.max(1);
        let span = (period * T::lit(SEARCH_SPAN)).ceil().to_usize()?.max(1);
        let expected = period.round().to_usize()?;
        let centre = if forward {
            prev.checked_add(expected)?
        } else {
            prev.checked_sub(expected)?
        };
        let (first, last) = (centre.checked_sub(span)?, centre + span);
        if first < self.lo + half || last + half > self.hi {
            return None;
        }
        let guard = self.lo + half..=self.hi - half;
        if !guard.contains(&prev) {
            return None;
        }
        let (best, r) = (first..=last)
            .map(|c| (c, self.correlation(prev, c, half)))
            .fold(None::<(usize, T)>, |acc, (c, r)| match acc {
                Some((_, br)) if br >= r => acc,
                _ => Some((c, r)),
            })?;
        if !(r >= T::lit(MIN_CYCLE_CORRELATION)) {
            return None;
        }
        let radius = (period * T::lit(0.1)).round().to_usize()?.max(2);
        let peak = self.local_peak(best, radius);
        let distance = T::from_usize_lossy(peak.abs_diff(prev));
        if distance < self.min_period
            || distance > self.max_period
            || peak == prev
            || !(self.value(peak) >= self.min_peak)
        {
            return None;
        }
        Some(peak)
    }
}

/// Locates one waveform peak per glottal cycle inside every voiced run.
///
/// Each run is seeded at the strongest peak near its midpoint and walked
/// outwards one period at a time; the next cycle is the shift that best
/// cross-correlates with the current one, snapped to the local extremum.
pub fn mark_periods<T: Real>(
    clip: &AudioClip<T>,
    track: &PitchTrack<T>,
) -> Result<PeriodMarks<T>, AcousticsError> {
    if track.voiced_count() == 0 {
        return Err(AcousticsError::NoVoicedFrames);
    }
    let x = clip.samples();
    let fs = T::lit(f64::from(clip.sample_rate()));
    let half_step = track.frame_step * T::lit(0.5);

    let mut runs = Vec::new();
    let mut contour: Vec<(T, T)> = Vec::new();
    let mut groups: Vec<Vec<(T, T)>> = Vec::new();
    for frame in &track.frames {
        match frame.f0 {
            Some(f0) => contour.push((frame.time, f0)),
            None if !contour.is_empty() => groups.push(std::mem::take(&mut contour)),
            None => {}
        }
    }
    if !contour.is_empty() {
        groups.push(contour);
    }

    for group in &groups {
        let start_t = (group[0].0 - half_step).max(T::zero());
        let end_t = group[group.len() - 1].0 + half_step;
        let lo = (start_t * fs).floor().to_usize().unwrap_or(0);
        let hi = (end_t * fs).ceil().to_usize().unwrap_or(0).min(x.len() - 1);
        if hi <= lo + 2 {
            continue;
        }
        let mut walker = Walker {
            x,
            fs,
            contour: group,
            polarity: T::one(),
            min_peak: T::zero(),
            lo,
            hi,
            min_period: fs / track.ceiling,
            max_period: fs / track.floor,
        };
        // polarity from the run's extremes, so every run follows the same
        // waveform feature regardless of where the frame grid falls
        let (max, min) = x[lo..=hi]
            .iter()
            .fold((T::zero(), T::zero()), |(a, b), &v| (a.max(v), b.min(v)));
        walker.polarity = if -min > max { -T::one() } else { T::one() };
        let mid = (lo + hi) / 2;
        let period = walker.period_at(T::from_usize_lossy(mid) / fs);
        let radius = (period * T::lit(0.5))
            .round()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let seed = walker.local_peak(mid, radius);
        if !(walker.value(seed) > T::zero()) {
            continue;
        }
        walker.min_peak = walker.value(seed) * T::lit(MIN_RELATIVE_PEAK);
        let walk = |forward: bool| {
            let mut marks = Vec::new();
            let (mut cur, mut last) = (seed, None);
            while let Some(next) = walker.step(cur, last, forward) {
                marks.push(next);
                last = Some(next.abs_diff(cur));
                cur = next;
            }
            marks
        };
        let (left, right) = (walk(false), walk(true));
        let run: Vec<CycleMark<T>> = left
            .iter()
            .rev()
            .chain(std::iter::once(&seed))
            .chain(right.iter())
            .map(|&i| walker.refine(i))
            .collect();
        if !run.is_empty() {
            runs.push(run);
        }
    }
    Ok(PeriodMarks { runs })
}

/// Mean absolute difference of consecutive values divided by the mean value,
/// with differences taken only inside each run and only between neighbours
/// whose ratio is at most `max_factor`.
fn local_perturbation<T: Real>(runs: &[Vec<T>], max_factor: f64) -> Option<T> {
    let factor = T::lit(max_factor);
    let (mut diff_sum, mut diff_n) = (T::zero(), 0usize);
    let (mut sum, mut n) = (T::zero(), 0usize);
    for run in runs {
        for w in run.windows(2) {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            if !(b <= a * factor) {
                continue;
            }
            diff_sum = diff_sum + (b - a);
            diff_n += 1;
        }
        sum = sum + run.iter().copied().sum::<T>();
        n += run.len();
    }
    if diff_n == 0 || n == 0 {
        return None;
    }
    let mean = sum / T::from_usize_lossy(n);
    if mean <= T::zero() {
        return None;
    }
    Some(diff_sum / T::from_usize_lossy(diff_n) / mean)
}

/// Local jitter as a fraction: mean |T(i+1) − T(i)| over mean period.
pub fn jitter_local<T: Real>(marks: &PeriodMarks<T>) -> Result<T, AcousticsError> {
    local_perturbation(&marks.periods(), MAX_PERIOD_FACTOR)
        .ok_or(AcousticsError::InsufficientCycles)
}

/// Local shimmer as a fraction: mean |A(i+1) − A(i)| over mean amplitude.
pub fn shimmer_local<T: Real>(marks: &PeriodMarks<T>) -> Result<T, AcousticsError> {
    local_perturbation(&marks.amplitudes(), MAX_AMPLITUDE_FACTOR)
        .ok_or(AcousticsError::InsufficientCycles)
}
