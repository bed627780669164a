//! Short-time autocorrelation pitch tracking.
//!
//! Each frame is Hann-windowed and its autocorrelation is divided by the
//! autocorrelation of the window itself, so a perfectly periodic signal
//! scores close to 1 at its period regardless of the window taper. Within
//! each run of voiced frames the final F0 path is the candidate sequence
//! with the best total strength net of octave-jump penalties.

use crate::audio::AudioClip;
use crate::real::Real;

pub const DEFAULT_FLOOR_HZ: f64 = 75.0;
pub const DEFAULT_CEILING_HZ: f64 = 300.0;
pub const FRAME_STEP_SECS: f64 = 0.010;
pub const VOICING_THRESHOLD: f64 = 0.45;
/// Frames whose RMS falls at or below this fraction of the clip's absolute
/// peak are treated as silent.
pub const SILENCE_THRESHOLD: f64 = 0.03;
/// Strength penalty per octave of lag, favouring the shortest period among
/// near-equal autocorrelation peaks.
pub const OCTAVE_COST: f64 = 0.01;
/// Path penalty per octave of F0 change between consecutive frames.
pub const OCTAVE_JUMP_COST: f64 = 0.35;
/// Candidates kept per frame for path finding.
const MAX_CANDIDATES: usize = 15;
/// Window length in periods of the pitch floor.
const PERIODS_PER_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame<T> {
    /// Centre of the analysis window, seconds from clip start.
    pub time: T,
    /// Fundamental frequency in Hz, `None` when unvoiced.
    pub f0: Option<T>,
    /// Normalized autocorrelation at the chosen lag (0 when no candidate).
    pub strength: T,
}

impl<T: Real> PitchFrame<T> {
    pub fn is_voiced(&self) -> bool {
        self.f0.is_some()
    }
}

/// Frame-wise F0 contour on a regular time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack<T = f64> {
    pub frames: Vec<PitchFrame<T>>,
    pub frame_step: T,
    pub floor: T,
    pub ceiling: T,
    /// Analysis window length in samples.
    pub window_len: usize,
}

impl<T: Real> PitchTrack<T> {
    pub fn voiced_f0(&self) -> impl Iterator<Item = T> + '_ {
        self.frames.iter().filter_map(|f| f.f0)
    }

    pub fn voiced_count(&self) -> usize {
        self.frames.iter().filter(|f| f.is_voiced()).count()
    }
}

/// Sample offsets of analysis frames for a centred grid.
///
/// Returns the start index of each window; frame `i` is centred at
/// `start + window_len / 2`. The grid is placed symmetrically in the clip.
pub(crate) fn frame_starts(n_samples: usize, window_len: usize, step: usize) -> Vec<usize> {
    if n_samples < window_len || step == 0 {
        return Vec::new();
    }
    let n_frames = (n_samples - window_len) / step + 1;
    let span = (n_frames - 1) * step + window_len;
    let offset = (n_samples - span) / 2;
    (0..n_frames).map(|i| offset + i * step).collect()
}

pub(crate) fn hann<T: Real>(len: usize) -> Vec<T> {
    let denom = T::from_usize_lossy(len + 1);
    (0..len)
        .map(|k| {
            let phase = T::TAU() * T::from_usize_lossy(k + 1) / denom;
            T::lit(0.5) - T::lit(0.5) * phase.cos()
        })
        .collect()
}

fn autocorrelation<T: Real>(x: &[T], max_lag: usize, out: &mut Vec<T>) {
    out.clear();
    for lag in 0..=max_lag {
        let acc = if lag < x.len() {
            x[..x.len() - lag]
                .iter()
                .zip(&x[lag..])
                .map(|(&a, &b)| a * b)
                .sum()
        } else {
            T::zero()
        };
        out.push(acc);
    }
}

/// Vertex of the parabola through three equally spaced points, as
/// (offset in `[-0.5, 0.5]`, interpolated value).
pub(crate) fn parabolic_peak<T: Real>(left: T, centre: T, right: T) -> (T, T) {
    let half = T::lit(0.5);
    let denom = left - T::lit(2.0) * centre + right;
    if denom == T::zero() {
        return (T::zero(), centre);
    }
    let offset = (half * (left - right) / denom).max(-half).min(half);
    let value = centre - T::lit(0.25) * (left - right) * offset;
    (offset, value)
}

/// Tracks F0 with defaults 75–300 Hz.
pub fn track_pitch_default<T: Real>(clip: &AudioClip<T>) -> PitchTrack<T> {
    track_pitch(clip, T::lit(DEFAULT_FLOOR_HZ), T::lit(DEFAULT_CEILING_HZ))
}

/// Autocorrelation pitch tracker with 10 ms step and a `3 / floor` window.
///
/// # Panics
/// Panics if `floor` is not strictly below `ceiling` or either is not positive.
pub fn track_pitch<T: Real>(clip: &AudioClip<T>, floor: T, ceiling: T) -> PitchTrack<T> {
    assert!(
        floor > T::zero() && floor < ceiling,
        "pitch floor must be positive and below the ceiling"
    );
    let fs = T::lit(f64::from(clip.sample_rate()));
    let window_len = (T::lit(PERIODS_PER_WINDOW) * fs / floor)
        .round()
        .to_usize()
        .unwrap_or(0)
        .max(4);
    let step = (T::lit(FRAME_STEP_SECS) * fs)
        .round()
        .to_usize()
        .unwrap_or(1);
    let min_lag = (fs / ceiling).floor().to_usize().unwrap_or(1).max(1);
    let max_lag = (fs / floor).ceil().to_usize().unwrap_or(1);
    let max_lag = max_lag.min(window_len.saturating_sub(2));

    let samples = clip.samples();
    let global_peak = samples.iter().fold(T::zero(), |m, &s| m.max(s.abs()));
    let silence = T::lit(SILENCE_THRESHOLD) * global_peak;

    let window = hann::<T>(window_len);
    let mut window_ac = Vec::new();
    autocorrelation(&window, max_lag + 1, &mut window_ac);
    let window_ac: Vec<T> = window_ac.iter().map(|&v| v / window_ac[0]).collect();

    let octave_cost = T::lit(OCTAVE_COST);
    let threshold = T::lit(VOICING_THRESHOLD);
    let mut buf = vec![T::zero(); window_len];
    let mut ac = Vec::with_capacity(max_lag + 2);
    let analysed: Vec<Frame<T>> = frame_starts(samples.len(), window_len, step)
        .into_iter()
        .map(|start| {
            let time =
                (T::from_usize_lossy(start) + T::from_usize_lossy(window_len) * T::lit(0.5)) / fs;
            let seg = &samples[start..start + window_len];
            let mean = seg.iter().copied().sum::<T>() / T::from_usize_lossy(window_len);
            let energy: T = seg.iter().map(|&s| (s - mean) * (s - mean)).sum();
            let rms = (energy / T::from_usize_lossy(window_len)).sqrt();
            if !(rms > silence) {
                return (time, Vec::new(), T::zero());
            }
            for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
                *b = (s - mean) * w;
            }
            autocorrelation(&buf, max_lag + 1, &mut ac);
            if ac[0] <= T::zero() {
                return (time, Vec::new(), T::zero());
            }
            let r0 = ac[0];
            let norm = |lag: usize| (ac[lag] / r0) / window_ac[lag];

            let mut strongest = T::zero();
            let mut candidates = Vec::new();
            for lag in min_lag.max(1)..=max_lag {
                let (l, c, r) = (norm(lag - 1), norm(lag), norm(lag + 1));
                if !(c > l && c >= r) {
                    continue;
                }
                let (offset, peak) = parabolic_peak(l, c, r);
                let refined = T::from_usize_lossy(lag) + offset;
                let f0 = fs / refined;
                if f0 < floor || f0 > ceiling {
                    continue;
                }
                strongest = strongest.max(peak);
                if peak > T::zero() {
                    let score = peak - octave_cost * (floor * refined / fs).log2();
                    candidates.push((score, f0, peak));
                }
            }
            if !(strongest > threshold) {
                candidates.clear();
            }
            candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            candidates.truncate(MAX_CANDIDATES);
            (time, candidates, strongest)
        })
        .collect();

    let mut frames: Vec<PitchFrame<T>> = analysed
        .iter()
        .map(|(time, _, strongest)| PitchFrame {
            time: *time,
            f0: None,
            strength: *strongest,
        })
        .collect();
    let mut i = 0;
    while i < analysed.len() {
        if analysed[i].1.is_empty() {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < analysed.len() && !analysed[j].1.is_empty() {
            j += 1;
        }
        for (k, (f0, peak)) in best_path(&analysed[i..j]).into_iter().enumerate() {
            frames[i + k].f0 = Some(f0);
            frames[i + k].strength = peak;
        }
        i = j;
    }

    PitchTrack {
        frames,
        frame_step: T::from_usize_lossy(step) / fs,
        floor,
        ceiling,
        window_len,
    }
}

/// Per frame: time, candidates as (score, f0, peak) best first, strongest peak.
type Frame<T> = (T, Vec<(T, T, T)>, T);

/// Viterbi over a run of voiced frames: maximizes Σ score minus
/// `OCTAVE_JUMP_COST · |log2(f_prev / f_next)|`; returns (f0, peak) per frame.
fn best_path<T: Real>(run: &[Frame<T>]) -> Vec<(T, T)> {
    let jump = T::lit(OCTAVE_JUMP_COST);
    let mut value: Vec<T> = run[0].1.iter().map(|c| c.0).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; run[0].1.len()]];
    for w in run.windows(2) {
        let (prev, next) = (&w[0].1, &w[1].1);
        let mut nv = Vec::with_capacity(next.len());
        let mut nb = Vec::with_capacity(next.len());
        for c in next {
            let mut best = (T::neg_infinity(), 0);
            for (p, pc) in prev.iter().enumerate() {
                let v = value[p] - jump * (pc.1 / c.1).log2().abs();
                if v > best.0 {
                    best = (v, p);
                }
            }
            nv.push(best.0 + c.0);
            nb.push(best.1);
        }
        value = nv;
        back.push(nb);
    }
    let mut at = (0..value.len()).fold(0, |b, k| if value[k] > value[b] { k } else { b });
    let mut path = vec![(T::zero(), T::zero()); run.len()];
    for f in (0..run.len()).rev() {
        let c = run[f].1[at];
        path[f] = (c.1, c.2);
        at = back[f][at];
    }
    path
}
