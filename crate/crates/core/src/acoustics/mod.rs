//! The seven voice biomarkers and the analyses that produce them.

pub mod formant;
pub mod nuclei;
pub mod periods;
pub mod pitch;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::real::Real;

pub use formant::{f1_track, f1_variance};
pub use nuclei::{syllable_nuclei, SyllableCount};
pub use periods::{jitter_local, mark_periods, shimmer_local, CycleMark, PeriodMarks};
pub use pitch::{track_pitch, track_pitch_default, PitchFrame, PitchTrack};

/// Mean English syllables per word, used to turn a syllable count into words.
pub const SYLLABLES_PER_WORD: f64 = 1.5;

/// Names the biomarker an extraction failure belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    F0,
    Jitter,
    Shimmer,
    F1,
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feature::F0 => "f0",
            Feature::Jitter => "jitter",
            Feature::Shimmer => "shimmer",
            Feature::F1 => "f1",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcousticsError {
    #[error("no voiced frames")]
    NoVoicedFrames,
    #[error("too few glottal cycles")]
    InsufficientCycles,
    #[error("no frame produced a first formant in range")]
    NoFormantFrames,
    #[error("feature extraction failed for {feature}: {cause}")]
    FeatureExtractionFailed {
        feature: Feature,
        cause: Box<AcousticsError>,
    },
}

impl AcousticsError {
    fn for_feature(feature: Feature) -> impl FnOnce(AcousticsError) -> AcousticsError {
        move |cause| AcousticsError::FeatureExtractionFailed {
            feature,
            cause: Box::new(cause),
        }
    }
}

/// Raw biomarker vector, fields in the canonical wire order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T = f64> {
    /// Syllables per second of phonation.
    pub articulation_rate: T,
    /// Estimated words per minute.
    pub speaking_rate: T,
    /// Local jitter, fraction.
    pub jitter: T,
    /// Local shimmer, fraction.
    pub shimmer: T,
    /// Hz.
    pub f0_mean: T,
    /// Hz.
    pub f0_sd: T,
    /// Hz².
    pub f1_variance: T,
}

impl<T: Real> FeatureVector<T> {
    pub fn to_array(&self) -> [T; 7] {
        [
            self.articulation_rate,
            self.speaking_rate,
            self.jitter,
            self.shimmer,
            self.f0_mean,
            self.f0_sd,
            self.f1_variance,
        ]
    }

    pub fn from_array(v: [T; 7]) -> Self {
        Self {
            articulation_rate: v[0],
            speaking_rate: v[1],
            jitter: v[2],
            shimmer: v[3],
            f0_mean: v[4],
            f0_sd: v[5],
            f1_variance: v[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Mean and population standard deviation of the voiced F0 values.
pub fn f0_stats<T: Real>(track: &PitchTrack<T>) -> Result<(T, T), AcousticsError> {
    let voiced: Vec<T> = track.voiced_f0().collect();
    if voiced.len() < 2 {
        return Err(AcousticsError::NoVoicedFrames);
    }
    let mean = crate::real::mean(&voiced).expect("non-empty");
    let var = crate::real::population_variance(&voiced).expect("non-empty");
    Ok((mean, var.sqrt()))
}

/// Runs the full analysis chain on one clip.
pub fn extract_features<T: Real>(clip: &AudioClip<T>) -> Result<FeatureVector<T>, AcousticsError> {
    let track = track_pitch_default(clip);
    let (f0_mean, f0_sd) = f0_stats(&track).map_err(AcousticsError::for_feature(Feature::F0))?;
    let marks = mark_periods(clip, &track).map_err(AcousticsError::for_feature(Feature::Jitter))?;
    let jitter = jitter_local(&marks).map_err(AcousticsError::for_feature(Feature::Jitter))?;
    let shimmer = shimmer_local(&marks).map_err(AcousticsError::for_feature(Feature::Shimmer))?;
    let f1_var = f1_variance(clip, &track).map_err(AcousticsError::for_feature(Feature::F1))?;

    let syllables = nuclei::syllable_nuclei_with_track(clip, &track);
    let count = T::from_usize_lossy(syllables.count);
    let articulation_rate = if syllables.phonation_time > T::zero() {
        count / syllables.phonation_time
    } else {
        T::zero()
    };
    let minutes = syllables.total_time / T::lit(60.0);
    let speaking_rate = if minutes > T::zero() {
        count / T::lit(SYLLABLES_PER_WORD) / minutes
    } else {
        T::zero()
    };

    Ok(FeatureVector {
        articulation_rate,
        speaking_rate,
        jitter,
        shimmer,
        f0_mean,
        f0_sd,
        f1_variance: f1_var,
    })
}
