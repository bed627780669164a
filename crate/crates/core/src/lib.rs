//! Voice biomarker extraction, clinical scaling, shallow classifiers and the
//! subject-level leave-one-out triage protocol.
//!
//! The signal path (`audio`, `acoustics`, `scaling`) is generic over the
//! scalar type through [`Real`]; `f64` is the default and the aliases below
//! name the common concrete forms.

// negated comparisons are deliberate: NaN must fail the test
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod audio;
pub mod cohort;
pub mod learners;
pub mod real;
pub mod scaling;
pub mod stimulus;
pub mod triage;

pub use real::Real;

pub type AudioClipF32 = audio::AudioClip<f32>;
pub type AudioClipF64 = audio::AudioClip<f64>;
pub type FeatureVectorF32 = acoustics::FeatureVector<f32>;
pub type FeatureVectorF64 = acoustics::FeatureVector<f64>;
pub type ScaledVectorF32 = scaling::ScaledFeatureVector<f32>;
pub type ScaledVectorF64 = scaling::ScaledFeatureVector<f64>;
pub type PitchTrackF64 = acoustics::PitchTrack<f64>;
