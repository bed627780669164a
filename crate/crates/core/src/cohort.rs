//! Subjects, timestamped feature samples, the recording-sufficiency rule and
//! synthetic cohorts shaped like the deployment data.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scaling::ScaledFeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

impl std::str::FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            _ => Err(format!("unknown gender '{s}' (valid: male, female)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnosis {
    Diabetic,
    Nondiabetic,
    Unknown,
}

impl Diagnosis {
    /// Training label: 1 for diabetic, 0 for non-diabetic.
    pub fn label(self) -> Option<u8> {
        match self {
            Diagnosis::Diabetic => Some(1),
            Diagnosis::Nondiabetic => Some(0),
            Diagnosis::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub subject_id: String,
    pub gender: Gender,
    pub diagnosis: Diagnosis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub subject_id: String,
    pub device_id: String,
    pub recorded_at: DateTime<Utc>,
    pub scaled: ScaledFeatureVector<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("duplicate subject '{0}'")]
    DuplicateSubject(String),
    #[error("unknown subject '{0}'")]
    UnknownSubject(String),
    #[error("non-finite feature sample for subject '{0}'")]
    NonFiniteSample(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("invalid separation {0}: must be finite and >= 0")]
    InvalidSeparation(f64),
    #[error("cohort document: {0}")]
    Format(String),
}

/// Validated collection of subjects and their samples.
///
/// Samples are kept sorted by (subject, time, device) so equal cohorts
/// compare and serialize identically regardless of insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Cohort {
    subjects: Vec<Subject>,
    samples: Vec<FeatureSample>,
}

#[derive(Deserialize)]
struct CohortDocument {
    subjects: Vec<Subject>,
    #[serde(default)]
    samples: Vec<FeatureSample>,
}

impl<'de> Deserialize<'de> for Cohort {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = CohortDocument::deserialize(d)?;
        Cohort::new(doc.subjects, doc.samples).map_err(serde::de::Error::custom)
    }
}

fn sample_order(a: &FeatureSample, b: &FeatureSample) -> std::cmp::Ordering {
    a.subject_id
        .cmp(&b.subject_id)
        .then(a.recorded_at.cmp(&b.recorded_at))
        .then_with(|| a.device_id.cmp(&b.device_id))
        .then_with(|| {
            let ka = a.scaled.0.map(f64::to_bits);
            let kb = b.scaled.0.map(f64::to_bits);
            ka.cmp(&kb)
        })
}

impl Cohort {
    pub fn new(
        subjects: Vec<Subject>,
        mut samples: Vec<FeatureSample>,
    ) -> Result<Self, CohortError> {
        let mut seen = HashSet::new();
        for s in &subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(CohortError::DuplicateSubject(s.subject_id.clone()));
            }
        }
        for s in &samples {
            if !seen.contains(s.subject_id.as_str()) {
                return Err(CohortError::UnknownSubject(s.subject_id.clone()));
            }
            if !s.scaled.is_finite() {
                return Err(CohortError::NonFiniteSample(s.subject_id.clone()));
            }
        }
        samples.sort_by(sample_order);
        Ok(Self { subjects, samples })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn samples(&self) -> &[FeatureSample] {
        &self.samples
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    /// The subject's samples in time order.
    pub fn samples_of(&self, id: &str) -> &[FeatureSample] {
        let start = self.samples.partition_point(|s| s.subject_id.as_str() < id);
        let end = self
            .samples
            .partition_point(|s| s.subject_id.as_str() <= id);
        &self.samples[start..end]
    }

    /// A new cohort with `extra` samples added.
    pub fn with_samples(&self, extra: Vec<FeatureSample>) -> Result<Self, CohortError> {
        let mut samples = self.samples.clone();
        samples.extend(extra);
        Self::new(self.subjects.clone(), samples)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cohort serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CohortError> {
        serde_json::from_str(text).map_err(|e| CohortError::Format(e.to_string()))
    }

    /// Subjects of `gender` that pass the default eligibility rule, in
    /// cohort order.
    pub fn eligible_subjects(&self, gender: Gender) -> Vec<&Subject> {
        self.eligible_subjects_with(gender, EligibilityRule::default())
    }

    pub fn eligible_subjects_with(&self, gender: Gender, rule: EligibilityRule) -> Vec<&Subject> {
        self.subjects
            .iter()
            .filter(|s| s.gender == gender)
            .filter(|s| rule.check(self.samples_of(&s.subject_id)) == Eligibility::Eligible)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IneligibleReason {
    NoSamples,
    InsufficientDaysWithTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Eligibility {
    Eligible,
    Ineligible(IneligibleReason),
}

/// Recording sufficiency: at least `min_days` distinct UTC calendar days
/// each holding at least `min_per_day` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityRule {
    pub min_days: usize,
    pub min_per_day: usize,
}

impl Default for EligibilityRule {
    fn default() -> Self {
        Self {
            min_days: 3,
            min_per_day: 2,
        }
    }
}

impl EligibilityRule {
    pub fn check(&self, samples: &[FeatureSample]) -> Eligibility {
        if samples.is_empty() {
            return Eligibility::Ineligible(IneligibleReason::NoSamples);
        }
        let mut per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
        for s in samples {
            *per_day.entry(s.recorded_at.date_naive()).or_default() += 1;
        }
        let full = per_day.values().filter(|&&n| n >= self.min_per_day).count();
        if full >= self.min_days {
            Eligibility::Eligible
        } else {
            Eligibility::Ineligible(IneligibleReason::InsufficientDaysWithTwo)
        }
    }
}

pub fn eligibility(cohort: &Cohort, subject_id: &str) -> Result<Eligibility, CohortError> {
    eligibility_with(cohort, subject_id, EligibilityRule::default())
}

pub fn eligibility_with(
    cohort: &Cohort,
    subject_id: &str,
    rule: EligibilityRule,
) -> Result<Eligibility, CohortError> {
    cohort
        .subject(subject_id)
        .ok_or_else(|| CohortError::UnknownSubject(subject_id.to_string()))?;
    Ok(rule.check(cohort.samples_of(subject_id)))
}

/// One subject's shape in a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub subject_id: String,
    pub gender: Gender,
    pub diagnosis: Diagnosis,
    pub n_samples: usize,
    pub n_days: usize,
}

fn entry(
    id: &str,
    gender: Gender,
    diagnosis: Diagnosis,
    n_samples: usize,
    n_days: usize,
) -> TemplateEntry {
    TemplateEntry {
        subject_id: id.to_string(),
        gender,
        diagnosis,
        n_samples,
        n_days,
    }
}

/// The 24-subject deployment cohort: per-subject sample and day counts.
pub fn table2_template() -> Vec<TemplateEntry> {
    use Diagnosis::{Diabetic as D, Nondiabetic as N};
    use Gender::{Female as F, Male as M};
    let rows: [(&str, Gender, Diagnosis, usize, usize); 24] = [
        ("ID-M1", M, D, 396, 28),
        ("ID-M2", M, D, 201, 30),
        ("ID-M3", M, D, 101, 28),
        ("ID-M4", M, D, 89, 20),
        ("ID-M5", M, D, 83, 24),
        ("ID-M6", M, D, 59, 20),
        ("ID-M7", M, D, 29, 15),
        ("ID-M8", M, D, 22, 11),
        ("ID-M9", M, D, 16, 8),
        ("ID-M10", M, D, 12, 6),
        ("ID-M11", M, D, 11, 7),
        ("ID-M12", M, N, 181, 25),
        ("ID-M13", M, N, 163, 28),
        ("ID-M14", M, N, 147, 29),
        ("ID-M15", M, N, 73, 15),
        ("ID-M16", M, N, 42, 11),
        ("ID-M17", M, N, 30, 13),
        ("ID-F1", F, D, 56, 17),
        ("ID-F2", F, D, 29, 16),
        ("ID-F3", F, D, 17, 4),
        ("ID-F4", F, N, 194, 18),
        ("ID-F5", F, N, 113, 9),
        ("ID-F6", F, N, 62, 19),
        ("ID-F7", F, N, 40, 10),
    ];
    rows.iter()
        .map(|&(id, g, d, n, days)| entry(id, g, d, n, days))
        .collect()
}

/// Centre of the synthetic feature distribution (scaled units).
pub const SYNTH_BASE_MEAN: [f64; 7] = [0.5; 7];
/// Calendar window the synthetic recordings fall into.
const SYNTH_YEAR: i32 = 2024;
const SYNTH_MONTH: u32 = 10;
const SYNTH_WINDOW_DAYS: usize = 31;

fn validate_template(template: &[TemplateEntry]) -> Result<(), CohortError> {
    if template.is_empty() {
        return Err(CohortError::InvalidTemplate("template is empty".into()));
    }
    let mut ids = HashSet::new();
    for e in template {
        if !ids.insert(e.subject_id.as_str()) {
            return Err(CohortError::InvalidTemplate(format!(
                "duplicate subject '{}'",
                e.subject_id
            )));
        }
        if e.n_days == 0 || e.n_days > SYNTH_WINDOW_DAYS {
            return Err(CohortError::InvalidTemplate(format!(
                "subject '{}': days must be in 1..={SYNTH_WINDOW_DAYS}",
                e.subject_id
            )));
        }
        if e.n_samples < e.n_days {
            return Err(CohortError::InvalidTemplate(format!(
                "subject '{}': {} samples cannot cover {} days",
                e.subject_id, e.n_samples, e.n_days
            )));
        }
    }
    Ok(())
}

/// Draws a synthetic cohort.
///
/// Features are unit-variance Gaussians around [`SYNTH_BASE_MEAN`]; diabetic
/// subjects are shifted by `separation` in every feature, and each subject
/// carries a fixed random offset with standard deviation `separation / 4`
/// per feature. Sample `k` falls on the subject's day `k mod n_days`, so
/// every day holds at least two samples whenever `n_samples ≥ 2 · n_days`.
pub fn synth_cohort(
    template: &[TemplateEntry],
    separation: f64,
    seed: u64,
) -> Result<Cohort, CohortError> {
    if !separation.is_finite() || separation < 0.0 {
        return Err(CohortError::InvalidSeparation(separation));
    }
    validate_template(template)?;
    let month_start = Utc
        .with_ymd_and_hms(SYNTH_YEAR, SYNTH_MONTH, 1, 0, 0, 0)
        .single()
        .expect("valid date");
    let mut subjects = Vec::with_capacity(template.len());
    let mut samples = Vec::new();
    for (index, e) in template.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let shift = if e.diagnosis == Diagnosis::Diabetic {
            separation
        } else {
            0.0
        };
        let offset: [f64; 7] = std::array::from_fn(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * separation / 4.0
        });
        let mut days = sample(&mut rng, SYNTH_WINDOW_DAYS, e.n_days).into_vec();
        days.sort_unstable();
        let device_id = format!("cube-{:03}", index + 1);
        for k in 0..e.n_samples {
            let day = days[k % e.n_days] as i64;
            let second = rng.random_range(0..86_400i64);
            let values: [f64; 7] = std::array::from_fn(|f| {
                let z: f64 = rng.sample(StandardNormal);
                SYNTH_BASE_MEAN[f] + shift + offset[f] + z
            });
            samples.push(FeatureSample {
                subject_id: e.subject_id.clone(),
                device_id: device_id.clone(),
                recorded_at: month_start + Duration::days(day) + Duration::seconds(second),
                scaled: ScaledFeatureVector(values),
            });
        }
        subjects.push(Subject {
            subject_id: e.subject_id.clone(),
            gender: e.gender,
            diagnosis: e.diagnosis,
        });
    }
    Cohort::new(subjects, samples)
}
