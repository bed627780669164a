//! Subject-level leave-one-out triage: per-sample probabilities are averaged
//! per subject and mapped to a three-way claim.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::cohort::{Cohort, Eligibility, EligibilityRule, Gender};
use crate::learners::{fit, AlgorithmKind, AlgorithmSpec, Dataset, LearnError, Model, Row};

pub const DEFAULT_LOW: f64 = 0.4;
pub const DEFAULT_HIGH: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriageError {
    #[error("empty probability list")]
    EmptyList,
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("thresholds must satisfy 0 <= low <= high <= 1 (got {low}, {high})")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("{gender}: {eligible} eligible labelled subject(s), need at least 2")]
    InsufficientSubjects { gender: Gender, eligible: usize },
    #[error("subject '{0}' is not eligible")]
    IneligibleSubject(String),
    #[error("unknown subject '{0}'")]
    UnknownSubject(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Claim bands: `μ > high` flags, `μ < low` clears, anything between
/// (both ends included) stays undecided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    low: f64,
    high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            low: DEFAULT_LOW,
            high: DEFAULT_HIGH,
        }
    }
}

impl Thresholds {
    pub fn new(low: f64, high: f64) -> Result<Self, TriageError> {
        if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low > high {
            return Err(TriageError::InvalidThresholds { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }
}

/// Knobs of the protocol; the defaults are the reference ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TriageConfig {
    pub thresholds: Thresholds,
    pub eligibility: EligibilityRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    /// Flag as diabetic-like (C = 1).
    Positive,
    /// Low risk (C = 0).
    Negative,
    /// C = −1.
    Undecided,
}

impl Decision {
    pub fn code(self) -> i8 {
        match self {
            Decision::Positive => 1,
            Decision::Negative => 0,
            Decision::Undecided => -1,
        }
    }

    pub fn from_code(code: i8) -> Option<Self> {
        match code {
            1 => Some(Decision::Positive),
            0 => Some(Decision::Negative),
            -1 => Some(Decision::Undecided),
            _ => None,
        }
    }
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.code())
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = i8::deserialize(d)?;
        Decision::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid claim {code}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub subject_id: String,
    pub mu_p1: f64,
    pub c: Decision,
    pub n_samples_used: usize,
}

pub fn mean_positive_probability(probs: &[f64]) -> Result<f64, TriageError> {
    if probs.is_empty() {
        return Err(TriageError::EmptyList);
    }
    if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(TriageError::OutOfRange(p));
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

pub fn decide_claim(mu: f64) -> Result<Decision, TriageError> {
    decide_claim_with(mu, Thresholds::default())
}

pub fn decide_claim_with(mu: f64, t: Thresholds) -> Result<Decision, TriageError> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(TriageError::OutOfRange(mu));
    }
    Ok(if mu > t.high {
        Decision::Positive
    } else if mu < t.low {
        Decision::Negative
    } else {
        Decision::Undecided
    })
}

/// Correct over decided claims; 0 when nothing was decided.
pub fn hit_rate(c_correct: usize, c_incorrect: usize) -> f64 {
    let decided = c_correct + c_incorrect;
    if decided == 0 {
        0.0
    } else {
        c_correct as f64 / decided as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Incorrect,
    Undecided,
}

/// One LOO fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub subject_id: String,
    pub truth: u8,
    /// `None` when the remaining subjects cover only one class.
    pub claim: Option<Claim>,
    pub outcome: Outcome,
    /// Subjects whose samples formed the training fold.
    pub training_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gender: Gender,
    pub algorithm: AlgorithmKind,
    pub c_correct: usize,
    pub c_incorrect: usize,
    pub c_undecided: usize,
    pub hit_rate: f64,
    pub holdouts: Vec<HoldoutResult>,
}

impl EvalReport {
    pub fn evaluated(&self) -> usize {
        self.holdouts.len()
    }

    pub fn claims(&self) -> impl Iterator<Item = &Claim> {
        self.holdouts.iter().filter_map(|h| h.claim.as_ref())
    }

    /// True when no fold trained on its own holdout subject.
    pub fn leakage_free(&self) -> bool {
        self.holdouts
            .iter()
            .all(|h| !h.training_subjects.contains(&h.subject_id))
    }
}

fn recorded_millis(s: &crate::cohort::FeatureSample) -> i64 {
    s.recorded_at.timestamp_millis()
}

fn claim_for(
    cohort: &Cohort,
    subject_id: &str,
    model: &Model,
    thresholds: Thresholds,
) -> Result<Claim, TriageError> {
    let samples = cohort.samples_of(subject_id);
    let probs = samples
        .iter()
        .map(|s| model.predict_proba(&s.scaled.0))
        .collect::<Result<Vec<_>, _>>()?;
    let mu = mean_positive_probability(&probs)?;
    Ok(Claim {
        subject_id: subject_id.to_string(),
        mu_p1: mu,
        c: decide_claim_with(mu, thresholds)?,
        n_samples_used: samples.len(),
    })
}

pub fn loo_evaluate(
    cohort: &Cohort,
    gender: Gender,
    spec: &AlgorithmSpec,
) -> Result<EvalReport, TriageError> {
    loo_evaluate_with(cohort, gender, spec, &TriageConfig::default())
}

/// Leave-one-subject-out over the eligible, labelled subjects of `gender`.
pub fn loo_evaluate_with(
    cohort: &Cohort,
    gender: Gender,
    spec: &AlgorithmSpec,
    config: &TriageConfig,
) -> Result<EvalReport, TriageError> {
    let thresholds = config.thresholds;
    let subjects: Vec<(&str, u8)> = cohort
        .eligible_subjects_with(gender, config.eligibility)
        .into_iter()
        .filter_map(|s| s.diagnosis.label().map(|l| (s.subject_id.as_str(), l)))
        .collect();
    if subjects.len() < 2 {
        return Err(TriageError::InsufficientSubjects {
            gender,
            eligible: subjects.len(),
        });
    }

    let holdouts = subjects
        .par_iter()
        .map(|&(holdout, truth)| -> Result<HoldoutResult, TriageError> {
            let mut rows = Vec::new();
            let mut training_subjects = Vec::new();
            for &(other, label) in subjects.iter().filter(|(id, _)| *id != holdout) {
                training_subjects.push(other.to_string());
                rows.extend(cohort.samples_of(other).iter().map(|s| Row {
                    features: s.scaled.0,
                    label,
                    subject_id: other.to_string(),
                    recorded_at: recorded_millis(s),
                }));
            }
            let claim = match fit(spec, &Dataset::new(rows)?) {
                Ok(model) => Some(claim_for(cohort, holdout, &model, thresholds)?),
                Err(LearnError::SingleClassData) => None,
                Err(e) => return Err(e.into()),
            };
            let outcome = match claim.as_ref().map(|c| c.c) {
                None | Some(Decision::Undecided) => Outcome::Undecided,
                Some(c) if c.code() == truth as i8 => Outcome::Correct,
                Some(_) => Outcome::Incorrect,
            };
            Ok(HoldoutResult {
                subject_id: holdout.to_string(),
                truth,
                claim,
                outcome,
                training_subjects,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let count = |o: Outcome| holdouts.iter().filter(|h| h.outcome == o).count();
    let (c_correct, c_incorrect, c_undecided) = (
        count(Outcome::Correct),
        count(Outcome::Incorrect),
        count(Outcome::Undecided),
    );
    Ok(EvalReport {
        gender,
        algorithm: spec.kind,
        c_correct,
        c_incorrect,
        c_undecided,
        hit_rate: hit_rate(c_correct, c_incorrect),
        holdouts,
    })
}

/// Trains on every eligible labelled subject of `gender`.
pub fn fit_population(
    cohort: &Cohort,
    gender: Gender,
    spec: &AlgorithmSpec,
    rule: EligibilityRule,
) -> Result<Model, TriageError> {
    let mut rows = Vec::new();
    for s in cohort.eligible_subjects_with(gender, rule) {
        let Some(label) = s.diagnosis.label() else {
            continue;
        };
        rows.extend(cohort.samples_of(&s.subject_id).iter().map(|x| Row {
            features: x.scaled.0,
            label,
            subject_id: s.subject_id.clone(),
            recorded_at: recorded_millis(x),
        }));
    }
    Ok(fit(spec, &Dataset::new(rows)?)?)
}

pub fn triage_subject(
    cohort: &Cohort,
    subject_id: &str,
    model: &Model,
) -> Result<Claim, TriageError> {
    triage_subject_with(cohort, subject_id, model, &TriageConfig::default())
}

pub fn triage_subject_with(
    cohort: &Cohort,
    subject_id: &str,
    model: &Model,
    config: &TriageConfig,
) -> Result<Claim, TriageError> {
    if cohort.subject(subject_id).is_none() {
        return Err(TriageError::UnknownSubject(subject_id.to_string()));
    }
    if config.eligibility.check(cohort.samples_of(subject_id)) != Eligibility::Eligible {
        return Err(TriageError::IneligibleSubject(subject_id.to_string()));
    }
    claim_for(cohort, subject_id, model, config.thresholds)
}

pub const REPORT_COLUMNS: [&str; 5] = [
    "Algorithm",
    "C_correct",
    "C_incorrect",
    "C_undecided",
    "Hit rate",
];

fn sorted(reports: &[EvalReport]) -> Vec<&EvalReport> {
    let mut v: Vec<&EvalReport> = reports.iter().collect();
    v.sort_by(|a, b| {
        b.hit_rate
            .total_cmp(&a.hit_rate)
            .then_with(|| a.algorithm.name().cmp(b.algorithm.name()))
    });
    v
}

fn genders_present(reports: &[EvalReport]) -> Vec<Gender> {
    Gender::ALL
        .into_iter()
        .filter(|g| reports.iter().any(|r| r.gender == *g))
        .collect()
}

const ALGO_WIDTH: usize = 10;

fn table_header(out: &mut String) {
    let [a, b, c, d, e] = REPORT_COLUMNS;
    let _ = writeln!(out, "{a:<ALGO_WIDTH$} | {b} | {c} | {d} | {e}");
    let _ = writeln!(
        out,
        "{}-+-{}-+-{}-+-{}-+-{}",
        "-".repeat(ALGO_WIDTH),
        "-".repeat(b.len()),
        "-".repeat(c.len()),
        "-".repeat(d.len()),
        "-".repeat(e.len())
    );
}

/// Plain-text tables, one per gender, rows by hit rate (descending) then
/// algorithm name.
pub fn render_report(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let genders = genders_present(reports);
    if genders.is_empty() {
        table_header(&mut out);
        return out;
    }
    for (i, g) in genders.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let group: Vec<EvalReport> = reports.iter().filter(|r| r.gender == g).cloned().collect();
        let n = group
            .iter()
            .map(|r| r.c_correct + r.c_incorrect + r.c_undecided)
            .max()
            .unwrap_or(0);
        let _ = writeln!(out, "Diagnostic performance using LOO, {g} (n={n})");
        table_header(&mut out);
        for r in sorted(&group) {
            let _ = writeln!(
                out,
                "{:<ALGO_WIDTH$} | {:>9} | {:>11} | {:>11} | {:>8.3}",
                r.algorithm.name(),
                r.c_correct,
                r.c_incorrect,
                r.c_undecided,
                r.hit_rate
            );
        }
    }
    out
}

/// CSV with a leading gender column followed by the report columns.
pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = format!("Gender,{}\n", REPORT_COLUMNS.join(","));
    for g in genders_present(reports) {
        let group: Vec<EvalReport> = reports.iter().filter(|r| r.gender == g).cloned().collect();
        for r in sorted(&group) {
            let _ = writeln!(
                out,
                "{g},{},{},{},{},{:.3}",
                r.algorithm.name(),
                r.c_correct,
                r.c_incorrect,
                r.c_undecided,
                r.hit_rate
            );
        }
    }
    out
}
