use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use voxtriage::cohort::*;
use voxtriage::learners::{fit, AlgorithmKind, AlgorithmSpec, Dataset, Row};
use voxtriage::scaling::ScaledFeatureVector;

fn day(d: i64, hour: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 10, 1, 0, 0, 0).unwrap() + Duration::days(d) + Duration::hours(hour)
}

fn sample(id: &str, at: DateTime<Utc>) -> FeatureSample {
    FeatureSample {
        subject_id: id.into(),
        device_id: "dev".into(),
        recorded_at: at,
        scaled: ScaledFeatureVector([0.5; 7]),
    }
}

fn subject(id: &str) -> Subject {
    Subject {
        subject_id: id.into(),
        gender: Gender::Male,
        diagnosis: Diagnosis::Diabetic,
    }
}

fn cohort_with_days(counts: &[usize]) -> Cohort {
    let mut samples = Vec::new();
    for (d, &n) in counts.iter().enumerate() {
        for h in 0..n {
            samples.push(sample("S1", day(d as i64, h as i64)));
        }
    }
    Cohort::new(vec![subject("S1")], samples).unwrap()
}

#[test]
fn eligibility_boundaries() {
    assert_eq!(
        eligibility(&cohort_with_days(&[2, 2, 2]), "S1").unwrap(),
        Eligibility::Eligible
    );
    assert_eq!(
        eligibility(&cohort_with_days(&[5, 1, 1]), "S1").unwrap(),
        Eligibility::Ineligible(IneligibleReason::InsufficientDaysWithTwo)
    );
    assert_eq!(
        eligibility(&cohort_with_days(&[]), "S1").unwrap(),
        Eligibility::Ineligible(IneligibleReason::NoSamples)
    );
    assert_eq!(
        eligibility(&cohort_with_days(&[2, 2]), "S2"),
        Err(CohortError::UnknownSubject("S2".into()))
    );
}

#[test]
fn calendar_days_are_utc() {
    // 23:30 and 00:30 UTC fall on different days even though they are an hour apart
    let late = Utc.with_ymd_and_hms(2024, 10, 1, 23, 30, 0).unwrap();
    let samples: Vec<FeatureSample> = (0..3)
        .flat_map(|d| {
            let base = late + Duration::days(d);
            [sample("S1", base), sample("S1", base + Duration::hours(1))]
        })
        .collect();
    let c = Cohort::new(vec![subject("S1")], samples).unwrap();
    assert_eq!(
        eligibility(&c, "S1").unwrap(),
        Eligibility::Ineligible(IneligibleReason::InsufficientDaysWithTwo)
    );
}

#[test]
fn cohort_validation() {
    assert_eq!(
        Cohort::new(vec![subject("A"), subject("A")], vec![]),
        Err(CohortError::DuplicateSubject("A".into()))
    );
    assert_eq!(
        Cohort::new(vec![subject("A")], vec![sample("B", day(0, 0))]),
        Err(CohortError::UnknownSubject("B".into()))
    );
    let mut bad = sample("A", day(0, 0));
    bad.scaled.0[3] = f64::NAN;
    assert_eq!(
        Cohort::new(vec![subject("A")], vec![bad]),
        Err(CohortError::NonFiniteSample("A".into()))
    );
}

#[test]
fn table2_template_shape() {
    let t = table2_template();
    assert_eq!(t.len(), 24);
    let count = |g: Gender, d: Diagnosis| {
        t.iter()
            .filter(|e| e.gender == g && e.diagnosis == d)
            .count()
    };
    assert_eq!(count(Gender::Male, Diagnosis::Diabetic), 11);
    assert_eq!(count(Gender::Male, Diagnosis::Nondiabetic), 6);
    assert_eq!(count(Gender::Female, Diagnosis::Diabetic), 3);
    assert_eq!(count(Gender::Female, Diagnosis::Nondiabetic), 4);
    let m1 = &t[0];
    assert_eq!(
        (m1.subject_id.as_str(), m1.n_samples, m1.n_days),
        ("ID-M1", 396, 28)
    );
    let f3 = t.iter().find(|e| e.subject_id == "ID-F3").unwrap();
    assert_eq!((f3.n_samples, f3.n_days), (17, 4));
}

#[test]
fn synthetic_cohort_follows_template() {
    let t = table2_template();
    let c = synth_cohort(&t, 1.0, 42).unwrap();
    assert_eq!(c.subjects().len(), 24);
    for e in &t {
        let s = c.samples_of(&e.subject_id);
        assert_eq!(s.len(), e.n_samples, "{}", e.subject_id);
        let days: BTreeSet<_> = s.iter().map(|x| x.recorded_at.date_naive()).collect();
        assert_eq!(days.len(), e.n_days, "{}", e.subject_id);
        assert!(s.windows(2).all(|w| w[0].recorded_at <= w[1].recorded_at));
        assert_eq!(
            eligibility(&c, &e.subject_id).unwrap(),
            Eligibility::Eligible,
            "{}",
            e.subject_id
        );
    }
    assert_eq!(c.eligible_subjects(Gender::Male).len(), 17);
    assert_eq!(c.eligible_subjects(Gender::Female).len(), 7);
}

#[test]
fn synthetic_cohort_is_seeded() {
    let t = table2_template();
    let a = synth_cohort(&t, 0.0, 5).unwrap();
    assert_eq!(a, synth_cohort(&t, 0.0, 5).unwrap());
    let b = synth_cohort(&t, 0.0, 6).unwrap();
    assert_ne!(a.samples(), b.samples());
    assert_eq!(a.subjects(), b.subjects());
}

#[test]
fn synthetic_cohort_rejects_bad_input() {
    let t = table2_template();
    assert!(matches!(
        synth_cohort(&[], 1.0, 0),
        Err(CohortError::InvalidTemplate(_))
    ));
    assert_eq!(
        synth_cohort(&t, -0.5, 0),
        Err(CohortError::InvalidSeparation(-0.5))
    );
    let mut short = t[..1].to_vec();
    short[0].n_samples = 3;
    short[0].n_days = 5;
    assert!(matches!(
        synth_cohort(&short, 1.0, 0),
        Err(CohortError::InvalidTemplate(_))
    ));
    let mut dup = t[..2].to_vec();
    dup[1].subject_id = dup[0].subject_id.clone();
    assert!(matches!(
        synth_cohort(&dup, 1.0, 0),
        Err(CohortError::InvalidTemplate(_))
    ));
}

#[test]
fn json_round_trip() {
    let c = synth_cohort(&table2_template()[17..], 2.0, 9).unwrap();
    let back = Cohort::from_json(&c.to_json()).unwrap();
    assert_eq!(back, c);
    let broken = r#"{"subjects":[],"samples":[{"subject_id":"X","device_id":"d","recorded_at":"2024-10-01T00:00:00Z","scaled":[0,0,0,0,0,0,0]}]}"#;
    assert!(matches!(
        Cohort::from_json(broken),
        Err(CohortError::Format(_))
    ));
}

fn pooled_rows(c: &Cohort) -> Vec<Row> {
    c.subjects()
        .iter()
        .flat_map(|s| {
            let label = s.diagnosis.label().unwrap();
            c.samples_of(&s.subject_id).iter().map(move |x| Row {
                features: x.scaled.0,
                label,
                subject_id: s.subject_id.clone(),
                recorded_at: x.recorded_at.timestamp_millis(),
            })
        })
        .collect()
}

#[test]
fn separated_cohort_is_learnable_by_gnb() {
    for seed in 0..20 {
        let c = synth_cohort(&table2_template(), 3.0, seed).unwrap();
        let rows = pooled_rows(&c);
        let model = fit(
            &AlgorithmSpec::new(AlgorithmKind::GaussianNaiveBayes, seed),
            &Dataset::new(rows.clone()).unwrap(),
        )
        .unwrap();
        let correct = rows
            .iter()
            .filter(|r| (model.predict_proba(&r.features).unwrap() > 0.5) == (r.label == 1))
            .count();
        let acc = correct as f64 / rows.len() as f64;
        assert!(acc >= 0.95, "seed {seed}: accuracy {acc}");
    }
}

/// Two-sided permutation test on the difference of class means of the
/// feature sum.
fn permutation_p(rows: &[Row], rng: &mut ChaCha8Rng, rounds: usize) -> f64 {
    let score: Vec<f64> = rows.iter().map(|r| r.features.iter().sum()).collect();
    let mut labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let stat = |labels: &[u8]| {
        let (mut s, mut n) = ([0.0; 2], [0usize; 2]);
        for (v, &l) in score.iter().zip(labels) {
            s[usize::from(l)] += v;
            n[usize::from(l)] += 1;
        }
        (s[1] / n[1] as f64 - s[0] / n[0] as f64).abs()
    };
    let observed = stat(&labels);
    let mut extreme = 0;
    for _ in 0..rounds {
        labels.shuffle(rng);
        if stat(&labels) >= observed {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (rounds + 1) as f64
}

#[test]
fn null_cohort_labels_are_independent_of_features() {
    let male: Vec<TemplateEntry> = table2_template()
        .into_iter()
        .filter(|e| e.gender == Gender::Male)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let significant = (0..20)
        .filter(|&seed| {
            let c = synth_cohort(&male, 0.0, seed).unwrap();
            permutation_p(&pooled_rows(&c), &mut rng, 999) <= 0.01
        })
        .count();
    // 20 tests at the 1% level: more than one rejection would be suspicious
    assert!(
        significant <= 1,
        "{significant} of 20 seeds rejected independence"
    );
}

proptest! {
    #[test]
    fn adding_samples_never_revokes_eligibility(
        base in prop::collection::vec((0i64..10, 0i64..24), 0..30),
        extra in prop::collection::vec((0i64..10, 0i64..24), 1..10),
    ) {
        let make = |v: &[(i64, i64)]| v.iter().map(|&(d, h)| sample("S1", day(d, h))).collect::<Vec<_>>();
        let c = Cohort::new(vec![subject("S1")], make(&base)).unwrap();
        let before = eligibility(&c, "S1").unwrap();
        let after = eligibility(&c.with_samples(make(&extra)).unwrap(), "S1").unwrap();
        if before == Eligibility::Eligible {
            prop_assert_eq!(after, Eligibility::Eligible);
        }
    }
}
