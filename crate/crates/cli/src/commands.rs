use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use voxtriage::acoustics::{extract_features, FeatureVector};
use voxtriage::audio::decode_wav;
use voxtriage::cohort::{
    synth_cohort, table2_template, Cohort, EligibilityRule, Gender, TemplateEntry,
};
use voxtriage::learners::{AlgorithmKind, AlgorithmSpec};
use voxtriage::scaling::{scale, ScaledFeatureVector};
use voxtriage::triage::{
    fit_population, loo_evaluate_with, render_csv, render_report, triage_subject_with, EvalReport,
    Thresholds, TriageConfig,
};
use voxtriage_service::{AppState, Store};

use crate::{emit, Cli, Command, Failure, Format, ThresholdArgs};

const FEATURE_NAMES: [&str; 7] = [
    "articulation_rate",
    "speaking_rate",
    "jitter",
    "shimmer",
    "f0_mean",
    "f0_sd",
    "f1_variance",
];

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Extract { files } => extract(cli, files),
        Command::Scale { values, input } => scale_cmd(cli, values, input.as_deref()),
        Command::Synth { template, delta } => synth(cli, template, *delta),
        Command::Evaluate {
            cohort,
            genders,
            algorithms,
            thresholds,
        } => evaluate(cli, cohort, genders, algorithms, *thresholds),
        Command::Triage {
            cohort,
            subject,
            algorithm,
            thresholds,
        } => triage(cli, cohort, subject, *algorithm, *thresholds),
        Command::Serve {
            host,
            port,
            data_dir,
            token,
        } => serve(host, *port, data_dir, token.clone()),
        Command::Report { files } => report(cli, files),
    }
}

fn config(t: ThresholdArgs) -> Result<TriageConfig, Failure> {
    let thresholds = Thresholds::new(t.low, t.high).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(TriageConfig {
        thresholds,
        eligibility: EligibilityRule::default(),
    })
}

fn read_cohort(path: &Path) -> anyhow::Result<Cohort> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Cohort::from_json(&text).with_context(|| format!("invalid cohort {}", path.display()))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

type Extracted = Result<(FeatureVector<f64>, ScaledFeatureVector<f64>), String>;

fn extract_one(path: &Path) -> Extracted {
    let bytes = std::fs::read(path).map_err(|e| format!("cannot read: {e}"))?;
    let clip = decode_wav::<f64>(&bytes).map_err(|e| e.to_string())?;
    let raw = extract_features(&clip).map_err(|e| e.to_string())?;
    let scaled = scale(&raw).map_err(|e| e.to_string())?;
    Ok((raw, scaled))
}

fn extract(cli: &Cli, files: &[std::path::PathBuf]) -> Result<(), Failure> {
    let results: Vec<Extracted> = files.par_iter().map(|p| extract_one(p)).collect();
    let mut out = String::new();
    match cli.format {
        Format::Json => {
            let items: Vec<Value> = files
                .iter()
                .zip(&results)
                .map(|(p, r)| match r {
                    Ok((raw, scaled)) => {
                        json!({"file": p.display().to_string(), "raw": raw, "scaled": scaled})
                    }
                    Err(e) => json!({"file": p.display().to_string(), "error": e}),
                })
                .collect();
            out = serde_json::to_string_pretty(&items).expect("json") + "\n";
        }
        Format::Csv => {
            let scaled_names: Vec<String> = FEATURE_NAMES
                .iter()
                .map(|n| format!("{n}_scaled"))
                .collect();
            writeln!(
                out,
                "file,error,{},{}",
                FEATURE_NAMES.join(","),
                scaled_names.join(",")
            )
            .unwrap();
            for (p, r) in files.iter().zip(&results) {
                let file = csv_field(&p.display().to_string());
                match r {
                    Ok((raw, scaled)) => {
                        writeln!(out, "{file},,{},{}", join(&raw.to_array()), join(&scaled.0))
                            .unwrap()
                    }
                    Err(e) => writeln!(out, "{file},{}{}", csv_field(e), ",".repeat(14)).unwrap(),
                }
            }
        }
        Format::Text => {
            for (p, r) in files.iter().zip(&results) {
                writeln!(out, "{}", p.display()).unwrap();
                match r {
                    Ok((raw, scaled)) => {
                        for ((name, v), s) in FEATURE_NAMES.iter().zip(raw.to_array()).zip(scaled.0)
                        {
                            writeln!(out, "  {name:<18} {v:>14.6}  scaled {s:>10.6}").unwrap();
                        }
                    }
                    Err(e) => writeln!(out, "  error: {e}").unwrap(),
                }
            }
        }
    }
    emit(cli, &out)?;
    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed == results.len() {
        return Err(Failure::Runtime(anyhow!("all {failed} file(s) failed")));
    }
    Ok(())
}

fn raw_from_json(v: &Value) -> anyhow::Result<FeatureVector<f64>> {
    if v.is_object() {
        return Ok(serde_json::from_value(v.clone())?);
    }
    let arr: [f64; 7] =
        serde_json::from_value(v.clone()).context("expected 7 numbers or a feature object")?;
    Ok(FeatureVector::from_array(arr))
}

fn scale_cmd(cli: &Cli, values: &[f64], input: Option<&Path>) -> Result<(), Failure> {
    let raws: Vec<FeatureVector<f64>> = match input {
        Some(path) => {
            let mut text = String::new();
            if path == Path::new("-") {
                std::io::stdin().read_to_string(&mut text)?;
            } else {
                text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
            }
            let v: Value = serde_json::from_str(&text).context("input is not JSON")?;
            match &v {
                Value::Array(items) if items.first().is_some_and(|i| !i.is_number()) => items
                    .iter()
                    .map(raw_from_json)
                    .collect::<anyhow::Result<_>>()?,
                _ => vec![raw_from_json(&v)?],
            }
        }
        None if values.len() == 7 => {
            vec![FeatureVector::from_array(
                values.try_into().expect("seven values"),
            )]
        }
        None => return Err(Failure::Usage("give 7 values or --input".into())),
    };
    let scaled: Vec<ScaledFeatureVector<f64>> = raws
        .iter()
        .map(|r| scale(r).map_err(|e| anyhow!(e)))
        .collect::<anyhow::Result<_>>()?;
    let out = match cli.format {
        Format::Json => serde_json::to_string_pretty(&scaled).expect("json") + "\n",
        Format::Csv => {
            let mut s = FEATURE_NAMES.map(|n| format!("{n}_scaled")).join(",") + "\n";
            for v in &scaled {
                s += &(join(&v.0) + "\n");
            }
            s
        }
        Format::Text => scaled
            .iter()
            .map(|v| v.0.iter().map(f64::to_string).collect::<Vec<_>>().join(" ") + "\n")
            .collect(),
    };
    emit(cli, &out)?;
    Ok(())
}

fn synth(cli: &Cli, template: &str, delta: f64) -> Result<(), Failure> {
    let entries: Vec<TemplateEntry> = if template.eq_ignore_ascii_case("table2") {
        table2_template()
    } else if Path::new(template).is_file() {
        let text = std::fs::read_to_string(template)?;
        serde_json::from_str(&text).with_context(|| format!("invalid template file {template}"))?
    } else {
        return Err(Failure::Usage(format!(
            "unknown template '{template}' (built-in: table2, or a JSON template file)"
        )));
    };
    let cohort = synth_cohort(&entries, delta, cli.seed)?;
    emit(cli, &(cohort.to_json() + "\n"))?;
    Ok(())
}

fn render(cli: &Cli, reports: &[EvalReport]) -> String {
    match cli.format {
        Format::Text => render_report(reports),
        Format::Csv => render_csv(reports),
        Format::Json => serde_json::to_string_pretty(reports).expect("json") + "\n",
    }
}

fn evaluate(
    cli: &Cli,
    path: &Path,
    genders: &[Gender],
    algorithms: &[AlgorithmKind],
    thresholds: ThresholdArgs,
) -> Result<(), Failure> {
    let config = config(thresholds)?;
    let cohort = read_cohort(path)?;
    let genders: Vec<Gender> = if genders.is_empty() {
        Gender::ALL.to_vec()
    } else {
        dedup(genders)
    };
    let algorithms = if algorithms.is_empty() {
        AlgorithmKind::ALL.to_vec()
    } else {
        dedup(algorithms)
    };
    let mut reports = Vec::new();
    for &gender in &genders {
        for &kind in &algorithms {
            let spec = AlgorithmSpec::new(kind, cli.seed);
            let report = loo_evaluate_with(&cohort, gender, &spec, &config)
                .with_context(|| format!("{gender} / {kind}"))?;
            reports.push(report);
        }
    }
    emit(cli, &render(cli, &reports))?;
    Ok(())
}

fn dedup<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

#[derive(Serialize)]
struct TriageOutput<'a> {
    subject_id: &'a str,
    algorithm: AlgorithmKind,
    mu_p1: f64,
    claim: i8,
    n_samples_used: usize,
    training_subjects: usize,
}

fn triage(
    cli: &Cli,
    path: &Path,
    subject_id: &str,
    kind: AlgorithmKind,
    thresholds: ThresholdArgs,
) -> Result<(), Failure> {
    let config = config(thresholds)?;
    let cohort = read_cohort(path)?;
    let subject = cohort
        .subject(subject_id)
        .ok_or_else(|| anyhow!("unknown subject '{subject_id}'"))?;
    // the subject under triage never contributes to its own model
    let others = Cohort::new(
        cohort
            .subjects()
            .iter()
            .filter(|s| s.subject_id != subject_id)
            .cloned()
            .collect(),
        cohort
            .samples()
            .iter()
            .filter(|s| s.subject_id != subject_id)
            .cloned()
            .collect(),
    )?;
    let training = others
        .eligible_subjects_with(subject.gender, config.eligibility)
        .iter()
        .filter(|s| s.diagnosis.label().is_some())
        .count();
    let model = fit_population(
        &others,
        subject.gender,
        &AlgorithmSpec::new(kind, cli.seed),
        config.eligibility,
    )?;
    let claim = triage_subject_with(&cohort, subject_id, &model, &config)?;
    let out = TriageOutput {
        subject_id,
        algorithm: kind,
        mu_p1: claim.mu_p1,
        claim: claim.c.code(),
        n_samples_used: claim.n_samples_used,
        training_subjects: training,
    };
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&out).expect("json") + "\n",
        Format::Csv => format!(
            "subject_id,algorithm,mu_p1,claim,n_samples_used,training_subjects\n{},{},{:.6},{},{},{}\n",
            csv_field(subject_id),
            kind,
            out.mu_p1,
            out.claim,
            out.n_samples_used,
            out.training_subjects
        ),
        Format::Text => format!(
            "{subject_id}: claim {} (mu_p1 {:.3} over {} samples; {kind} trained on {} subjects)\n",
            out.claim, out.mu_p1, out.n_samples_used, out.training_subjects
        ),
    };
    emit(cli, &text)?;
    Ok(())
}

fn report(cli: &Cli, files: &[std::path::PathBuf]) -> Result<(), Failure> {
    let mut reports = Vec::new();
    for path in files {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value = serde_json::from_str(&text)
            .with_context(|| format!("{} is not JSON", path.display()))?;
        if v.is_array() {
            reports.extend(serde_json::from_value::<Vec<EvalReport>>(v)?);
        } else {
            reports.push(serde_json::from_value::<EvalReport>(v)?);
        }
    }
    emit(cli, &render(cli, &reports))?;
    Ok(())
}

fn serve(host: &str, port: u16, data_dir: &Path, token: Option<String>) -> Result<(), Failure> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let store = Arc::new(
            Store::open(data_dir)
                .with_context(|| format!("opening store at {}", data_dir.display()))?,
        );
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        let addr = listener.local_addr()?;
        eprintln!("listening on http://{addr}");
        voxtriage_service::serve(listener, AppState::new(store, token), shutdown_signal()).await?;
        eprintln!("shut down");
        Ok::<(), anyhow::Error>(())
    })?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
