//! Wire schema for one scaled feature vector and its validation.
//!
//! The schema deliberately has no field that could carry audio: unknown
//! fields are rejected, so a client cannot smuggle a recording through.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use voxtriage::cohort::FeatureSample;
use voxtriage::scaling::ScaledFeatureVector;

/// Schema versions this build accepts.
pub const SCHEMA_VERSION: u64 = 1;
/// Longest accepted subject or device identifier, in bytes.
pub const MAX_ID_LEN: usize = 128;

const FIELDS: [&str; 5] = [
    "subject_id",
    "device_id",
    "vector",
    "recorded_at",
    "schema_version",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{field}: {message}")]
pub struct ValidationError {
    /// Offending field; empty when the body itself is unusable.
    pub field: String,
    pub message: String,
}

impl ValidationError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

/// A validated ingest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRecord {
    pub subject_id: String,
    pub device_id: String,
    pub vector: [f64; 7],
    pub recorded_at: DateTime<Utc>,
    pub schema_version: u64,
}

impl IngestRecord {
    /// Parses and validates a JSON request body.
    pub fn from_json(body: &[u8]) -> Result<Self, ValidationError> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| ValidationError::new("", format!("body is not valid JSON: {e}")))?;
        let Value::Object(map) = value else {
            return Err(ValidationError::new("", "body must be a JSON object"));
        };
        Self::from_map(&map)
    }

    fn from_map(map: &Map<String, Value>) -> Result<Self, ValidationError> {
        if let Some(extra) = map.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(ValidationError::new(extra, "unknown field"));
        }
        let record = Self {
            subject_id: identifier(map, "subject_id")?,
            device_id: identifier(map, "device_id")?,
            vector: vector(map)?,
            recorded_at: timestamp(map)?,
            schema_version: schema_version(map)?,
        };
        Ok(record)
    }

    /// Checks a record built in code against the same rules as the wire.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let value = serde_json::to_value(self).expect("record serializes");
        let Value::Object(map) = value else {
            unreachable!()
        };
        Self::from_map(&map).map(|_| ())
    }

    /// Content hash over (subject, device, instant, vector bits): replays of
    /// the same measurement map to the same id whatever offset the client
    /// wrote the timestamp in.
    pub fn record_id(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.subject_id, &self.device_id] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update(canonical_time(&self.recorded_at).as_bytes());
        for v in self.vector {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn to_sample(&self) -> FeatureSample {
        FeatureSample {
            subject_id: self.subject_id.clone(),
            device_id: self.device_id.clone(),
            recorded_at: self.recorded_at,
            scaled: ScaledFeatureVector(self.vector),
        }
    }
}

pub(crate) fn canonical_time(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn identifier(map: &Map<String, Value>, field: &str) -> Result<String, ValidationError> {
    match map.get(field) {
        None => Err(ValidationError::new(field, "missing")),
        Some(Value::String(s)) if s.trim().is_empty() => Err(ValidationError::new(field, "empty")),
        Some(Value::String(s)) if s.len() > MAX_ID_LEN => Err(ValidationError::new(
            field,
            format!("longer than {MAX_ID_LEN} bytes"),
        )),
        Some(Value::String(s)) if s.chars().any(char::is_control) => {
            Err(ValidationError::new(field, "contains control characters"))
        }
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ValidationError::new(field, "must be a string")),
    }
}

fn vector(map: &Map<String, Value>) -> Result<[f64; 7], ValidationError> {
    let field = "vector";
    let items = match map.get(field) {
        None => return Err(ValidationError::new(field, "missing")),
        Some(Value::Array(items)) => items,
        Some(_) => return Err(ValidationError::new(field, "must be an array of 7 numbers")),
    };
    if items.len() != 7 {
        return Err(ValidationError::new(
            field,
            format!("expected 7 values, got {}", items.len()),
        ));
    }
    let mut out = [0.0; 7];
    for (slot, item) in out.iter_mut().zip(items) {
        *slot = item
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ValidationError::new(field, "values must be finite numbers"))?;
    }
    Ok(out)
}

fn timestamp(map: &Map<String, Value>) -> Result<DateTime<Utc>, ValidationError> {
    let field = "recorded_at";
    match map.get(field) {
        None => Err(ValidationError::new(field, "missing")),
        Some(Value::String(s)) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| ValidationError::new(field, format!("not an ISO-8601 timestamp: {e}"))),
        Some(_) => Err(ValidationError::new(field, "must be a string")),
    }
}

fn schema_version(map: &Map<String, Value>) -> Result<u64, ValidationError> {
    let field = "schema_version";
    match map.get(field).map(Value::as_u64) {
        None => Err(ValidationError::new(field, "missing")),
        Some(Some(SCHEMA_VERSION)) => Ok(SCHEMA_VERSION),
        Some(Some(v)) => Err(ValidationError::new(
            field,
            format!("unsupported version {v}"),
        )),
        Some(None) => Err(ValidationError::new(
            field,
            "must be a non-negative integer",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body() -> Value {
        serde_json::json!({
            "subject_id": "ID-M1",
            "device_id": "cube-7",
            "vector": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            "recorded_at": "2024-10-03T09:15:00Z",
            "schema_version": 1
        })
    }

    fn parse(v: &Value) -> Result<IngestRecord, ValidationError> {
        IngestRecord::from_json(v.to_string().as_bytes())
    }

    #[test]
    fn accepts_valid_body() {
        let r = parse(&body()).unwrap();
        assert_eq!(r.vector[6], 0.7);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn rejects_short_vector() {
        let mut b = body();
        b["vector"] = serde_json::json!([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(parse(&b).unwrap_err().field, "vector");
    }

    #[test]
    fn rejects_audio_payload() {
        let mut b = body();
        b["audio"] = Value::String("UklGRg==".into());
        assert_eq!(parse(&b).unwrap_err().field, "audio");
    }

    #[test]
    fn rejects_bad_fields() {
        for (field, v) in [
            ("subject_id", Value::String(" ".into())),
            ("device_id", Value::from(3)),
            ("recorded_at", Value::String("yesterday".into())),
            ("schema_version", Value::from(2)),
            ("vector", serde_json::json!([0, 0, 0, "x", 0, 0, 0])),
        ] {
            let mut b = body();
            b[field] = v;
            assert_eq!(parse(&b).unwrap_err().field, field);
        }
        let mut b = body();
        b.as_object_mut().unwrap().remove("recorded_at");
        assert_eq!(parse(&b).unwrap_err().field, "recorded_at");
        assert_eq!(IngestRecord::from_json(b"[1]").unwrap_err().field, "");
    }

    #[test]
    fn record_id_ignores_timestamp_offset() {
        let a = parse(&body()).unwrap();
        let mut b = body();
        b["recorded_at"] = Value::String("2024-10-03T10:15:00+01:00".into());
        let b = parse(&b).unwrap();
        assert_eq!(a.record_id(), b.record_id());
        let mut c = body();
        c["vector"][0] = Value::from(0.1000000001);
        assert_ne!(a.record_id(), parse(&c).unwrap().record_id());
    }
}
