//! Ingestion service for de-identified voice feature vectors.
//!
//! Devices post scaled 1×7 vectors with subject and device identifiers; the
//! service never sees audio. Records land in a file-backed append-only
//! store that can be exported as a [`Cohort`](voxtriage::cohort::Cohort).

pub mod api;
pub mod record;
pub mod store;

pub use api::{router, serve, AppState};
pub use record::{IngestRecord, ValidationError, SCHEMA_VERSION};
pub use store::{Ack, Store, StoreError, TimeRange};
