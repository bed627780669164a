//! Append-only JSON-lines document store, one file per subject.
//!
//! Layout under the data directory:
//!
//! ```text
//! index.jsonl              one {"subject_id", "file"} line per partition
//! partitions/<hex>.jsonl   one {"record_id", "record"} line per record
//! ```
//!
//! A partition is registered in the index (and the index synced) before its
//! file is created, and every record line is synced before the ingest is
//! acknowledged. A torn final line left by a crash is dropped and the file
//! truncated back to its last complete line on open.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;
use voxtriage::cohort::{Cohort, CohortError, Subject};

use crate::record::{IngestRecord, ValidationError};

const INDEX_FILE: &str = "index.jsonl";
const PARTITION_DIR: &str = "partitions";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("validation failed: {0}")]
    Validation(#[from] ValidationError),
    #[error("storage unavailable: {0}")]
    Unavailable(#[from] io::Error),
    #[error("corrupt store file {path} at line {line}")]
    Corrupt { path: PathBuf, line: usize },
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

/// Result of an ingest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub record_id: String,
    /// False when the record was already stored (a replay).
    pub created: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    subject_id: String,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredRecord {
    record_id: String,
    record: IngestRecord,
}

struct Partition {
    file: File,
    records: Vec<StoredRecord>,
    ids: HashSet<String>,
}

/// Half-open time window `[from, to)`; either end may be open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimeRange {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl TimeRange {
    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        self.from.is_none_or(|f| *t >= f) && self.to.is_none_or(|e| *t < e)
    }
}

pub struct Store {
    root: PathBuf,
    index: Mutex<File>,
    partitions: RwLock<HashMap<String, Arc<Mutex<Partition>>>>,
}

fn partition_file_name(subject_id: &str) -> String {
    format!("{}.jsonl", hex::encode(subject_id.as_bytes()))
}

fn sync_dir(path: &Path) -> io::Result<()> {
    File::open(path)?.sync_all()
}

/// Reads complete JSON lines, truncating a torn tail in place.
fn load_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let bytes = fs::read(path)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut out = Vec::new();
    for (n, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        out.push(
            serde_json::from_slice(line).map_err(|_| StoreError::Corrupt {
                path: path.to_owned(),
                line: n + 1,
            })?,
        );
    }
    if complete < bytes.len() {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(complete as u64)?;
        f.sync_all()?;
    }
    Ok(out)
}

fn append_line<T: Serialize>(file: &mut File, value: &T) -> io::Result<()> {
    let mut line = serde_json::to_vec(value).map_err(io::Error::other)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()
}

fn open_append(path: &Path) -> io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join(PARTITION_DIR))?;
        let index_path = root.join(INDEX_FILE);
        let index = open_append(&index_path)?;
        sync_dir(&root)?;

        let mut partitions = HashMap::new();
        for entry in load_lines::<IndexLine>(&index_path)? {
            let path = root.join(PARTITION_DIR).join(&entry.file);
            let records: Vec<StoredRecord> = if path.exists() {
                load_lines(&path)?
            } else {
                Vec::new()
            };
            let ids = records.iter().map(|r| r.record_id.clone()).collect();
            let partition = Partition {
                file: open_append(&path)?,
                records,
                ids,
            };
            partitions.insert(entry.subject_id, Arc::new(Mutex::new(partition)));
        }
        Ok(Self {
            root,
            index: Mutex::new(index),
            partitions: RwLock::new(partitions),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn partition(&self, subject_id: &str) -> Option<Arc<Mutex<Partition>>> {
        self.partitions.read().get(subject_id).cloned()
    }

    fn partition_or_create(&self, subject_id: &str) -> Result<Arc<Mutex<Partition>>, StoreError> {
        if let Some(p) = self.partition(subject_id) {
            return Ok(p);
        }
        let mut index = self.index.lock();
        if let Some(p) = self.partition(subject_id) {
            return Ok(p);
        }
        let file = partition_file_name(subject_id);
        append_line(
            &mut index,
            &IndexLine {
                subject_id: subject_id.to_owned(),
                file: file.clone(),
            },
        )?;
        let dir = self.root.join(PARTITION_DIR);
        let handle = open_append(&dir.join(&file))?;
        sync_dir(&dir)?;
        let partition = Arc::new(Mutex::new(Partition {
            file: handle,
            records: Vec::new(),
            ids: HashSet::new(),
        }));
        self.partitions
            .write()
            .insert(subject_id.to_owned(), Arc::clone(&partition));
        Ok(partition)
    }

    /// Durably appends `record` unless an identical one is already stored.
    pub fn ingest(&self, record: &IngestRecord) -> Result<Ack, StoreError> {
        record.validate()?;
        let record_id = record.record_id();
        let partition = self.partition_or_create(&record.subject_id)?;
        let mut p = partition.lock();
        if p.ids.contains(&record_id) {
            return Ok(Ack {
                record_id,
                created: false,
            });
        }
        let stored = StoredRecord {
            record_id: record_id.clone(),
            record: record.clone(),
        };
        append_line(&mut p.file, &stored)?;
        p.ids.insert(record_id.clone());
        p.records.push(stored);
        Ok(Ack {
            record_id,
            created: true,
        })
    }

    /// Records of one subject inside `range`, ordered by timestamp (record id
    /// breaks ties). Unknown subjects give an empty list.
    pub fn fetch(&self, subject_id: &str, range: TimeRange) -> Vec<IngestRecord> {
        let Some(partition) = self.partition(subject_id) else {
            return Vec::new();
        };
        let p = partition.lock();
        let mut hits: Vec<&StoredRecord> = p
            .records
            .iter()
            .filter(|r| range.contains(&r.record.recorded_at))
            .collect();
        hits.sort_by(|a, b| {
            a.record
                .recorded_at
                .cmp(&b.record.recorded_at)
                .then_with(|| a.record_id.cmp(&b.record_id))
        });
        hits.into_iter().map(|r| r.record.clone()).collect()
    }

    /// Subjects with a partition, sorted.
    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.partitions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Total stored records.
    pub fn len(&self) -> usize {
        self.partitions
            .read()
            .values()
            .map(|p| p.lock().records.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Joins a subject registry with the stored samples. Registry subjects
    /// without records appear with no samples; records of subjects outside
    /// the registry are left out.
    pub fn export_cohort(&self, registry: &[Subject]) -> Result<Cohort, StoreError> {
        let samples = registry
            .iter()
            .flat_map(|s| self.fetch(&s.subject_id, TimeRange::default()))
            .map(|r| r.to_sample())
            .collect();
        Ok(Cohort::new(registry.to_vec(), samples)?)
    }
}
