//! Sessions and their on-disk persistence, one JSON document per session.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use fairthresh_core::{AhpResult, Cohort, CostModel, DiBounds, OptimizationResult, TradeoffCloud};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt session document {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_active(self) -> bool {
        matches!(self, JobStatus::Pending | JobStatus::Running)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: String,
    pub status: JobStatus,
    pub progress: Progress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<OptimizationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub submitted_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionDoc {
    pub id: String,
    pub costs: CostModel,
    pub di_bounds: DiBounds,
    #[serde(default)]
    pub cohort: Option<Cohort>,
    #[serde(default)]
    pub cloud: Option<TradeoffCloud>,
    #[serde(default)]
    pub ahp: Option<AhpResult>,
    #[serde(default)]
    pub job: Option<JobState>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl SessionDoc {
    pub fn new(id: String, costs: CostModel, di_bounds: DiBounds) -> Self {
        let now = now_millis();
        Self { id, costs, di_bounds, cohort: None, cloud: None, ahp: None, job: None, created_at: now, updated_at: now }
    }
}

/// Mutations go through `doc` (one writer at a time); job polling reads the
/// separately published `job` snapshot and never waits on a writer.
#[derive(Debug)]
pub struct SessionSlot {
    pub doc: Mutex<SessionDoc>,
    job: RwLock<Option<JobState>>,
}

impl SessionSlot {
    fn new(mut doc: SessionDoc) -> Self {
        let job = doc.job.take();
        Self { doc: Mutex::new(doc), job: RwLock::new(job) }
    }

    pub fn job(&self) -> Option<JobState> {
        self.job.read().expect("job lock poisoned").clone()
    }

    pub fn publish_job(&self, job: Option<JobState>) {
        *self.job.write().expect("job lock poisoned") = job;
    }

    pub fn update_job(&self, f: impl FnOnce(&mut JobState)) {
        if let Some(job) = self.job.write().expect("job lock poisoned").as_mut() {
            f(job);
        }
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
}

impl Store {
    /// Opens (creating if needed) the data directory and loads every
    /// session. Jobs that were pending or running when the previous process
    /// stopped are marked failed.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let bytes = std::fs::read(&path)?;
            let mut doc: SessionDoc = serde_json::from_slice(&bytes)
                .map_err(|source| StoreError::Corrupt { path: path.clone(), source })?;
            if let Some(job) = doc.job.as_mut().filter(|j| j.status.is_active()) {
                job.status = JobStatus::Failed;
                job.error = Some("interrupted by service restart".into());
                job.finished_at = Some(now_millis());
            }
            sessions.insert(doc.id.clone(), Arc::new(SessionSlot::new(doc)));
        }
        Ok(Self { dir, sessions: RwLock::new(sessions) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.sessions.read().expect("store lock poisoned").get(id).cloned()
    }

    pub fn insert(&self, doc: SessionDoc) -> Result<Arc<SessionSlot>, StoreError> {
        self.write_doc(&doc, None)?;
        let slot = Arc::new(SessionSlot::new(doc.clone()));
        self.sessions.write().expect("store lock poisoned").insert(doc.id, slot.clone());
        Ok(slot)
    }

    /// Writes `doc` merged with the slot's current job snapshot.
    pub fn persist(&self, slot: &SessionSlot, doc: &mut SessionDoc) -> Result<(), StoreError> {
        doc.updated_at = now_millis();
        self.write_doc(doc, slot.job())
    }

    fn write_doc(&self, doc: &SessionDoc, job: Option<JobState>) -> Result<(), StoreError> {
        let mut value = serde_json::to_value(doc)?;
        value["job"] = serde_json::to_value(job)?;
        let final_path = self.dir.join(format!("{}.json", doc.id));
        let tmp_path = self.dir.join(format!(".{}.json.tmp", doc.id));
        std::fs::write(&tmp_path, serde_json::to_vec(&value)?)?;
        std::fs::rename(&tmp_path, &final_path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_interrupted_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let doc = SessionDoc::new("abc".into(), CostModel::default(), DiBounds::default());
        let slot = store.insert(doc).unwrap();
        slot.publish_job(Some(JobState {
            job_id: "j".into(),
            status: JobStatus::Running,
            progress: Progress { completed: 25, total: 100 },
            result: None,
            error: None,
            submitted_at: 0,
            finished_at: None,
        }));
        let mut doc = slot.doc.try_lock().unwrap().clone();
        store.persist(&slot, &mut doc).unwrap();

        let reopened = Store::open(dir.path()).unwrap();
        let slot = reopened.get("abc").unwrap();
        let job = slot.job().unwrap();
        assert_eq!(job.status, JobStatus::Failed);
        assert!(job.error.unwrap().contains("restart"));
        assert!(reopened.get("nope").is_none());
    }
}
