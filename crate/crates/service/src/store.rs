//! Filesystem job store: one directory per job, no database.
//!
//! ```text
//! <root>/<uuid>/params.json    submitted parameters
//!              /map.osm.xml    inline map, if one was submitted
//!              /status.json    JobStatus, replaced atomically
//!              /lock           present while a worker owns the job
//!              /grid.json, grid.geojson, analysis.json, report.json
//! ```

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use syngrid_core::pipeline::{GenerationParams, GenerationReport};
use uuid::Uuid;

pub const RESTART_NOTE: &str = "service restarted while the job was running";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt job record: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub stage: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub status: JobState,
    pub submitted_unix: u64,
    #[serde(default)]
    pub finished_unix: Option<u64>,
    #[serde(default)]
    pub report: Option<GenerationReport>,
    #[serde(default)]
    pub error: Option<JobError>,
    #[serde(default)]
    pub note: Option<String>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct JobStore {
    root: PathBuf,
}

/// Exclusive claim on a job; the lock file is removed on drop.
#[derive(Debug)]
pub struct JobLock {
    path: PathBuf,
}

impl Drop for JobLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

impl JobStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<JobStore, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(JobStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory of `id`, or None for anything that is not a UUID.
    pub fn dir(&self, id: &str) -> Option<PathBuf> {
        Uuid::parse_str(id).ok().map(|u| self.root.join(u.to_string()))
    }

    pub fn create(&self, params: &GenerationParams, osm_xml: Option<&str>) -> Result<String, StoreError> {
        let id = Uuid::new_v4().to_string();
        let dir = self.root.join(&id);
        fs::create_dir(&dir)?;
        write_atomic(&dir.join("params.json"), &serde_json::to_vec_pretty(params)?)?;
        if let Some(xml) = osm_xml {
            write_atomic(&dir.join("map.osm.xml"), xml.as_bytes())?;
        }
        self.write_status(&JobStatus {
            id: id.clone(),
            status: JobState::Queued,
            submitted_unix: now_unix(),
            finished_unix: None,
            report: None,
            error: None,
            note: None,
        })?;
        Ok(id)
    }

    /// None when the job (or its directory) does not exist.
    pub fn status(&self, id: &str) -> Result<Option<JobStatus>, StoreError> {
        let Some(dir) = self.dir(id) else {
            return Ok(None);
        };
        match fs::read(dir.join("status.json")) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn write_status(&self, status: &JobStatus) -> Result<(), StoreError> {
        let dir = self.root.join(&status.id);
        write_atomic(&dir.join("status.json"), &serde_json::to_vec_pretty(status)?)?;
        Ok(())
    }

    pub fn params(&self, id: &str) -> Result<GenerationParams, StoreError> {
        let bytes = fs::read(self.root.join(id).join("params.json"))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn inline_map(&self, id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        match fs::read(self.root.join(id).join("map.osm.xml")) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Claim `id` for processing. None if another worker holds it.
    pub fn try_lock(&self, id: &str) -> Result<Option<JobLock>, StoreError> {
        let path = self.root.join(id).join("lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Some(JobLock { path }))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn write_artifact(&self, id: &str, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
        write_atomic(&self.root.join(id).join(name), bytes)?;
        Ok(())
    }

    pub fn read_artifact(&self, id: &str, name: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let Some(dir) = self.dir(id) else {
            return Ok(None);
        };
        match fs::read(dir.join(name)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Startup repair. Running jobs become failed with a restart note and
    /// stale locks are removed. Returns queued jobs, oldest first, for
    /// re-enqueueing.
    pub fn reconcile(&self) -> Result<Vec<String>, StoreError> {
        let mut queued = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(mut status) = self.status(&name)? else {
                continue;
            };
            let _ = fs::remove_file(entry.path().join("lock"));
            match status.status {
                JobState::Running => {
                    log::warn!("job {name} was running at shutdown; marking failed");
                    status.status = JobState::Failed;
                    status.finished_unix = Some(now_unix());
                    status.note = Some(RESTART_NOTE.to_string());
                    status.error = Some(JobError {
                        stage: None,
                        message: RESTART_NOTE.to_string(),
                    });
                    self.write_status(&status)?;
                }
                JobState::Queued => queued.push((status.submitted_unix, name)),
                JobState::Done | JobState::Failed => {}
            }
        }
        queued.sort();
        Ok(queued.into_iter().map(|(_, id)| id).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use syngrid_core::geodata::{Boundary, LonLat};

    fn params() -> GenerationParams {
        let ring = vec![
            LonLat::new(9.0, 47.0),
            LonLat::new(9.01, 47.0),
            LonLat::new(9.01, 47.01),
        ];
        GenerationParams::new(Boundary::new(ring).unwrap())
    }

    #[test]
    fn lock_is_exclusive_until_dropped() {
        let tmp = tempfile::tempdir().unwrap();
        let store = JobStore::open(tmp.path()).unwrap();
        let id = store.create(&params(), None).unwrap();
        let first = store.try_lock(&id).unwrap();
        assert!(first.is_some());
        assert!(store.try_lock(&id).unwrap().is_none());
        drop(first);
        assert!(store.try_lock(&id).unwrap().is_some());
    }

    #[test]
    fn non_uuid_ids_do_not_escape_the_root() {
        let tmp = tempfile::tempdir().unwrap();
        let store = JobStore::open(tmp.path()).unwrap();
        assert!(store.dir("../etc").is_none());
        assert!(store.status("../etc").unwrap().is_none());
    }
}
