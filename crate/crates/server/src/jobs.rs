//! Jobs: request schema, status machine, and the persistent store.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use adsplice_core::corpus::{ADS_DIR, LOGO_FILE, STREAM_DIR};
use adsplice_core::meta::{AdMetadata, TargetPolicy};
use adsplice_core::pipeline::EngineKind;
use adsplice_core::placer::AdRepository;
use adsplice_core::stream::MANIFEST_FILE;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ApiError;
use crate::packets::PacketLog;
use crate::specs::ServerSpecs;

pub const JOBS_DIR: &str = "jobs";
pub const JOB_FILE: &str = "job.json";
pub const OUTPUT_DIR: &str = "output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobMode {
    Vod,
    LiveSim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Processing,
    Ready,
    Streaming,
    Failed,
}

impl JobStatus {
    /// Forward along queued → processing → ready → streaming, or to failed.
    pub fn can_become(self, next: JobStatus) -> bool {
        use JobStatus::*;
        matches!(
            (self, next),
            (Queued, Processing) | (Processing, Ready) | (Ready, Streaming) | (Queued | Processing | Ready | Streaming, Failed)
        )
    }

    pub fn has_output(self) -> bool {
        matches!(self, JobStatus::Ready | JobStatus::Streaming)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub mode: JobMode,
    pub source_uri: String,
    pub engine: EngineKind,
    pub target_policy: TargetPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_geo: Option<Value>,
    /// Trained model JSON; required by the features engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_uri: Option<String>,
    /// Logo template PGM; defaults to `logo.pgm` beside the stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logo_uri: Option<String>,
    /// Ad repository; defaults to `ads/` beside the stream, then the data root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ad_repository: Option<String>,
    /// Live-sim replay speed, default 1.0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStats {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_ms: Option<f64>,
    pub segments_processed: u64,
    pub intervals_found: u64,
    pub server_specs: ServerSpecs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_geo: Option<Value>,
}

/// The job view served by `GET /jobs/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub mode: JobMode,
    pub source_uri: String,
    pub engine: EngineKind,
    pub target_policy: TargetPolicy,
    pub status: JobStatus,
    pub stats: JobStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ws_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Wall-clock origin of a live-sim stream, Unix milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_start_unix_ms: Option<u64>,
}

/// What is persisted per job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRecord {
    pub job: Job,
    pub request: JobRequest,
    /// Set once every source segment has been processed.
    #[serde(default)]
    pub complete: bool,
}

/// Filesystem locations a job reads from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub stream_dir: PathBuf,
    pub logo: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub ads: PathBuf,
}

pub fn uri_to_path(uri: &str) -> PathBuf {
    PathBuf::from(uri.strip_prefix("file://").unwrap_or(uri))
}

pub fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl JobRequest {
    pub fn parse(body: &[u8]) -> Result<Self, ApiError> {
        let req: JobRequest = serde_json::from_slice(body).map_err(|e| ApiError::schema(e.to_string()))?;
        if req.source_uri.trim().is_empty() {
            return Err(ApiError::schema("source_uri must not be empty"));
        }
        if let Some(s) = req.speed {
            if !(s.is_finite() && s > 0.0) {
                return Err(ApiError::schema("speed must be a positive number"));
            }
            if req.mode == JobMode::Vod {
                return Err(ApiError::schema("speed applies to live_sim jobs only"));
            }
        }
        if req.engine == EngineKind::Features && req.model_uri.is_none() {
            return Err(ApiError::schema("engine features requires model_uri"));
        }
        if req.target_policy.values().any(|v| v.is_empty()) {
            return Err(ApiError::schema("target_policy values must be non-empty URIs"));
        }
        Ok(req)
    }

    /// Finds the stream directory and engine inputs; missing files are 404.
    pub fn resolve(&self, data_root: &Path) -> Result<Sources, ApiError> {
        let src = uri_to_path(&self.source_uri);
        let (stream_dir, base) = if src.join(MANIFEST_FILE).is_file() {
            (src.clone(), src.parent().map(Path::to_path_buf))
        } else if src.join(STREAM_DIR).join(MANIFEST_FILE).is_file() {
            (src.join(STREAM_DIR), Some(src.clone()))
        } else if self.mode == JobMode::LiveSim && src.is_dir() {
            // an empty live source is a feed that ends immediately
            (src.clone(), src.parent().map(Path::to_path_buf))
        } else {
            return Err(ApiError::not_found(format!("source {} has no stream", src.display())));
        };
        let beside = |name: &str| base.as_ref().map(|b| b.join(name)).filter(|p| p.exists());
        let explicit = |uri: &Option<String>, what: &str| -> Result<Option<PathBuf>, ApiError> {
            match uri {
                Some(u) => {
                    let p = uri_to_path(u);
                    if p.exists() {
                        Ok(Some(p))
                    } else {
                        Err(ApiError::not_found(format!("{what} {} does not exist", p.display())))
                    }
                }
                None => Ok(None),
            }
        };
        let logo = explicit(&self.logo_uri, "logo")?.or_else(|| beside(LOGO_FILE));
        if self.engine == EngineKind::Xcorr && logo.is_none() {
            return Err(ApiError::schema("engine xcorr needs logo_uri (no logo.pgm beside the source)"));
        }
        let model = explicit(&self.model_uri, "model")?;
        let ads = explicit(&self.ad_repository, "ad repository")?
            .or_else(|| beside(ADS_DIR))
            .unwrap_or_else(|| data_root.join(ADS_DIR));
        let repo = AdRepository::open(&ads).map_err(|e| ApiError::schema(e.to_string()))?;
        for (cat, uri) in &self.target_policy {
            if repo.resolve_target(uri).is_err() {
                return Err(ApiError::schema(format!("target_policy[{cat}]: {uri} is not in the ad repository")));
            }
        }
        Ok(Sources {
            stream_dir,
            logo,
            model,
            ads,
        })
    }
}

/// Wall-clock origin of a live stream.
#[derive(Debug, Clone, Copy)]
pub struct LiveClock {
    pub start: Instant,
    pub unix_ms: u64,
    pub speed: f64,
}

pub struct JobEntry {
    pub id: String,
    pub dir: PathBuf,
    record: Mutex<JobRecord>,
    metadata: Mutex<Vec<AdMetadata>>,
    pub packets: PacketLog,
    pub clock: OnceLock<LiveClock>,
}

impl JobEntry {
    pub fn view(&self) -> Job {
        self.record.lock().expect("job lock").job.clone()
    }

    pub fn record(&self) -> JobRecord {
        self.record.lock().expect("job lock").clone()
    }

    pub fn status(&self) -> JobStatus {
        self.record.lock().expect("job lock").job.status
    }

    pub fn output_dir(&self) -> PathBuf {
        self.dir.join(OUTPUT_DIR)
    }

    pub fn metadata(&self) -> Vec<AdMetadata> {
        self.metadata.lock().expect("metadata lock").clone()
    }

    /// Applies `f` under the job lock and persists the result.
    pub fn update<R>(&self, f: impl FnOnce(&mut JobRecord) -> R) -> R {
        let mut g = self.record.lock().expect("job lock");
        let r = f(&mut g);
        if let Err(e) = persist(&self.dir, &g) {
            tracing::warn!(job = %self.id, "persisting job failed: {e}");
        }
        r
    }

    /// Moves to `next` if the status machine allows it.
    pub fn transition(&self, next: JobStatus) -> Result<(), JobStatus> {
        self.update(|r| {
            if r.job.status.can_become(next) {
                r.job.status = next;
                Ok(())
            } else {
                Err(r.job.status)
            }
        })
    }

    pub fn fail(&self, error: impl Into<String>) {
        let error = error.into();
        tracing::warn!(job = %self.id, "job failed: {error}");
        self.update(|r| {
            r.job.status = JobStatus::Failed;
            r.job.error = Some(error);
        });
        if !self.packets.state().finished {
            self.packets.finish();
        }
    }

    /// Replaces the served metadata and the interval count together.
    pub fn set_metadata(&self, records: Vec<AdMetadata>) {
        let n = records.len() as u64;
        let mut m = self.metadata.lock().expect("metadata lock");
        *m = records;
        self.update(|r| r.job.stats.intervals_found = n);
    }
}

fn persist(dir: &Path, record: &JobRecord) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(".job.json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(record).expect("record serializes"))?;
    fs::rename(tmp, dir.join(JOB_FILE))
}

pub enum Created {
    New(Arc<JobEntry>),
    Duplicate(String),
}

pub struct JobStore {
    data_root: PathBuf,
    root: PathBuf,
    jobs: RwLock<BTreeMap<String, Arc<JobEntry>>>,
    keys: Mutex<HashMap<String, String>>,
    counter: AtomicU64,
    specs: ServerSpecs,
}

impl JobStore {
    /// Loads persisted jobs. Jobs cut off mid-processing come back failed.
    pub fn open(data_root: &Path, specs: ServerSpecs) -> std::io::Result<Self> {
        let root = data_root.join(JOBS_DIR);
        fs::create_dir_all(&root)?;
        let store = JobStore {
            data_root: data_root.to_path_buf(),
            root: root.clone(),
            jobs: RwLock::new(BTreeMap::new()),
            keys: Mutex::new(HashMap::new()),
            counter: AtomicU64::new(0),
            specs,
        };
        for e in fs::read_dir(&root)? {
            let dir = e?.path();
            let Ok(bytes) = fs::read(dir.join(JOB_FILE)) else {
                continue;
            };
            let record: JobRecord = match serde_json::from_slice(&bytes) {
                Ok(r) => r,
                Err(err) => {
                    tracing::warn!("skipping {}: {err}", dir.display());
                    continue;
                }
            };
            let metadata = fs::read(dir.join(OUTPUT_DIR).join(adsplice_core::pipeline::METADATA_FILE))
                .ok()
                .and_then(|b| adsplice_core::meta::parse_metadata(&b).ok())
                .unwrap_or_default();
            let entry = Arc::new(JobEntry {
                id: record.job.job_id.clone(),
                dir,
                record: Mutex::new(record.clone()),
                metadata: Mutex::new(metadata),
                packets: PacketLog::new(),
                clock: OnceLock::new(),
            });
            if !record.complete && record.job.status != JobStatus::Failed {
                entry.fail("interrupted by a server restart");
            }
            if let Some(k) = &record.request.idempotency_key {
                store.keys.lock().expect("keys lock").insert(k.clone(), entry.id.clone());
            }
            store.jobs.write().expect("jobs lock").insert(entry.id.clone(), entry);
        }
        let n = store.jobs.read().expect("jobs lock").len() as u64;
        store.counter.store(n, Ordering::SeqCst);
        Ok(store)
    }

    pub fn data_root(&self) -> &Path {
        &self.data_root
    }

    pub fn job_for_key(&self, key: &str) -> Option<String> {
        self.keys.lock().expect("keys lock").get(key).cloned()
    }

    pub fn specs(&self) -> &ServerSpecs {
        &self.specs
    }

    pub fn get(&self, id: &str) -> Option<Arc<JobEntry>> {
        self.jobs.read().expect("jobs lock").get(id).cloned()
    }

    pub fn all(&self) -> Vec<Arc<JobEntry>> {
        self.jobs.read().expect("jobs lock").values().cloned().collect()
    }

    fn next_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        format!("j{:x}{n:04x}", unix_ms())
    }

    /// Creates a queued job, or reports the job already holding the key.
    pub fn create(&self, request: JobRequest) -> std::io::Result<Created> {
        let mut keys = self.keys.lock().expect("keys lock");
        if let Some(k) = &request.idempotency_key {
            if let Some(existing) = keys.get(k) {
                return Ok(Created::Duplicate(existing.clone()));
            }
        }
        let id = self.next_id();
        let job = Job {
            job_id: id.clone(),
            mode: request.mode,
            source_uri: request.source_uri.clone(),
            engine: request.engine,
            target_policy: request.target_policy.clone(),
            status: JobStatus::Queued,
            stats: JobStats {
                processing_ms: None,
                segments_processed: 0,
                intervals_found: 0,
                server_specs: self.specs.clone(),
                client_geo: request.client_geo.clone(),
            },
            ws_url: None,
            error: None,
            stream_start_unix_ms: None,
        };
        let record = JobRecord {
            job,
            request,
            complete: false,
        };
        let dir = self.root.join(&id);
        persist(&dir, &record)?;
        if let Some(k) = &record.request.idempotency_key {
            keys.insert(k.clone(), id.clone());
        }
        let entry = Arc::new(JobEntry {
            id: id.clone(),
            dir,
            record: Mutex::new(record),
            metadata: Mutex::new(Vec::new()),
            packets: PacketLog::new(),
            clock: OnceLock::new(),
        });
        self.jobs.write().expect("jobs lock").insert(id, entry.clone());
        Ok(Created::New(entry))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use JobStatus::*;

    #[test]
    fn status_machine() {
        assert!(Queued.can_become(Processing));
        assert!(Processing.can_become(Ready));
        assert!(Ready.can_become(Streaming));
        assert!(Streaming.can_become(Failed));
        assert!(!Queued.can_become(Ready));
        assert!(!Streaming.can_become(Ready));
        assert!(!Failed.can_become(Processing));
        assert!(!Ready.can_become(Ready));
    }

    #[test]
    fn request_schema() {
        let ok = br#"{"mode":"vod","source_uri":"/x","engine":"xcorr","target_policy":{}}"#;
        assert!(JobRequest::parse(ok).is_ok());
        let unknown = br#"{"mode":"vod","source_uri":"/x","engine":"xcorr","target_policy":{},"extra":1}"#;
        assert!(JobRequest::parse(unknown).is_err());
        let no_model = br#"{"mode":"vod","source_uri":"/x","engine":"features","target_policy":{}}"#;
        assert!(JobRequest::parse(no_model).is_err());
        let bad_mode = br#"{"mode":"live","source_uri":"/x","engine":"xcorr","target_policy":{}}"#;
        assert!(JobRequest::parse(bad_mode).is_err());
    }

    #[test]
    fn idempotency_and_reload() {
        let tmp = tempfile::tempdir().unwrap();
        let specs = ServerSpecs::detect();
        let store = JobStore::open(tmp.path(), specs.clone()).unwrap();
        let mut req = JobRequest::parse(br#"{"mode":"vod","source_uri":"/x","engine":"xcorr","target_policy":{}}"#).unwrap();
        req.idempotency_key = Some("k1".into());
        let Created::New(a) = store.create(req.clone()).unwrap() else {
            panic!("first create must be new")
        };
        let Created::Duplicate(id) = store.create(req).unwrap() else {
            panic!("second create must be a duplicate")
        };
        assert_eq!(id, a.id);
        drop(store);
        let again = JobStore::open(tmp.path(), specs).unwrap();
        let j = again.get(&id).unwrap();
        assert_eq!(j.status(), Failed);
    }
}
