#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use adsplice_core::corpus::{generate_corpus, Block, Corpus, CorpusSpec, POLICY_FILE};
use adsplice_core::meta::TargetPolicy;
use adsplice_server::{start, RunningServer, ServerConfig};
use serde_json::{json, Value};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub corpus: Corpus,
}

impl Fixture {
    pub fn corpus_dir(&self) -> PathBuf {
        self.dir.path().join("corpus")
    }

    pub fn data_root(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    pub fn policy(&self) -> TargetPolicy {
        serde_json::from_slice(&std::fs::read(self.corpus_dir().join(POLICY_FILE)).unwrap()).unwrap()
    }

    pub fn job_body(&self, mode: &str) -> Value {
        json!({
            "mode": mode,
            "source_uri": format!("file://{}", self.corpus_dir().display()),
            "engine": "xcorr",
            "target_policy": self.policy(),
        })
    }
}

/// Two-second segments: program, an auto break, program.
pub fn fixture(seed: u64, blocks: Vec<Block>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        seed,
        segment_seconds: 2.0,
        blocks,
        ..Default::default()
    };
    let corpus = generate_corpus(spec, &dir.path().join("corpus")).unwrap();
    Fixture { dir, corpus }
}

pub fn small_fixture(seed: u64) -> Fixture {
    fixture(seed, vec![Block::program(4.0), Block::ad("auto", 4.0), Block::program(2.0)])
}

pub async fn serve(root: &Path) -> RunningServer {
    start(ServerConfig::ephemeral(root)).await.unwrap()
}

pub async fn serve_with(config: ServerConfig) -> RunningServer {
    start(config).await.unwrap()
}

pub struct Api {
    pub base: String,
    pub http: reqwest::Client,
}

impl Api {
    pub fn new(server: &RunningServer) -> Self {
        Api {
            base: server.rest_url(),
            http: reqwest::Client::new(),
        }
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post_raw(&self, path: &str, body: &'static str) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get_bytes(&self, path: &str) -> (u16, Vec<u8>) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.bytes().await.unwrap().to_vec())
    }

    pub async fn create(&self, body: &Value) -> String {
        let (status, job) = self.post("/jobs", body).await;
        assert_eq!(status, 201, "{job}");
        job["job_id"].as_str().unwrap().to_owned()
    }

    /// Polls until the job reaches `status`; panics on failure or timeout.
    pub async fn wait_for(&self, id: &str, status: &str, limit: Duration) -> Value {
        let t0 = Instant::now();
        loop {
            let (_, job) = self.get(&format!("/jobs/{id}")).await;
            if job["status"] == status {
                return job;
            }
            assert_ne!(job["status"], "failed", "job failed: {job}");
            assert!(t0.elapsed() < limit, "job stuck: {job}");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    pub async fn start_stream(&self, id: &str) -> String {
        let (status, v) = self.post(&format!("/jobs/{id}/start-stream"), &json!({})).await;
        assert_eq!(status, 200, "{v}");
        v["ws_url"].as_str().unwrap().to_owned()
    }
}
