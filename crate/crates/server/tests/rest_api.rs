mod common;

use std::time::Duration;

use adsplice_core::corpus::{Block, LOGO_FILE};
use adsplice_core::meta::parse_metadata;
use adsplice_server::probe::{probe, ProbeOptions};
use common::{fixture, serve, small_fixture, Api};
use serde_json::json;

const LIMIT: Duration = Duration::from_secs(60);

#[tokio::test(flavor = "multi_thread")]
async fn vod_job_lifecycle() {
    let fx = small_fixture(1);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);

    let (status, job) = api.post("/jobs", &fx.job_body("vod")).await;
    assert_eq!(status, 201, "{job}");
    assert_eq!(job["mode"], "vod");
    assert_eq!(job["engine"], "xcorr");
    assert_eq!(job["status"], "queued");
    assert!(job["stats"].get("processing_ms").is_none());
    assert!(job["stats"]["server_specs"]["cores"].as_u64().unwrap() >= 1);
    let id = job["job_id"].as_str().unwrap();

    let job = api.wait_for(id, "ready", LIMIT).await;
    assert!(job["stats"]["processing_ms"].as_f64().unwrap() > 0.0);
    assert_eq!(job["stats"]["segments_processed"], 5);

    let (status, body) = api.get_bytes(&format!("/jobs/{id}/metadata")).await;
    assert_eq!(status, 200);
    let records = parse_metadata(&body).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(job["stats"]["intervals_found"], records.len());
    assert_eq!((records[0].start_frame, records[0].end_frame), (120, 239));
    assert_eq!(records[0].target_ad_id, fx.policy()["auto"]);

    let url = api.start_stream(id).await;
    assert_eq!(url, server.ws_url);
    assert_eq!(api.start_stream(id).await, url);
    let (_, job) = api.get(&format!("/jobs/{id}")).await;
    assert_eq!(job["status"], "streaming");
    assert_eq!(job["ws_url"], url.as_str());
    let (status, _) = api.get(&format!("/jobs/{id}/metadata")).await;
    assert_eq!(status, 200);
    server.shutdown();
}

#[tokio::test]
async fn schema_and_lookup_errors() {
    let fx = small_fixture(2);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);

    for raw in [
        "not json",
        r#"{"mode":"vod"}"#,
        r#"{"mode":"broadcast","source_uri":"/x","engine":"xcorr","target_policy":{}}"#,
    ] {
        let (status, v) = api.post_raw("/jobs", raw).await;
        assert_eq!(status, 400, "{raw}");
        assert_eq!(v["error"], "SchemaViolation");
    }
    let mut extra = fx.job_body("vod");
    extra["colour"] = json!("red");
    assert_eq!(api.post("/jobs", &extra).await.0, 400);

    let mut features = fx.job_body("vod");
    features["engine"] = json!("features");
    let (status, v) = api.post("/jobs", &features).await;
    assert_eq!((status, v["error"].as_str()), (400, Some("SchemaViolation")));

    let mut bad_target = fx.job_body("vod");
    bad_target["target_policy"]["auto"] = json!("adsplice://ads/none");
    assert_eq!(api.post("/jobs", &bad_target).await.0, 400);

    let mut missing = fx.job_body("vod");
    missing["source_uri"] = json!("file:///nonexistent/adsplice/source");
    let (status, v) = api.post("/jobs", &missing).await;
    assert_eq!((status, v["error"].as_str()), (404, Some("SourceNotFound")));

    let mut no_model = fx.job_body("vod");
    no_model["engine"] = json!("features");
    no_model["model_uri"] = json!("/nonexistent/model.json");
    assert_eq!(api.post("/jobs", &no_model).await.0, 404);

    assert_eq!(api.get("/jobs/nope").await.0, 404);
    assert_eq!(api.get("/jobs/nope/metadata").await.0, 404);
    assert_eq!(api.post("/jobs/nope/start-stream", &json!({})).await.0, 404);
    server.shutdown();
}

#[tokio::test]
async fn duplicate_idempotency_key_returns_original_job() {
    let fx = small_fixture(3);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let mut body = fx.job_body("vod");
    body["idempotency_key"] = json!("k-1");
    let first = api.create(&body).await;
    let (status, v) = api.post("/jobs", &body).await;
    assert_eq!(status, 409);
    assert_eq!(v["job_id"], first.as_str());

    let r = api
        .http
        .post(format!("{}/jobs", api.base))
        .header("Idempotency-Key", "k-1")
        .json(&fx.job_body("vod"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 409);
    let v: serde_json::Value = r.json().await.unwrap();
    assert_eq!(v["job_id"], first.as_str());
    api.wait_for(&first, "ready", LIMIT).await;
    server.shutdown();
}

#[tokio::test]
async fn metadata_and_stream_wait_for_ready() {
    let fx = fixture(4, vec![Block::program(2.0)]);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let id = api.create(&fx.job_body("live_sim")).await;
    let (status, v) = api.get(&format!("/jobs/{id}/metadata")).await;
    assert_eq!((status, v["error"].as_str()), (409, Some("NotReady")));
    let (status, v) = api.post(&format!("/jobs/{id}/start-stream"), &json!({})).await;
    assert_eq!((status, v["error"].as_str()), (409, Some("NotReady")));
    let job = api.wait_for(&id, "ready", LIMIT).await;
    assert_eq!(job["stats"]["segments_processed"], 1);
    assert!(job["stream_start_unix_ms"].as_u64().is_some());
    server.shutdown();
}

#[tokio::test]
async fn server_info_reports_host() {
    let fx = small_fixture(5);
    let server = serve(&fx.data_root()).await;
    let (status, v) = Api::new(&server).get("/server/info").await;
    assert_eq!(status, 200);
    assert!(v["cpu_model"].as_str().is_some_and(|s| !s.is_empty()));
    assert!(v["cores"].as_u64().unwrap() >= 1);
    assert!(v["mem_mb"].as_u64().is_some());
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    server.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn jobs_survive_restart() {
    let fx = small_fixture(6);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let mut body = fx.job_body("vod");
    body["idempotency_key"] = json!("persist");
    let id = api.create(&body).await;
    api.wait_for(&id, "ready", LIMIT).await;
    let url = api.start_stream(&id).await;
    let (_, before) = api.get_bytes(&format!("/jobs/{id}/metadata")).await;
    let first = probe(&url, &ProbeOptions::new("a", &id)).await.unwrap();
    server.shutdown();

    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let (status, job) = api.get(&format!("/jobs/{id}")).await;
    assert_eq!(status, 200);
    assert_eq!(job["status"], "streaming");
    let (_, after) = api.get_bytes(&format!("/jobs/{id}/metadata")).await;
    assert_eq!(before, after);
    assert_eq!(api.post("/jobs", &body).await.0, 409);
    let second = probe(&server.ws_url, &ProbeOptions::new("a", &id)).await.unwrap();
    let bytes = |r: &adsplice_server::probe::ProbeReport| r.packets.iter().map(|p| p.bytes.clone()).collect::<Vec<_>>();
    assert!(!first.packets.is_empty());
    assert_eq!(bytes(&first), bytes(&second));
    server.shutdown();
}

#[tokio::test]
async fn empty_live_source_completes_at_once() {
    let fx = small_fixture(7);
    let empty = fx.dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let mut body = fx.job_body("live_sim");
    body["source_uri"] = json!(empty.display().to_string());
    body["logo_uri"] = json!(fx.corpus_dir().join(LOGO_FILE).display().to_string());
    body["ad_repository"] = json!(fx.corpus_dir().join("ads").display().to_string());
    let id = api.create(&body).await;
    let job = api.wait_for(&id, "ready", Duration::from_secs(2)).await;
    assert_eq!(job["stats"]["segments_processed"], 0);
    let url = api.start_stream(&id).await;
    let r = probe(&url, &ProbeOptions::new("e", &id)).await.unwrap();
    assert!(r.packets.is_empty());
    assert!(r.ended_normally());
    server.shutdown();
}
