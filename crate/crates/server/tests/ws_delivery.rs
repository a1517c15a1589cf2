mod common;

use std::time::{Duration, Instant};

use adsplice_core::corpus::Block;
use adsplice_core::mmtp::{depacketize, VIDEO_PACKET_ID};
use adsplice_core::pipeline::OUTPUT_STREAM_DIR;
use adsplice_core::stream::StreamDir;
use adsplice_server::delivery::{CLOSE_MALFORMED_REGISTRATION, CLOSE_REGISTRATION_TIMEOUT, CLOSE_SLOW_CONSUMER};
use adsplice_server::jobs::{JOBS_DIR, OUTPUT_DIR};
use adsplice_server::packets::PacketLog;
use adsplice_server::probe::{check_gap_free, probe, ProbeError, ProbeOptions};
use adsplice_server::{worker, ServerConfig};
use common::{fixture, serve, serve_with, small_fixture, Api, Fixture};
use futures_util::StreamExt;
use tokio_tungstenite::tungstenite::Message;

const LIMIT: Duration = Duration::from_secs(60);

async fn streaming_vod(fx: &Fixture, api: &Api) -> (String, String) {
    let id = api.create(&fx.job_body("vod")).await;
    api.wait_for(&id, "ready", LIMIT).await;
    let url = api.start_stream(&id).await;
    (id, url)
}

fn expected_packets(fx: &Fixture, id: &str) -> Vec<Vec<u8>> {
    let log = PacketLog::new();
    let dir = fx.data_root().join(JOBS_DIR).join(id).join(OUTPUT_DIR).join(OUTPUT_STREAM_DIR);
    worker::load_log(&log, &dir).unwrap();
    log.read(0, usize::MAX).into_iter().map(|p| p.bytes.to_vec()).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn vod_clients_receive_identical_gap_free_streams() {
    let fx = small_fixture(11);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let (id, url) = streaming_vod(&fx, &api).await;

    let mut a = ProbeOptions::new("client-a", &id);
    a.stats_after = Some(3);
    let b = ProbeOptions::new("client-b", &id);
    let (ra, rb) = tokio::join!(probe(&url, &a), probe(&url, &b));
    let (ra, rb) = (ra.unwrap(), rb.unwrap());
    assert_eq!(ra.ack["job_id"], id.as_str());
    assert!(ra.ended_normally() && rb.ended_normally());

    let bytes = |r: &adsplice_server::probe::ProbeReport| r.packets.iter().map(|p| p.bytes.clone()).collect::<Vec<_>>();
    assert_eq!(bytes(&ra), bytes(&rb));
    assert_eq!(bytes(&ra), expected_packets(&fx, &id));
    let packets = ra.decoded().unwrap();
    check_gap_free(&packets).unwrap();
    assert_eq!(ra.message("end_of_stream").unwrap()["packets"], packets.len());

    // the video MPUs are the spliced segments, in order
    let (mpus, loss) = depacketize(packets);
    assert!(loss.dropped_mpus.is_empty() && loss.lost_packets == 0);
    let out = StreamDir::open(&fx.data_root().join(JOBS_DIR).join(&id).join(OUTPUT_DIR).join(OUTPUT_STREAM_DIR)).unwrap();
    let video: Vec<_> = mpus.iter().filter(|m| m.asset_id == "video").collect();
    assert_eq!(video.len(), out.len());
    for (k, m) in video.iter().enumerate() {
        let seg = out.read(k).unwrap();
        assert_eq!(m.payload, adsplice_core::lvs::write_segment(&seg));
        assert_eq!(m.presentation_time_ms, seg.start_time_ms());
    }

    let stats = ra.message("stats").expect("stats reply");
    assert_eq!(stats["job_id"], id.as_str());
    assert!(stats["processing_ms"].as_f64().unwrap() > 0.0);
    assert!(stats["server_specs"]["cores"].as_u64().unwrap() >= 1);
    assert_eq!(stats["intervals_found"], 1);
    server.shutdown();
}

#[tokio::test]
async fn silent_client_times_out() {
    let fx = small_fixture(12);
    let mut config = ServerConfig::ephemeral(fx.data_root());
    config.delivery.registration_timeout = Duration::from_millis(300);
    let server = serve_with(config).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(&server.ws_url).await.unwrap();
    let t0 = Instant::now();
    let m = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap();
    let Some(Ok(Message::Close(Some(frame)))) = m else {
        panic!("expected a close frame, got {m:?}")
    };
    assert_eq!(u16::from(frame.code), CLOSE_REGISTRATION_TIMEOUT);
    assert_eq!(frame.reason.as_str(), "RegistrationTimeout");
    assert!(t0.elapsed() >= Duration::from_millis(250));
    server.shutdown();
}

#[tokio::test]
async fn bad_registrations_are_rejected() {
    let fx = small_fixture(13);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let rejected = |r: Result<_, ProbeError>| match r {
        Err(ProbeError::Rejected(Some((code, reason)))) => {
            assert_eq!(code, CLOSE_MALFORMED_REGISTRATION);
            assert!(reason.starts_with("MalformedRegistration"), "{reason}");
        }
        other => panic!("expected rejection, got {other:?}"),
    };
    rejected(probe(&server.ws_url, &ProbeOptions::new("x", "no-such-job")).await);

    // ready but not yet streaming
    let id = api.create(&fx.job_body("vod")).await;
    api.wait_for(&id, "ready", LIMIT).await;
    rejected(probe(&server.ws_url, &ProbeOptions::new("x", &id)).await);

    let (mut ws, _) = tokio_tungstenite::connect_async(&server.ws_url).await.unwrap();
    futures_util::SinkExt::send(&mut ws, Message::text(r#"{"type":"hello"}"#)).await.unwrap();
    let Some(Ok(Message::Close(Some(frame)))) = ws.next().await else {
        panic!("expected close")
    };
    assert_eq!(u16::from(frame.code), CLOSE_MALFORMED_REGISTRATION);
    server.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn ten_clients_register_within_a_second() {
    let fx = small_fixture(14);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let (id, url) = streaming_vod(&fx, &api).await;
    let runs = (0..10).map(|k| {
        let (url, id) = (url.clone(), id.clone());
        tokio::spawn(async move { probe(&url, &ProbeOptions::new(format!("c{k}"), id)).await.unwrap() })
    });
    let reports = futures_util::future::join_all(runs).await;
    let first = reports[0].as_ref().unwrap().packets.len();
    for r in reports {
        let r = r.unwrap();
        assert!(r.registration <= Duration::from_secs(1), "{:?}", r.registration);
        assert!(r.ended_normally());
        assert_eq!(r.packets.len(), first);
    }
    server.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn stalled_vod_client_is_dropped() {
    // about 17 MB of packets, far beyond the queue plus socket buffers
    let fx = fixture(15, vec![Block::program(30.0)]);
    let mut config = ServerConfig::ephemeral(fx.data_root());
    config.delivery.slow_consumer_grace = Duration::from_millis(200);
    let server = serve_with(config).await;
    let api = Api::new(&server);
    let (id, url) = streaming_vod(&fx, &api).await;
    let total = expected_packets(&fx, &id).len();
    let mut opts = ProbeOptions::new("slow", &id);
    opts.read_delay = Duration::from_secs(2);
    let r = probe(&url, &opts).await.unwrap();
    let (code, reason) = r.close.clone().expect("close frame");
    assert_eq!((code, reason.as_str()), (CLOSE_SLOW_CONSUMER, "SlowConsumer"));
    assert!(r.packets.len() < total);
    check_gap_free(&r.decoded().unwrap()).unwrap();
    server.shutdown();
}

#[tokio::test(flavor = "multi_thread")]
async fn live_packets_are_paced() {
    let fx = fixture(16, vec![Block::program(2.0), Block::ad("food", 2.0), Block::program(2.0)]);
    let server = serve(&fx.data_root()).await;
    let api = Api::new(&server);
    let id = api.create(&fx.job_body("live_sim")).await;
    api.wait_for(&id, "ready", LIMIT).await;
    let url = api.start_stream(&id).await;
    let r = probe(&url, &ProbeOptions::new("live", &id)).await.unwrap();
    assert!(r.ended_normally());
    let origin = r.ack["stream_start_unix_ms"].as_f64().unwrap();
    let packets = r.decoded().unwrap();
    assert!(!packets.is_empty());
    for (p, rx) in packets.iter().zip(&r.packets) {
        let elapsed = rx.unix_ms - origin;
        assert!(elapsed >= p.timestamp_ms as f64 - 2000.0, "ts {} arrived at {elapsed}", p.timestamp_ms);
    }
    // the client joined at the first segment and saw the whole feed
    let video: Vec<_> = packets.iter().filter(|p| p.packet_id == VIDEO_PACKET_ID).collect();
    assert_eq!(video.first().unwrap().mpu_sequence_number, 0);
    assert_eq!(video.last().unwrap().mpu_sequence_number, 2);
    let end = r.packets.last().unwrap().unix_ms - origin;
    assert!((6000.0..6300.0).contains(&end), "{end}");

    let (_, job) = api.get(&format!("/jobs/{id}")).await;
    assert_eq!(job["stats"]["segments_processed"], 3);
    assert_eq!(job["stats"]["intervals_found"], 1);
    server.shutdown();
}
