//! WebSocket delivery of MMTP packets.
//!
//! A client registers with `{"type":"register","client_id","job_id"}` and
//! then receives one packet per binary frame. Text frames carry control
//! messages: `ack`, `stats` (in reply to `stats_request`) and
//! `end_of_stream`, which precedes a normal close.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::sync::mpsc;
use tokio::time::{sleep_until, timeout, Instant};

use crate::jobs::{JobEntry, JobMode, JobStatus, JobStore, LiveClock};

pub const QUEUE_LIMIT: usize = 2048;
pub const LIVE_LEAD: Duration = Duration::from_millis(2000);

pub const CLOSE_NORMAL: u16 = 1000;
pub const CLOSE_REGISTRATION_TIMEOUT: u16 = 4001;
pub const CLOSE_MALFORMED_REGISTRATION: u16 = 4002;
pub const CLOSE_SLOW_CONSUMER: u16 = 4008;

const READ_BATCH: usize = 256;

#[derive(Debug, Clone, Copy)]
pub struct DeliveryConfig {
    pub registration_timeout: Duration,
    /// How long the per-client queue may stay full before the client is dropped.
    pub slow_consumer_grace: Duration,
}

impl Default for DeliveryConfig {
    fn default() -> Self {
        DeliveryConfig {
            registration_timeout: Duration::from_secs(5),
            slow_consumer_grace: Duration::from_secs(5),
        }
    }
}

pub struct Delivery {
    store: Arc<JobStore>,
    config: DeliveryConfig,
    clients: Mutex<HashSet<String>>,
}

pub fn router(store: Arc<JobStore>, config: DeliveryConfig) -> Router {
    let d = Arc::new(Delivery {
        store,
        config,
        clients: Mutex::new(HashSet::new()),
    });
    Router::new().route("/stream", get(upgrade)).with_state(d)
}

async fn upgrade(State(d): State<Arc<Delivery>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| session(d, socket))
}

fn close(code: u16, reason: impl Into<Utf8Bytes>) -> Message {
    Message::Close(Some(CloseFrame {
        code,
        reason: reason.into(),
    }))
}

fn text(v: Value) -> Message {
    Message::Text(v.to_string().into())
}

struct Registration {
    client_id: String,
    job_id: String,
}

fn parse_registration(msg: &str) -> Result<Registration, String> {
    let v: Value = serde_json::from_str(msg).map_err(|e| format!("not JSON: {e}"))?;
    if v["type"] != "register" {
        return Err("expected a register message".into());
    }
    let field = |k: &str| match &v[k] {
        Value::String(s) if !s.is_empty() => Ok(s.clone()),
        _ => Err(format!("{k} must be a non-empty string")),
    };
    Ok(Registration {
        client_id: field("client_id")?,
        job_id: field("job_id")?,
    })
}

/// Waits for the first text frame; other frames before it are ignored.
async fn first_text(rx: &mut SplitStream<WebSocket>) -> Option<String> {
    while let Some(Ok(m)) = rx.next().await {
        match m {
            Message::Text(t) => return Some(t.to_string()),
            Message::Close(_) => return None,
            _ => {}
        }
    }
    None
}

struct ClientGuard<'a> {
    d: &'a Delivery,
    id: String,
}

impl Drop for ClientGuard<'_> {
    fn drop(&mut self) {
        self.d.clients.lock().expect("clients lock").remove(&self.id);
    }
}

async fn session(d: Arc<Delivery>, socket: WebSocket) {
    let (mut tx, mut rx) = socket.split();
    let reg = match timeout(d.config.registration_timeout, first_text(&mut rx)).await {
        Err(_) => {
            let _ = tx.send(close(CLOSE_REGISTRATION_TIMEOUT, "RegistrationTimeout")).await;
            return;
        }
        Ok(None) => return,
        Ok(Some(t)) => parse_registration(&t),
    };
    let reject = |why: String| close(CLOSE_MALFORMED_REGISTRATION, format!("MalformedRegistration: {why}"));
    let (reg, entry) = match reg.and_then(|r| {
        let entry = d.store.get(&r.job_id).ok_or_else(|| format!("unknown job {}", r.job_id))?;
        match entry.status() {
            JobStatus::Streaming => Ok((r, entry)),
            s => Err(format!("job {} is {s:?}, not streaming", r.job_id)),
        }
    }) {
        Ok(x) => x,
        Err(why) => {
            let _ = tx.send(reject(why)).await;
            return;
        }
    };
    if !d.clients.lock().expect("clients lock").insert(reg.client_id.clone()) {
        let _ = tx.send(reject(format!("client_id {} is already connected", reg.client_id))).await;
        return;
    }
    let _guard = ClientGuard {
        d: &d,
        id: reg.client_id.clone(),
    };

    let job = entry.view();
    let clock = entry.clock.get().copied();
    let live = job.mode == JobMode::LiveSim && !entry.packets.state().finished;
    let ack = json!({
        "type": "ack",
        "client_id": reg.client_id,
        "job_id": job.job_id,
        "mode": job.mode,
        "stream_start_unix_ms": clock.map(|c| c.unix_ms),
    });
    if tx.send(text(ack)).await.is_err() {
        return;
    }
    tracing::debug!(client = %reg.client_id, job = %job.job_id, "registered");

    let (data_tx, data_rx) = mpsc::channel::<Message>(QUEUE_LIMIT);
    let (ctl_tx, ctl_rx) = mpsc::unbounded_channel::<Message>();
    let sent = Arc::new(AtomicU64::new(0));
    let writer = tokio::spawn(write_loop(tx, data_rx, ctl_rx));
    let producer = tokio::spawn(produce(
        entry.clone(),
        if live { entry.packets.live_edge() } else { 0 },
        clock.filter(|_| live),
        d.config.slow_consumer_grace,
        data_tx,
        ctl_tx.clone(),
        sent.clone(),
    ));

    loop {
        tokio::select! {
            m = rx.next() => match m {
                Some(Ok(Message::Text(t))) => {
                    if serde_json::from_str::<Value>(&t).is_ok_and(|v| v["type"] == "stats_request") {
                        let _ = ctl_tx.send(text(stats(&entry, sent.load(Ordering::Relaxed))));
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            _ = ctl_tx.closed() => break,
        }
        if writer.is_finished() {
            break;
        }
    }
    producer.abort();
    drop(ctl_tx);
    // a writer stuck on a client that stopped reading is given up on
    let _ = timeout(Duration::from_secs(10), writer).await;
}

fn stats(entry: &JobEntry, sent: u64) -> Value {
    let job = entry.view();
    json!({
        "type": "stats",
        "job_id": job.job_id,
        "status": job.status,
        "server_specs": job.stats.server_specs,
        "processing_ms": job.stats.processing_ms,
        "segments_processed": job.stats.segments_processed,
        "intervals_found": job.stats.intervals_found,
        "packets_sent": sent,
        "packets_total": entry.packets.state().len,
    })
}

async fn write_loop(
    mut tx: SplitSink<WebSocket, Message>,
    mut data: mpsc::Receiver<Message>,
    mut ctl: mpsc::UnboundedReceiver<Message>,
) {
    loop {
        let m = tokio::select! {
            biased;
            Some(m) = ctl.recv() => m,
            Some(m) = data.recv() => m,
            else => break,
        };
        let last = matches!(m, Message::Close(_));
        if tx.send(m).await.is_err() || last {
            break;
        }
    }
    let _ = tx.flush().await;
}

/// Earliest departure of a live packet with media timestamp `ts_ms`.
pub fn departure(clock: &LiveClock, ts_ms: u32) -> std::time::Instant {
    let media = Duration::from_secs_f64(ts_ms as f64 / 1000.0 / clock.speed);
    clock.start + media.saturating_sub(LIVE_LEAD)
}

async fn produce(
    entry: Arc<JobEntry>,
    mut cursor: usize,
    clock: Option<LiveClock>,
    grace: Duration,
    data: mpsc::Sender<Message>,
    ctl: mpsc::UnboundedSender<Message>,
    sent: Arc<AtomicU64>,
) {
    let mut watch = entry.packets.subscribe();
    let slow = || {
        tracing::info!(job = %entry.id, "closing slow consumer");
        let _ = ctl.send(close(CLOSE_SLOW_CONSUMER, "SlowConsumer"));
    };
    loop {
        let batch = entry.packets.read(cursor, READ_BATCH);
        if batch.is_empty() {
            let state = *watch.borrow_and_update();
            if cursor < state.len {
                continue;
            }
            if state.finished || watch.changed().await.is_err() {
                break;
            }
            continue;
        }
        for p in batch {
            if let Some(c) = &clock {
                sleep_until(Instant::from_std(departure(c, p.timestamp_ms))).await;
            }
            match data.send_timeout(Message::Binary(p.bytes), grace).await {
                Ok(()) => {}
                Err(mpsc::error::SendTimeoutError::Timeout(_)) => {
                    slow();
                    return;
                }
                Err(mpsc::error::SendTimeoutError::Closed(_)) => return,
            }
            cursor += 1;
            sent.fetch_add(1, Ordering::Relaxed);
        }
    }
    let n = sent.load(Ordering::Relaxed);
    if data.send(text(json!({ "type": "end_of_stream", "packets": n }))).await.is_ok() {
        let _ = data.send(close(CLOSE_NORMAL, "end of stream")).await;
    }
}
