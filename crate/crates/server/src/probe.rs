//! A WebSocket client that registers, records everything it receives and
//! checks packet continuity.

use std::collections::BTreeMap;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use adsplice_core::mmtp::{MmtPacket, MmtpError};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("connection closed before ack: {0:?}")]
    Rejected(Option<(u16, String)>),
    #[error("no message within {0:?}")]
    Timeout(Duration),
    #[error("bad message: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub client_id: String,
    pub job_id: String,
    /// Wait this long after the ack before reading anything.
    pub read_delay: Duration,
    /// Send a `stats_request` once this many packets have arrived.
    pub stats_after: Option<usize>,
    /// Give up when nothing arrives for this long.
    pub idle_timeout: Duration,
}

impl ProbeOptions {
    pub fn new(client_id: impl Into<String>, job_id: impl Into<String>) -> Self {
        ProbeOptions {
            client_id: client_id.into(),
            job_id: job_id.into(),
            read_delay: Duration::ZERO,
            stats_after: None,
            idle_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Received {
    pub bytes: Vec<u8>,
    pub unix_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ProbeReport {
    pub ack: Value,
    /// Time from connect until the ack arrived.
    pub registration: Duration,
    pub packets: Vec<Received>,
    /// Text frames after the ack.
    pub messages: Vec<Value>,
    pub close: Option<(u16, String)>,
}

pub fn unix_ms_f64() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64() * 1e3)
}

impl ProbeReport {
    pub fn decoded(&self) -> Result<Vec<MmtPacket>, MmtpError> {
        self.packets.iter().map(|p| MmtPacket::decode(&p.bytes)).collect()
    }

    pub fn message(&self, kind: &str) -> Option<&Value> {
        self.messages.iter().find(|m| m["type"] == kind)
    }

    pub fn ended_normally(&self) -> bool {
        self.message("end_of_stream").is_some() && matches!(self.close, Some((1000, _)))
    }
}

fn close_of(m: Option<tokio_tungstenite::tungstenite::protocol::CloseFrame>) -> Option<(u16, String)> {
    m.map(|f| (u16::from(f.code), f.reason.to_string()))
}

/// Connects, registers and reads until the server closes the stream.
pub async fn probe(ws_url: &str, opts: &ProbeOptions) -> Result<ProbeReport, ProbeError> {
    let t0 = Instant::now();
    let (mut ws, _) = connect_async(ws_url).await?;
    let reg = json!({ "type": "register", "client_id": opts.client_id, "job_id": opts.job_id });
    ws.send(Message::text(reg.to_string())).await?;
    let mut report = ProbeReport::default();
    loop {
        match tokio::time::timeout(opts.idle_timeout, ws.next()).await {
            Err(_) => return Err(ProbeError::Timeout(opts.idle_timeout)),
            Ok(None) => return Err(ProbeError::Rejected(None)),
            Ok(Some(m)) => match m? {
                Message::Text(t) => {
                    let v: Value = serde_json::from_str(&t).map_err(|e| ProbeError::Protocol(e.to_string()))?;
                    if v["type"] != "ack" {
                        return Err(ProbeError::Protocol(format!("expected ack, got {v}")));
                    }
                    report.ack = v;
                    report.registration = t0.elapsed();
                    break;
                }
                Message::Close(f) => return Err(ProbeError::Rejected(close_of(f))),
                _ => {}
            },
        }
    }
    if !opts.read_delay.is_zero() {
        tokio::time::sleep(opts.read_delay).await;
    }
    let mut asked = false;
    loop {
        let m = match tokio::time::timeout(opts.idle_timeout, ws.next()).await {
            Err(_) => return Err(ProbeError::Timeout(opts.idle_timeout)),
            Ok(None) => break,
            Ok(Some(m)) => m,
        };
        match m {
            Ok(Message::Binary(b)) => {
                report.packets.push(Received {
                    bytes: b.to_vec(),
                    unix_ms: unix_ms_f64(),
                });
                if !asked && opts.stats_after.is_some_and(|n| report.packets.len() >= n) {
                    asked = true;
                    ws.send(Message::text(json!({ "type": "stats_request" }).to_string())).await?;
                }
            }
            Ok(Message::Text(t)) => {
                report.messages.push(serde_json::from_str(&t).map_err(|e| ProbeError::Protocol(e.to_string()))?)
            }
            Ok(Message::Close(f)) => {
                report.close = close_of(f);
                break;
            }
            Ok(_) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(report)
}

/// Checks that every packet id's sequence numbers run without gaps and
/// start at zero.
pub fn check_gap_free(packets: &[MmtPacket]) -> Result<(), String> {
    let mut next: BTreeMap<u16, u32> = BTreeMap::new();
    for (i, p) in packets.iter().enumerate() {
        let want = next.entry(p.packet_id).or_insert(0);
        if p.packet_sequence_number != *want {
            return Err(format!(
                "packet {i} (id {}) has sequence {}, expected {want}",
                p.packet_id, p.packet_sequence_number
            ));
        }
        *want = want.wrapping_add(1);
    }
    Ok(())
}
