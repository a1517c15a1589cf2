//! Per-job packet store shared by every delivery session.
//!
//! Packets are appended one segment at a time and never change afterwards;
//! each session keeps its own cursor and waits on the watch channel for more.

use std::sync::RwLock;

use adsplice_core::mmtp::{MmtPacket, MmtpError};
use bytes::Bytes;
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogState {
    pub len: usize,
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct LoggedPacket {
    pub bytes: Bytes,
    pub timestamp_ms: u32,
}

#[derive(Default)]
struct Inner {
    packets: Vec<LoggedPacket>,
    segment_starts: Vec<usize>,
    finished: bool,
}

pub struct PacketLog {
    inner: RwLock<Inner>,
    tx: watch::Sender<LogState>,
}

impl Default for PacketLog {
    fn default() -> Self {
        PacketLog::new()
    }
}

impl PacketLog {
    pub fn new() -> Self {
        PacketLog {
            inner: RwLock::new(Inner::default()),
            tx: watch::channel(LogState { len: 0, finished: false }).0,
        }
    }

    /// Appends the muxed packets of one segment.
    pub fn append_segment(&self, packets: &[MmtPacket]) -> Result<(), MmtpError> {
        let encoded = packets
            .iter()
            .map(|p| {
                Ok(LoggedPacket {
                    bytes: Bytes::from(p.encode()?),
                    timestamp_ms: p.timestamp_ms,
                })
            })
            .collect::<Result<Vec<_>, MmtpError>>()?;
        let mut g = self.inner.write().expect("packet log poisoned");
        assert!(!g.finished, "append after finish");
        let start = g.packets.len();
        g.segment_starts.push(start);
        g.packets.extend(encoded);
        let state = LogState {
            len: g.packets.len(),
            finished: false,
        };
        drop(g);
        self.tx.send_replace(state);
        Ok(())
    }

    pub fn finish(&self) {
        let mut g = self.inner.write().expect("packet log poisoned");
        g.finished = true;
        let state = LogState {
            len: g.packets.len(),
            finished: true,
        };
        drop(g);
        self.tx.send_replace(state);
    }

    pub fn state(&self) -> LogState {
        *self.tx.borrow()
    }

    pub fn subscribe(&self) -> watch::Receiver<LogState> {
        self.tx.subscribe()
    }

    /// Up to `max` packets starting at `from`.
    pub fn read(&self, from: usize, max: usize) -> Vec<LoggedPacket> {
        let g = self.inner.read().expect("packet log poisoned");
        let end = g.packets.len().min(from.saturating_add(max));
        g.packets.get(from..end).map(<[_]>::to_vec).unwrap_or_default()
    }

    /// First packet of the newest segment: where a live client joins.
    pub fn live_edge(&self) -> usize {
        let g = self.inner.read().expect("packet log poisoned");
        g.segment_starts.last().copied().unwrap_or(0)
    }

    pub fn segments(&self) -> usize {
        self.inner.read().expect("packet log poisoned").segment_starts.len()
    }
}
