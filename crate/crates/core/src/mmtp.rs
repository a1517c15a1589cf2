//! MMT-style packetization: MPUs fragmented into numbered packets with a
//! 19-byte big-endian header, multiplexed by timestamp, and reassembled on
//! the receiving side with a bounded reorder window.
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 1    | version                                 |
//! | 1      | 1    | payload_type (0 mpu_metadata, 1 mfu)    |
//! | 2      | 2    | packet_id                               |
//! | 4      | 4    | packet_sequence_number                  |
//! | 8      | 4    | timestamp_ms                            |
//! | 12     | 4    | mpu_sequence_number                     |
//! | 16     | 1    | flags: bits 7-6 fragmentation indicator |
//! | 17     | 2    | payload_length                          |

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lvs;
use crate::media::Segment;
use crate::stream::{StreamDir, StreamError};

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 19;
pub const MAX_PAYLOAD: usize = 1400;
pub const REORDER_WINDOW: u32 = 64;

pub const VIDEO_ASSET: &str = "video";
pub const AUDIO_ASSET: &str = "audio";
pub const VIDEO_PACKET_ID: u16 = 1;
pub const AUDIO_PACKET_ID: u16 = 2;

#[derive(Debug, Error)]
pub enum MmtpError {
    #[error("packet truncated: {available} bytes, need {needed}")]
    Truncated { needed: usize, available: usize },
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown payload type {0}")]
    BadPayloadType(u8),
    #[error("reserved flag bits set: {0:#04x}")]
    ReservedBits(u8),
    #[error("payload of {0} bytes exceeds the u16 length field")]
    PayloadTooLarge(usize),
    #[error("MPU payload is empty")]
    EmptyMpu,
    #[error("MPU sequence {got} for asset {asset:?} does not follow {previous}")]
    MpuSequence { asset: String, previous: u32, got: u32 },
    #[error("max_payload must be in 1..=65535, got {0}")]
    BadMaxPayload(usize),
    #[error("unknown asset {0:?}; expected \"video\" or \"audio\"")]
    UnknownAsset(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum PayloadType {
    MpuMetadata = 0,
    Mfu = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Fragment {
    Complete = 0,
    First = 1,
    Middle = 2,
    Last = 3,
}

impl Fragment {
    fn from_bits(b: u8) -> Fragment {
        match b & 3 {
            0 => Fragment::Complete,
            1 => Fragment::First,
            2 => Fragment::Middle,
            _ => Fragment::Last,
        }
    }

    pub fn starts_mpu(self) -> bool {
        matches!(self, Fragment::Complete | Fragment::First)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmtPacket {
    pub version: u8,
    pub payload_type: PayloadType,
    pub packet_id: u16,
    pub packet_sequence_number: u32,
    pub timestamp_ms: u32,
    pub mpu_sequence_number: u32,
    pub fragmentation: Fragment,
    pub payload: Vec<u8>,
}

impl MmtPacket {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, MmtpError> {
        let len = u16::try_from(self.payload.len()).map_err(|_| MmtpError::PayloadTooLarge(self.payload.len()))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.version);
        out.push(self.payload_type as u8);
        out.extend_from_slice(&self.packet_id.to_be_bytes());
        out.extend_from_slice(&self.packet_sequence_number.to_be_bytes());
        out.extend_from_slice(&self.timestamp_ms.to_be_bytes());
        out.extend_from_slice(&self.mpu_sequence_number.to_be_bytes());
        out.push((self.fragmentation as u8) << 6);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one packet; trailing bytes beyond `payload_length` are ignored.
    pub fn decode(bytes: &[u8]) -> Result<MmtPacket, MmtpError> {
        if bytes.len() < HEADER_LEN {
            return Err(MmtpError::Truncated {
                needed: HEADER_LEN,
                available: bytes.len(),
            });
        }
        let u16_at = |o: usize| u16::from_be_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        if bytes[0] != VERSION {
            return Err(MmtpError::BadVersion(bytes[0]));
        }
        let payload_type = match bytes[1] {
            0 => PayloadType::MpuMetadata,
            1 => PayloadType::Mfu,
            t => return Err(MmtpError::BadPayloadType(t)),
        };
        let flags = bytes[16];
        if flags & 0x3f != 0 {
            return Err(MmtpError::ReservedBits(flags));
        }
        let len = u16_at(17) as usize;
        if bytes.len() < HEADER_LEN + len {
            return Err(MmtpError::Truncated {
                needed: HEADER_LEN + len,
                available: bytes.len(),
            });
        }
        Ok(MmtPacket {
            version: bytes[0],
            payload_type,
            packet_id: u16_at(2),
            packet_sequence_number: u32_at(4),
            timestamp_ms: u32_at(8),
            mpu_sequence_number: u32_at(12),
            fragmentation: Fragment::from_bits(flags >> 6),
            payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
        })
    }
}

/// One asset's bytes for one segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mpu {
    pub mpu_sequence_number: u32,
    pub asset_id: String,
    pub payload: Vec<u8>,
    pub presentation_time_ms: u64,
}

impl Mpu {
    pub fn new(
        mpu_sequence_number: u32,
        asset_id: impl Into<String>,
        payload: Vec<u8>,
        presentation_time_ms: u64,
    ) -> Result<Self, MmtpError> {
        if payload.is_empty() {
            return Err(MmtpError::EmptyMpu);
        }
        Ok(Mpu {
            mpu_sequence_number,
            asset_id: asset_id.into(),
            payload,
            presentation_time_ms,
        })
    }
}

/// Fragments `mpu` into packets of at most [`MAX_PAYLOAD`] payload bytes.
pub fn packetize(mpu: &Mpu, packet_id: u16, next_seq: u32) -> Vec<MmtPacket> {
    packetize_with(mpu, packet_id, next_seq, MAX_PAYLOAD)
}

pub fn packetize_with(mpu: &Mpu, packet_id: u16, next_seq: u32, max_payload: usize) -> Vec<MmtPacket> {
    assert!(max_payload > 0, "max_payload must be positive");
    let chunks: Vec<&[u8]> = mpu.payload.chunks(max_payload).collect();
    let n = chunks.len();
    chunks
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| MmtPacket {
            version: VERSION,
            payload_type: PayloadType::Mfu,
            packet_id,
            packet_sequence_number: next_seq.wrapping_add(i as u32),
            timestamp_ms: mpu.presentation_time_ms as u32,
            mpu_sequence_number: mpu.mpu_sequence_number,
            fragmentation: match (n, i) {
                (1, _) => Fragment::Complete,
                (_, 0) => Fragment::First,
                (_, i) if i == n - 1 => Fragment::Last,
                _ => Fragment::Middle,
            },
            payload: chunk.to_vec(),
        })
        .collect()
}

/// Merges two individually ordered packet streams by timestamp, video first on ties.
pub fn mux(video: Vec<MmtPacket>, audio: Vec<MmtPacket>) -> Vec<MmtPacket> {
    let mut out = Vec::with_capacity(video.len() + audio.len());
    let mut v = video.into_iter().peekable();
    let mut a = audio.into_iter().peekable();
    loop {
        let take_video = match (v.peek(), a.peek()) {
            (Some(x), Some(y)) => x.timestamp_ms <= y.timestamp_ms,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        out.extend(if take_video { v.next() } else { a.next() });
    }
    out
}

#[derive(Debug, Clone)]
struct AssetState {
    packet_id: u16,
    next_seq: u32,
    last_mpu: Option<u32>,
}

/// Stateful packetizer holding the per-asset sequence counters.
#[derive(Debug, Clone)]
pub struct Packetizer {
    assets: BTreeMap<String, AssetState>,
    max_payload: usize,
}

impl Packetizer {
    pub fn new(assets: &[(&str, u16)], max_payload: usize) -> Result<Self, MmtpError> {
        if max_payload == 0 || max_payload > u16::MAX as usize {
            return Err(MmtpError::BadMaxPayload(max_payload));
        }
        let assets = assets
            .iter()
            .map(|&(id, packet_id)| {
                (
                    id.to_owned(),
                    AssetState {
                        packet_id,
                        next_seq: 0,
                        last_mpu: None,
                    },
                )
            })
            .collect();
        Ok(Packetizer { assets, max_payload })
    }

    /// Video on packet id 1, audio on packet id 2.
    pub fn av() -> Self {
        Packetizer::new(&[(VIDEO_ASSET, VIDEO_PACKET_ID), (AUDIO_ASSET, AUDIO_PACKET_ID)], MAX_PAYLOAD)
            .expect("default config is valid")
    }

    pub fn packet_id(&self, asset_id: &str) -> Option<u16> {
        self.assets.get(asset_id).map(|a| a.packet_id)
    }

    pub fn push(&mut self, mpu: &Mpu) -> Result<Vec<MmtPacket>, MmtpError> {
        let state = self
            .assets
            .get_mut(&mpu.asset_id)
            .ok_or_else(|| MmtpError::UnknownAsset(mpu.asset_id.clone()))?;
        if let Some(prev) = state.last_mpu {
            if mpu.mpu_sequence_number <= prev {
                return Err(MmtpError::MpuSequence {
                    asset: mpu.asset_id.clone(),
                    previous: prev,
                    got: mpu.mpu_sequence_number,
                });
            }
        }
        let packets = packetize_with(mpu, state.packet_id, state.next_seq, self.max_payload);
        state.next_seq = state.next_seq.wrapping_add(packets.len() as u32);
        state.last_mpu = Some(mpu.mpu_sequence_number);
        Ok(packets)
    }

    /// Video and audio MPUs of one segment, packetized and muxed.
    pub fn push_segment(&mut self, seg: &Segment, mpu_sequence_number: u32) -> Result<Vec<MmtPacket>, MmtpError> {
        let (video, audio) = segment_mpus(seg, mpu_sequence_number)?;
        let v = self.push(&video)?;
        let a = self.push(&audio)?;
        Ok(mux(v, a))
    }
}

/// The video MPU carries the whole LVS segment; the audio MPU its PCM track.
pub fn segment_mpus(seg: &Segment, mpu_sequence_number: u32) -> Result<(Mpu, Mpu), MmtpError> {
    let t = seg.start_time_ms();
    Ok((
        Mpu::new(mpu_sequence_number, VIDEO_ASSET, lvs::write_segment(seg), t)?,
        Mpu::new(mpu_sequence_number, AUDIO_ASSET, seg.audio().to_le_bytes(), t)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetConfig {
    pub asset_id: String,
    pub packet_id: u16,
    /// Stream directory the asset is read from.
    pub source: PathBuf,
}

/// Packetizer configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketizerConfig {
    pub assets: Vec<AssetConfig>,
    #[serde(default = "default_max_payload")]
    pub max_payload: usize,
}

fn default_max_payload() -> usize {
    MAX_PAYLOAD
}

impl PacketizerConfig {
    pub fn av(source: PathBuf) -> Self {
        PacketizerConfig {
            assets: vec![
                AssetConfig {
                    asset_id: VIDEO_ASSET.into(),
                    packet_id: VIDEO_PACKET_ID,
                    source: source.clone(),
                },
                AssetConfig {
                    asset_id: AUDIO_ASSET.into(),
                    packet_id: AUDIO_PACKET_ID,
                    source,
                },
            ],
            max_payload: MAX_PAYLOAD,
        }
    }

    /// Packetizes every segment of every configured asset and muxes the result
    /// by timestamp; assets listed first win timestamp ties.
    pub fn run(&self) -> Result<Vec<MmtPacket>, MmtpError> {
        let ids: Vec<(&str, u16)> = self.assets.iter().map(|a| (a.asset_id.as_str(), a.packet_id)).collect();
        let mut packetizer = Packetizer::new(&ids, self.max_payload)?;
        let mut merged: Vec<MmtPacket> = Vec::new();
        for asset in &self.assets {
            let dir = StreamDir::open(&asset.source)?;
            let mut packets = Vec::new();
            for (i, seg) in dir.iter().enumerate() {
                let seg = seg?;
                let payload = match asset.asset_id.as_str() {
                    VIDEO_ASSET => lvs::write_segment(&seg),
                    AUDIO_ASSET => seg.audio().to_le_bytes(),
                    other => return Err(MmtpError::UnknownAsset(other.to_owned())),
                };
                let mpu = Mpu::new(i as u32, asset.asset_id.clone(), payload, seg.start_time_ms())?;
                packets.extend(packetizer.push(&mpu)?);
            }
            merged = if merged.is_empty() { packets } else { mux(merged, packets) };
        }
        Ok(merged)
    }
}

/// Packet and MPU losses observed by a [`Depacketizer`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossReport {
    /// Sequence numbers that never arrived within the reorder window.
    pub lost_packets: u64,
    /// Packets arriving after their sequence number was given up on, or duplicates.
    pub late_packets: u64,
    /// `(packet_id, mpu_sequence_number)` of every MPU not delivered.
    pub dropped_mpus: BTreeSet<(u16, u32)>,
}

#[derive(Debug, Default)]
struct Assembly {
    mpu_seq: u32,
    timestamp_ms: u32,
    bytes: Vec<u8>,
}

#[derive(Debug, Default)]
struct Flow {
    next: Option<u32>,
    max_seen: u32,
    buffer: BTreeMap<u32, MmtPacket>,
    current: Option<Assembly>,
    last_mpu: Option<u32>,
}

impl Flow {
    fn note_mpu(&mut self, packet_id: u16, mpu_seq: u32, report: &mut LossReport) {
        if let Some(prev) = self.last_mpu {
            // MPUs whose every packet vanished only show up as a jump here
            for missing in prev.saturating_add(1)..mpu_seq {
                report.dropped_mpus.insert((packet_id, missing));
            }
        }
        self.last_mpu = Some(self.last_mpu.map_or(mpu_seq, |p| p.max(mpu_seq)));
    }

    fn abandon(&mut self, packet_id: u16, report: &mut LossReport) {
        if let Some(a) = self.current.take() {
            report.dropped_mpus.insert((packet_id, a.mpu_seq));
        }
    }

    fn accept(&mut self, p: MmtPacket, report: &mut LossReport, out: &mut Vec<(u16, u32, u32, Vec<u8>)>) {
        let id = p.packet_id;
        match p.fragmentation {
            Fragment::Complete => {
                self.abandon(id, report);
                self.note_mpu(id, p.mpu_sequence_number, report);
                out.push((id, p.mpu_sequence_number, p.timestamp_ms, p.payload));
            }
            Fragment::First => {
                self.abandon(id, report);
                self.note_mpu(id, p.mpu_sequence_number, report);
                self.current = Some(Assembly {
                    mpu_seq: p.mpu_sequence_number,
                    timestamp_ms: p.timestamp_ms,
                    bytes: p.payload,
                });
            }
            Fragment::Middle | Fragment::Last => match self.current.as_mut() {
                Some(a) if a.mpu_seq == p.mpu_sequence_number => {
                    a.bytes.extend_from_slice(&p.payload);
                    if p.fragmentation == Fragment::Last {
                        let a = self.current.take().expect("assembly present");
                        out.push((id, a.mpu_seq, a.timestamp_ms, a.bytes));
                    }
                }
                _ => {
                    // continuation of an MPU whose head was lost
                    self.abandon(id, report);
                    self.note_mpu(id, p.mpu_sequence_number, report);
                    report.dropped_mpus.insert((id, p.mpu_sequence_number));
                }
            },
        }
    }

    /// Delivers contiguous packets; when `flush`, gaps are given up immediately.
    fn drain(&mut self, id: u16, flush: bool, report: &mut LossReport, out: &mut Vec<(u16, u32, u32, Vec<u8>)>) {
        if self.next.is_none() {
            // earliest in serial order is the one furthest behind max_seen
            let Some(first) = self.buffer.keys().copied().max_by_key(|&k| self.max_seen.wrapping_sub(k)) else {
                return;
            };
            let p = &self.buffer[&first];
            // Start at the lowest sequence once it opens an MPU or the window is full.
            if p.fragmentation.starts_mpu() || flush || self.max_seen.wrapping_sub(first) >= REORDER_WINDOW {
                self.next = Some(first);
            } else {
                return;
            }
        }
        loop {
            let next = self.next.expect("flow started");
            if let Some(p) = self.buffer.remove(&next) {
                self.next = Some(next.wrapping_add(1));
                self.accept(p, report, out);
                continue;
            }
            let Some(lowest) = self.buffer.keys().copied().min_by_key(|&k| k.wrapping_sub(next)) else {
                break;
            };
            if flush || self.max_seen.wrapping_sub(next) >= REORDER_WINDOW {
                report.lost_packets += lowest.wrapping_sub(next) as u64;
                self.abandon(id, report);
                self.next = Some(lowest);
            } else {
                break;
            }
        }
        if flush {
            self.abandon(id, report);
        }
    }
}

/// Receiver-side reassembly of MPUs from a packet stream.
#[derive(Debug, Default)]
pub struct Depacketizer {
    flows: BTreeMap<u16, Flow>,
    assets: BTreeMap<u16, String>,
    report: LossReport,
}

impl Depacketizer {
    /// Maps packet ids 1 and 2 to the video and audio assets.
    pub fn new() -> Self {
        Depacketizer::with_assets(&[(VIDEO_PACKET_ID, VIDEO_ASSET), (AUDIO_PACKET_ID, AUDIO_ASSET)])
    }

    pub fn with_assets(assets: &[(u16, &str)]) -> Self {
        Depacketizer {
            assets: assets.iter().map(|&(id, a)| (id, a.to_owned())).collect(),
            ..Default::default()
        }
    }

    fn to_mpus(&self, raw: Vec<(u16, u32, u32, Vec<u8>)>) -> Vec<Mpu> {
        raw.into_iter()
            .map(|(id, seq, ts, payload)| Mpu {
                mpu_sequence_number: seq,
                asset_id: self.assets.get(&id).cloned().unwrap_or_else(|| format!("packet_id:{id}")),
                payload,
                presentation_time_ms: ts as u64,
            })
            .collect()
    }

    /// Feeds one packet and returns any MPUs it completes.
    pub fn push(&mut self, packet: MmtPacket) -> Vec<Mpu> {
        let id = packet.packet_id;
        let seq = packet.packet_sequence_number;
        let flow = self.flows.entry(id).or_default();
        let stale = flow.next.is_some_and(|n| n.wrapping_sub(seq) as i32 > 0);
        if stale || flow.buffer.contains_key(&seq) {
            self.report.late_packets += 1;
            return Vec::new();
        }
        if flow.buffer.is_empty() && flow.next.is_none() || seq.wrapping_sub(flow.max_seen) as i32 > 0 {
            flow.max_seen = seq;
        }
        flow.buffer.insert(seq, packet);
        let mut out = Vec::new();
        flow.drain(id, false, &mut self.report, &mut out);
        self.to_mpus(out)
    }

    pub fn push_bytes(&mut self, bytes: &[u8]) -> Result<Vec<Mpu>, MmtpError> {
        Ok(self.push(MmtPacket::decode(bytes)?))
    }

    /// End of stream: everything still missing is lost.
    pub fn finish(&mut self) -> Vec<Mpu> {
        let mut out = Vec::new();
        for (&id, flow) in self.flows.iter_mut() {
            flow.drain(id, true, &mut self.report, &mut out);
        }
        self.to_mpus(out)
    }

    pub fn report(&self) -> &LossReport {
        &self.report
    }
}

/// Reassembles a finite packet sequence.
pub fn depacketize(packets: impl IntoIterator<Item = MmtPacket>) -> (Vec<Mpu>, LossReport) {
    let mut d = Depacketizer::new();
    let mut mpus: Vec<Mpu> = packets.into_iter().flat_map(|p| d.push(p)).collect();
    mpus.extend(d.finish());
    (mpus, d.report.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mpu(len: usize, seq: u32) -> Mpu {
        Mpu::new(seq, VIDEO_ASSET, (0..len).map(|i| (i * 7 + seq as usize) as u8).collect(), 1000 * seq as u64).unwrap()
    }

    fn frags(p: &[MmtPacket]) -> Vec<(usize, Fragment)> {
        p.iter().map(|p| (p.payload.len(), p.fragmentation)).collect()
    }

    #[test]
    fn fragment_sizes() {
        assert_eq!(frags(&packetize(&mpu(1000, 0), 1, 0)), [(1000, Fragment::Complete)]);
        assert_eq!(frags(&packetize(&mpu(1400, 0), 1, 0)), [(1400, Fragment::Complete)]);
        assert_eq!(
            frags(&packetize(&mpu(3000, 0), 1, 0)),
            [(1400, Fragment::First), (1400, Fragment::Middle), (200, Fragment::Last)]
        );
        let p = packetize(&mpu(3000, 4), 1, 17);
        assert_eq!(p.iter().map(|p| p.packet_sequence_number).collect::<Vec<_>>(), [17, 18, 19]);
        assert!(p.iter().all(|p| p.mpu_sequence_number == 4 && p.timestamp_ms == 4000));
    }

    #[test]
    fn header_layout() {
        let p = MmtPacket {
            version: 1,
            payload_type: PayloadType::Mfu,
            packet_id: 0x0102,
            packet_sequence_number: 0x0304_0506,
            timestamp_ms: 0x0708_090a,
            mpu_sequence_number: 0x0b0c_0d0e,
            fragmentation: Fragment::Last,
            payload: vec![0xaa, 0xbb],
        };
        let bytes = p.encode().unwrap();
        assert_eq!(
            bytes,
            [1, 1, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 0xc0, 0, 2, 0xaa, 0xbb]
        );
        assert_eq!(MmtPacket::decode(&bytes).unwrap(), p);
    }

    #[test]
    fn decode_errors() {
        let good = packetize(&mpu(10, 0), 1, 0)[0].encode().unwrap();
        assert!(matches!(MmtPacket::decode(&good[..18]), Err(MmtpError::Truncated { .. })));
        assert!(matches!(MmtPacket::decode(&good[..25]), Err(MmtpError::Truncated { needed: 29, .. })));
        let mut bad = good.clone();
        bad[0] = 2;
        assert!(matches!(MmtPacket::decode(&bad), Err(MmtpError::BadVersion(2))));
        let mut bad = good.clone();
        bad[1] = 9;
        assert!(matches!(MmtPacket::decode(&bad), Err(MmtpError::BadPayloadType(9))));
        let mut bad = good;
        bad[16] = 0x01;
        assert!(matches!(MmtPacket::decode(&bad), Err(MmtpError::ReservedBits(1))));
    }

    #[test]
    fn reversed_fragments_reassemble() {
        let m = mpu(4000, 3);
        let mut p = packetize(&m, 1, 0);
        p.reverse();
        let (out, report) = depacketize(p);
        assert_eq!(out, vec![m]);
        assert_eq!(report, LossReport::default());
    }

    #[test]
    fn missing_middle_drops_mpu() {
        let a = mpu(3000, 0);
        let b = mpu(3000, 1);
        let mut p = packetize(&a, 1, 0);
        p.extend(packetize(&b, 1, 3));
        p.remove(1);
        let (out, report) = depacketize(p);
        assert_eq!(out, vec![b]);
        assert_eq!(report.lost_packets, 1);
        assert_eq!(report.dropped_mpus, BTreeSet::from([(1, 0)]));
    }

    #[test]
    fn whole_mpu_lost_is_reported() {
        let ms: Vec<Mpu> = (0..3).map(|i| mpu(100, i)).collect();
        let p: Vec<MmtPacket> = [0u32, 2].iter().map(|&i| packetize(&ms[i as usize], 1, i).remove(0)).collect();
        let (out, report) = depacketize(p);
        assert_eq!(out.len(), 2);
        assert_eq!(report.dropped_mpus, BTreeSet::from([(1, 1)]));
        assert_eq!(report.lost_packets, 1);
    }

    #[test]
    fn gap_is_held_within_window() {
        let ms: Vec<Mpu> = (0..100).map(|i| mpu(10, i)).collect();
        let mut d = Depacketizer::new();
        let packets: Vec<MmtPacket> = ms.iter().enumerate().map(|(i, m)| packetize(m, 1, i as u32).remove(0)).collect();
        assert_eq!(d.push(packets[0].clone()).len(), 1);
        // seq 1 is missing: nothing beyond it is delivered until the window passes
        for p in &packets[2..65] {
            assert!(d.push(p.clone()).is_empty());
        }
        let released = d.push(packets[65].clone());
        assert_eq!(released.len(), 64);
        assert_eq!(d.report().lost_packets, 1);
        // the straggler is now late
        assert!(d.push(packets[1].clone()).is_empty());
        assert_eq!(d.report().late_packets, 1);
    }

    #[test]
    fn mux_orders_by_time_video_first() {
        let v: Vec<MmtPacket> = (0..3).flat_map(|i| packetize(&mpu(2000, i), 1, 2 * i)).collect();
        let mut audio_mpu = mpu(10, 1);
        audio_mpu.asset_id = AUDIO_ASSET.into();
        let a = packetize(&audio_mpu, 2, 0);
        let out = mux(v.clone(), a);
        let order: Vec<(u16, u32)> = out.iter().map(|p| (p.packet_id, p.packet_sequence_number)).collect();
        assert_eq!(order, [(1, 0), (1, 1), (1, 2), (1, 3), (2, 0), (1, 4), (1, 5)]);
        assert_eq!(mux(v.clone(), vec![]), v);
    }

    #[test]
    fn packetizer_enforces_mpu_order() {
        let mut p = Packetizer::av();
        p.push(&mpu(10, 5)).unwrap();
        assert!(matches!(p.push(&mpu(10, 5)), Err(MmtpError::MpuSequence { .. })));
        let next = p.push(&mpu(3000, 6)).unwrap();
        assert_eq!(next[0].packet_sequence_number, 1);
        assert!(Mpu::new(0, VIDEO_ASSET, vec![], 0).is_err());
    }
}
