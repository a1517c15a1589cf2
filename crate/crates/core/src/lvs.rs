//! The LVS ("linear video segment") container.
//!
//! Little-endian layout:
//!
//! | offset | size | field              |
//! |--------|------|--------------------|
//! | 0      | 4    | magic `LVS1`       |
//! | 4      | 1    | version (1)        |
//! | 5      | 1    | reserved (0)       |
//! | 6      | 2    | width              |
//! | 8      | 2    | height             |
//! | 10     | 2    | fps_num            |
//! | 12     | 2    | fps_den            |
//! | 14     | 4    | frame_count        |
//! | 18     | 4    | sample_rate        |
//! | 22     | 4    | audio_sample_count |
//! | 26     | 8    | start_time_ms      |
//!
//! followed by `frame_count * width * height` luma bytes and
//! `audio_sample_count` s16le samples. The segment id and the logo ground-truth
//! flag live outside the container.

use thiserror::Error;

use crate::media::{AudioBlock, Fps, Frame, MediaError, Segment, MIN_FRAME_EDGE, SUPPORTED_SAMPLE_RATES};

pub const MAGIC: &[u8; 4] = b"LVS1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 34;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LvsError {
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("truncated payload at offset {offset}: need {needed} bytes, {available} available")]
    TruncatedPayload {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("header field `{field}` at offset {offset} out of range: {detail}")]
    HeaderFieldOutOfRange {
        field: &'static str,
        offset: usize,
        detail: String,
    },
}

/// Parsed fixed header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LvsHeader {
    pub width: u16,
    pub height: u16,
    pub fps: Fps,
    pub frame_count: u32,
    pub sample_rate: u32,
    pub audio_sample_count: u32,
    pub start_time_ms: u64,
}

impl LvsHeader {
    pub fn payload_len(&self) -> usize {
        self.frame_count as usize * self.width as usize * self.height as usize
            + self.audio_sample_count as usize * 2
    }
}

fn out_of_range(field: &'static str, offset: usize, detail: impl Into<String>) -> LvsError {
    LvsError::HeaderFieldOutOfRange {
        field,
        offset,
        detail: detail.into(),
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<LvsHeader, LvsError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(LvsError::BadMagic { offset: 0 });
    }
    if bytes.len() < HEADER_LEN {
        return Err(LvsError::TruncatedPayload {
            offset: bytes.len(),
            needed: HEADER_LEN - bytes.len(),
            available: 0,
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if bytes[4] != VERSION {
        return Err(out_of_range("version", 4, format!("{} != {VERSION}", bytes[4])));
    }
    if bytes[5] != 0 {
        return Err(out_of_range("reserved", 5, format!("{} != 0", bytes[5])));
    }
    let width = u16_at(6);
    if width < MIN_FRAME_EDGE {
        return Err(out_of_range("width", 6, format!("{width} < {MIN_FRAME_EDGE}")));
    }
    let height = u16_at(8);
    if height < MIN_FRAME_EDGE {
        return Err(out_of_range("height", 8, format!("{height} < {MIN_FRAME_EDGE}")));
    }
    let fps_num = u16_at(10);
    if fps_num == 0 {
        return Err(out_of_range("fps_num", 10, "zero"));
    }
    let fps_den = u16_at(12);
    if fps_den == 0 {
        return Err(out_of_range("fps_den", 12, "zero"));
    }
    let frame_count = u32_at(14);
    if frame_count == 0 {
        return Err(out_of_range("frame_count", 14, "zero frames"));
    }
    let sample_rate = u32_at(18);
    if !SUPPORTED_SAMPLE_RATES.contains(&sample_rate) {
        return Err(out_of_range("sample_rate", 18, format!("{sample_rate} Hz")));
    }
    Ok(LvsHeader {
        width,
        height,
        fps: Fps {
            num: fps_num,
            den: fps_den,
        },
        frame_count,
        sample_rate,
        audio_sample_count: u32_at(22),
        start_time_ms: u64::from_le_bytes(bytes[26..34].try_into().unwrap()),
    })
}

/// Decodes one segment. `segment_id` is supplied by the enclosing stream.
pub fn read_segment(segment_id: &str, bytes: &[u8]) -> Result<Segment, LvsError> {
    let header = parse_header(bytes)?;
    let frame_len = header.width as usize * header.height as usize;
    let mut offset = HEADER_LEN;
    let mut frames = Vec::with_capacity(header.frame_count as usize);
    for _ in 0..header.frame_count {
        let end = offset + frame_len;
        if end > bytes.len() {
            return Err(LvsError::TruncatedPayload {
                offset,
                needed: frame_len,
                available: bytes.len() - offset,
            });
        }
        let frame = Frame::new(header.width, header.height, bytes[offset..end].to_vec())
            .expect("header dimensions already validated");
        frames.push(frame);
        offset = end;
    }
    let audio_len = header.audio_sample_count as usize * 2;
    if offset + audio_len > bytes.len() {
        return Err(LvsError::TruncatedPayload {
            offset,
            needed: audio_len,
            available: bytes.len() - offset,
        });
    }
    let samples = bytes[offset..offset + audio_len]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    let audio = AudioBlock::new(header.sample_rate, samples)
        .map_err(|e| out_of_range("sample_rate", 18, e.to_string()))?;
    Segment::new(segment_id, header.fps, frames, audio, header.start_time_ms).map_err(|e| match e {
        MediaError::AudioDurationMismatch { .. } => out_of_range("audio_sample_count", 22, e.to_string()),
        other => out_of_range("frame_count", 14, other.to_string()),
    })
}

pub fn encoded_len(seg: &Segment) -> usize {
    HEADER_LEN + seg.frame_count() * seg.frames()[0].len() + seg.audio().len() * 2
}

pub fn write_segment(seg: &Segment) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(seg));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(0);
    out.extend_from_slice(&seg.width().to_le_bytes());
    out.extend_from_slice(&seg.height().to_le_bytes());
    out.extend_from_slice(&seg.fps().num.to_le_bytes());
    out.extend_from_slice(&seg.fps().den.to_le_bytes());
    out.extend_from_slice(&(seg.frame_count() as u32).to_le_bytes());
    out.extend_from_slice(&seg.audio().sample_rate().to_le_bytes());
    out.extend_from_slice(&(seg.audio().len() as u32).to_le_bytes());
    out.extend_from_slice(&seg.start_time_ms().to_le_bytes());
    debug_assert_eq!(out.len(), HEADER_LEN);
    for f in seg.frames() {
        out.extend_from_slice(f.pixels());
    }
    for s in seg.audio().samples() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}
