//! Frames, audio blocks, segments and timecodes.
//!
//! Everything here is immutable once constructed. Constructors validate the
//! invariants so downstream code (detectors, splicer, packetizer) can rely on
//! them without re-checking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest accepted frame edge, in pixels.
pub const MIN_FRAME_EDGE: u16 = 8;

/// Sample rates accepted for segment audio.
pub const SUPPORTED_SAMPLE_RATES: [u32; 3] = [16_000, 44_100, 48_000];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MediaError {
    #[error("frame is {width}x{height}; both edges must be at least {MIN_FRAME_EDGE}")]
    FrameTooSmall { width: u16, height: u16 },
    #[error("pixel buffer holds {actual} samples, expected {expected}")]
    PixelCountMismatch { expected: usize, actual: usize },
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedSampleRate(u32),
    #[error("invalid frame rate {num}/{den}")]
    InvalidFps { num: u16, den: u16 },
    #[error("segment has no frames")]
    EmptySegment,
    #[error("frame {index} is {width}x{height}, segment frames are {expected_width}x{expected_height}")]
    MixedFrameDimensions {
        index: usize,
        width: u16,
        height: u16,
        expected_width: u16,
        expected_height: u16,
    },
    #[error("audio holds {actual} samples, {frames} frames need {expected_lo}..={expected_hi}")]
    AudioDurationMismatch {
        frames: usize,
        actual: usize,
        expected_lo: u64,
        expected_hi: u64,
    },
    #[error("frames are {a_width}x{a_height} and {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: u16,
        a_height: u16,
        b_width: u16,
        b_height: u16,
    },
}

/// A rational frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fps {
    pub num: u16,
    pub den: u16,
}

impl Default for Fps {
    fn default() -> Self {
        Fps { num: 30, den: 1 }
    }
}

impl Fps {
    pub fn new(num: u16, den: u16) -> Result<Self, MediaError> {
        if num == 0 || den == 0 {
            return Err(MediaError::InvalidFps { num, den });
        }
        Ok(Fps { num, den })
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Presentation time of a frame, rounded half-up to whole milliseconds.
    pub fn frame_to_ms(self, frame_index: u64) -> u64 {
        let n = frame_index as u128 * 1000 * self.den as u128;
        let d = self.num as u128;
        ((2 * n + d) / (2 * d)) as u64
    }

    /// Audio sample index at which `frame_index` begins, for the given rate.
    pub fn frame_to_sample(self, frame_index: u64, sample_rate: u32) -> u64 {
        let n = frame_index as u128 * sample_rate as u128 * self.den as u128;
        let d = self.num as u128;
        ((2 * n + d) / (2 * d)) as u64
    }

    pub fn timecode(self, frame_index: u64) -> Timecode {
        Timecode {
            frame_index,
            time_ms: self.frame_to_ms(frame_index),
        }
    }
}

/// Frame number and presentation time of the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timecode {
    pub frame_index: u64,
    pub time_ms: u64,
}

/// One 8-bit luma picture, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u16,
    height: u16,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u16, height: u16, pixels: Vec<u8>) -> Result<Self, MediaError> {
        if width < MIN_FRAME_EDGE || height < MIN_FRAME_EDGE {
            return Err(MediaError::FrameTooSmall { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(MediaError::PixelCountMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u16, height: u16, value: u8) -> Result<Self, MediaError> {
        Frame::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width as usize + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        let w = self.width as usize;
        &self.pixels[y * w..(y + 1) * w]
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Mean absolute luma difference between two frames of equal size.
pub fn frame_abs_diff(a: &Frame, b: &Frame) -> Result<f64, MediaError> {
    if !a.same_dims(b) {
        return Err(MediaError::DimensionMismatch {
            a_width: a.width,
            a_height: a.height,
            b_width: b.width,
            b_height: b.height,
        });
    }
    let total: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&p, &q)| p.abs_diff(q) as u64)
        .sum();
    Ok(total as f64 / a.pixels.len() as f64)
}

/// Mono signed 16-bit PCM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioBlock {
    sample_rate: u32,
    samples: Vec<i16>,
}

impl AudioBlock {
    pub fn new(sample_rate: u32, samples: Vec<i16>) -> Result<Self, MediaError> {
        if !SUPPORTED_SAMPLE_RATES.contains(&sample_rate) {
            return Err(MediaError::UnsupportedSampleRate(sample_rate));
        }
        Ok(AudioBlock {
            sample_rate,
            samples,
        })
    }

    pub fn silence(sample_rate: u32, len: usize) -> Result<Self, MediaError> {
        AudioBlock::new(sample_rate, vec![0; len])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copy of `range`, clamped to the available samples.
    pub fn slice(&self, start: usize, end: usize) -> AudioBlock {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioBlock {
            sample_rate: self.sample_rate,
            samples: self.samples[start..end].to_vec(),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * 2);
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }
}

/// A timed run of frames with its audio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    segment_id: String,
    fps: Fps,
    frames: Vec<Frame>,
    audio: AudioBlock,
    start_time_ms: u64,
    logo_overlaid: bool,
}

impl Segment {
    pub fn new(
        segment_id: impl Into<String>,
        fps: Fps,
        frames: Vec<Frame>,
        audio: AudioBlock,
        start_time_ms: u64,
    ) -> Result<Self, MediaError> {
        Fps::new(fps.num, fps.den)?;
        let first = frames.first().ok_or(MediaError::EmptySegment)?;
        let (w, h) = (first.width, first.height);
        for (index, f) in frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(MediaError::MixedFrameDimensions {
                    index,
                    width: f.width,
                    height: f.height,
                    expected_width: w,
                    expected_height: h,
                });
            }
        }
        check_audio_duration(fps, frames.len(), &audio)?;
        Ok(Segment {
            segment_id: segment_id.into(),
            fps,
            frames,
            audio,
            start_time_ms,
            logo_overlaid: false,
        })
    }

    /// Marks the segment as carrying the broadcaster logo (corpus ground truth).
    pub fn with_logo_overlaid(mut self, logo: bool) -> Self {
        self.logo_overlaid = logo;
        self
    }

    pub fn with_id(mut self, segment_id: impl Into<String>) -> Self {
        self.segment_id = segment_id.into();
        self
    }

    pub fn segment_id(&self) -> &str {
        &self.segment_id
    }

    pub fn fps(&self) -> Fps {
        self.fps
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn audio(&self) -> &AudioBlock {
        &self.audio
    }

    pub fn start_time_ms(&self) -> u64 {
        self.start_time_ms
    }

    pub fn logo_overlaid(&self) -> bool {
        self.logo_overlaid
    }

    pub fn width(&self) -> u16 {
        self.frames[0].width
    }

    pub fn height(&self) -> u16 {
        self.frames[0].height
    }

    /// Timeline frame index of the first frame, recovered from `start_time_ms`.
    pub fn start_frame(&self) -> u64 {
        let n = self.start_time_ms as u128 * self.fps.num as u128;
        let d = 1000 * self.fps.den as u128;
        ((2 * n + d) / (2 * d)) as u64
    }

    /// Time from this segment's start to the presentation time of the frame
    /// after its last one, so contiguous segments chain without rounding drift.
    pub fn duration_ms(&self) -> u64 {
        let end = self.start_frame() + self.frames.len() as u64;
        self.fps.frame_to_ms(end).saturating_sub(self.start_time_ms)
    }

    /// Audio samples covering local frames `[start, end)`.
    pub fn audio_for_frames(&self, start: usize, end: usize) -> AudioBlock {
        let sr = self.audio.sample_rate;
        let s0 = self.fps.frame_to_sample(start as u64, sr) as usize;
        let s1 = self.fps.frame_to_sample(end as u64, sr) as usize;
        self.audio.slice(s0, s1)
    }

    pub fn into_parts(self) -> (Vec<Frame>, AudioBlock) {
        (self.frames, self.audio)
    }
}

fn check_audio_duration(fps: Fps, frames: usize, audio: &AudioBlock) -> Result<(), MediaError> {
    // |samples - frames * sr * den / num| <= 1, kept in integers.
    let num = fps.num as u128;
    let exact = frames as u128 * audio.sample_rate as u128 * fps.den as u128;
    let actual = audio.samples.len() as u128 * num;
    let ok = actual.abs_diff(exact) <= num;
    if ok {
        return Ok(());
    }
    let lo = exact.saturating_sub(num).div_ceil(num) as u64;
    let hi = ((exact + num) / num) as u64;
    Err(MediaError::AudioDurationMismatch {
        frames,
        actual: audio.samples.len(),
        expected_lo: lo,
        expected_hi: hi,
    })
}
