#![allow(dead_code)]

use adsplice_core::media::{AudioBlock, Fps, Frame, Segment};
use adsplice_core::stream::Stream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FPS30: Fps = Fps { num: 30, den: 1 };

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn noise_frame(r: &mut impl Rng, w: u16, h: u16) -> Frame {
    let px = (0..w as usize * h as usize).map(|_| r.random()).collect();
    Frame::new(w, h, px).unwrap()
}

pub fn audio_for(fps: Fps, frames: usize, sr: u32, r: &mut impl Rng) -> AudioBlock {
    let n = fps.frame_to_sample(frames as u64, sr) as usize;
    AudioBlock::new(sr, (0..n).map(|_| r.random_range(-8000..8000)).collect()).unwrap()
}

pub fn segment_from(frames: Vec<Frame>, r: &mut impl Rng, start_ms: u64) -> Segment {
    let audio = audio_for(FPS30, frames.len(), 16_000, r);
    Segment::new("s", FPS30, frames, audio, start_ms).unwrap()
}

pub fn random_segment(r: &mut impl Rng, n: usize, w: u16, h: u16) -> Segment {
    let frames = (0..n).map(|_| noise_frame(r, w, h)).collect();
    segment_from(frames, r, 0)
}

/// Stream of `segments` uniform segments, each `seg_frames` long, flat frames
/// of distinct luma so spliced regions stay identifiable.
pub fn flat_stream(r: &mut impl Rng, segments: usize, seg_frames: usize, luma: u8) -> Stream {
    let mut out = Vec::new();
    for k in 0..segments {
        let frames = (0..seg_frames).map(|_| Frame::filled(16, 8, luma).unwrap()).collect();
        let start = FPS30.frame_to_ms((k * seg_frames) as u64);
        out.push(segment_from(frames, r, start).with_id(format!("seg{k}")));
    }
    Stream::new(out).unwrap()
}
