//! Synthetic broadcast corpus. Programme scenes are drifting textures over
//! band-limited noise audio with the channel logo blended into the top-right
//! corner; ads carry per-category luma, texture and tone signatures and no logo.
//!
//! Everything is a pure function of the spec (seed included), so segments can
//! be rendered lazily and in any order.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::PROGRAM_LABEL;
use crate::media::{AudioBlock, Fps, Frame, MediaError, Segment, SUPPORTED_SAMPLE_RATES};
use crate::meta::{TargetPolicy, DEFAULT_TARGET_KEY};
use crate::pgm;
use crate::placer::{AdRepository, PlaceError};
use crate::stream::{Stream, StreamError, StreamWriter};

pub const AD_CATEGORIES: [&str; 3] = ["auto", "food", "tech"];
pub const LOGO_WIDTH: u16 = 24;
pub const LOGO_HEIGHT: u16 = 16;
pub const LOGO_ALPHA: f64 = 0.85;
pub const LOGO_MARGIN: usize = 4;

pub const STREAM_DIR: &str = "stream";
pub const TRUTH_FILE: &str = "truth.json";
pub const SCENES_FILE: &str = "scenes.json";
pub const LOGO_FILE: &str = "logo.pgm";
pub const SPEC_FILE: &str = "corpus.json";
pub const ADS_DIR: &str = "ads";
pub const POLICY_FILE: &str = "policy.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    SpecViolation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Place(#[from] PlaceError),
}

fn violation(msg: impl Into<String>) -> CorpusError {
    CorpusError::SpecViolation(msg.into())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    fs::write(path, bytes).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    Program { seconds: f64 },
    Ad { category: String, seconds: f64 },
}

impl Block {
    pub fn program(seconds: f64) -> Block {
        Block::Program { seconds }
    }

    pub fn ad(category: &str, seconds: f64) -> Block {
        Block::Ad {
            category: category.to_owned(),
            seconds,
        }
    }

    pub fn seconds(&self) -> f64 {
        match self {
            Block::Program { seconds } | Block::Ad { seconds, .. } => *seconds,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Block::Program { .. } => PROGRAM_LABEL,
            Block::Ad { category, .. } => category,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub width: u16,
    pub height: u16,
    pub fps: Fps,
    pub sample_rate: u32,
    pub segment_seconds: f64,
    /// Scene (shot) length bounds inside a block, seconds.
    pub min_shot_seconds: f64,
    pub max_shot_seconds: f64,
    pub blocks: Vec<Block>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 0,
            width: 160,
            height: 120,
            fps: Fps::default(),
            sample_rate: 16_000,
            segment_seconds: 10.0,
            min_shot_seconds: 2.0,
            max_shot_seconds: 5.0,
            blocks: Vec::new(),
        }
    }
}

impl CorpusSpec {
    /// 150 s with three separated, segment-aligned ad breaks, one per category.
    pub fn golden(seed: u64) -> Self {
        CorpusSpec {
            seed,
            blocks: vec![
                Block::program(30.0),
                Block::ad("auto", 20.0),
                Block::program(30.0),
                Block::ad("food", 10.0),
                Block::program(20.0),
                Block::ad("tech", 20.0),
                Block::program(20.0),
            ],
            ..Default::default()
        }
    }

    /// A seeded random schedule of about `segments` segments: programme runs of
    /// 1..=4 segments alternating with ad breaks of 1..=3 segments.
    pub fn long(seed: u64, segments: usize) -> Self {
        let base = CorpusSpec {
            seed,
            ..Default::default()
        };
        let seg = base.segment_seconds;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x10c0_5eed);
        let mut blocks = Vec::new();
        let mut n = 0;
        while n < segments {
            let p = rng.random_range(1..=4).min(segments - n);
            blocks.push(Block::program(p as f64 * seg));
            n += p;
            if n >= segments {
                break;
            }
            let a = rng.random_range(1..=3).min(segments - n);
            let cat = AD_CATEGORIES[rng.random_range(0..AD_CATEGORIES.len())];
            blocks.push(Block::ad(cat, a as f64 * seg));
            n += a;
        }
        CorpusSpec { blocks, ..base }
    }

    pub fn segment_frames(&self) -> usize {
        (self.segment_seconds * self.fps.as_f64()).round() as usize
    }

    fn seconds_to_frames(&self, s: f64) -> usize {
        (s * self.fps.as_f64()).round() as usize
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        Fps::new(self.fps.num, self.fps.den).map_err(|e| violation(e.to_string()))?;
        if !SUPPORTED_SAMPLE_RATES.contains(&self.sample_rate) {
            return Err(violation(format!("sample rate {} unsupported", self.sample_rate)));
        }
        let (min_w, min_h) = (
            2 * (LOGO_WIDTH as usize + LOGO_MARGIN),
            2 * (LOGO_HEIGHT as usize + LOGO_MARGIN),
        );
        if (self.width as usize) < min_w || (self.height as usize) < min_h {
            return Err(violation(format!(
                "resolution {}x{} too small for the logo, need at least {min_w}x{min_h}",
                self.width, self.height
            )));
        }
        if self.segment_frames() == 0 {
            return Err(violation("segment_seconds is shorter than one frame"));
        }
        if !(self.min_shot_seconds > 0.0 && self.min_shot_seconds <= self.max_shot_seconds) {
            return Err(violation("shot length bounds must satisfy 0 < min <= max"));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if !(b.seconds().is_finite() && self.seconds_to_frames(b.seconds()) > 0) {
                return Err(violation(format!("block {i} is shorter than one frame")));
            }
            if let Block::Ad { category, .. } = b {
                if !AD_CATEGORIES.contains(&category.as_str()) {
                    return Err(violation(format!(
                        "block {i}: unknown ad category {category:?}, expected one of {AD_CATEGORIES:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A ground-truth ad interval; `end_frame` inclusive, `end_timestamp_ms` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_timestamp_ms: u64,
    pub end_timestamp_ms: u64,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    /// Oriented sinusoidal grating drifting across the frame.
    Grating,
    /// Product of two sinusoids: blobs or a checker depending on period.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Look {
    pub base: f64,
    pub contrast: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
    /// Phase advance per frame, radians.
    pub drift: f64,
    pub texture: Texture,
    pub noise: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sound {
    /// One-pole low-passed white noise.
    Noise { amplitude: f64, smoothing: f64 },
    /// Tone with its second harmonic over a little noise.
    Tone { hz: f64, amplitude: f64 },
}

/// One generated shot: a hard cut opens it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub start_frame: usize,
    pub len: usize,
    pub label: String,
    pub look: Look,
    pub sound: Sound,
}

impl Scene {
    pub fn end_frame(&self) -> usize {
        self.start_frame + self.len
    }

    pub fn is_ad(&self) -> bool {
        self.label != PROGRAM_LABEL
    }
}

fn draw_look(rng: &mut ChaCha8Rng, label: &str) -> Look {
    let angle = rng.random_range(0.0..TAU);
    let (base, contrast, period, drift, texture) = match label {
        "auto" => (
            rng.random_range(35.0..60.0),
            rng.random_range(40.0..60.0),
            rng.random_range(16.0..24.0),
            rng.random_range(0.5..0.8),
            Texture::Grating,
        ),
        "food" => (
            rng.random_range(185.0..215.0),
            rng.random_range(15.0..25.0),
            rng.random_range(40.0..60.0),
            rng.random_range(0.03..0.08),
            Texture::Product,
        ),
        "tech" => (
            rng.random_range(110.0..140.0),
            rng.random_range(50.0..70.0),
            rng.random_range(6.0..10.0),
            rng.random_range(0.2..0.4),
            Texture::Product,
        ),
        _ => (
            rng.random_range(70.0..170.0),
            rng.random_range(25.0..50.0),
            rng.random_range(12.0..40.0),
            rng.random_range(0.05..0.2),
            Texture::Grating,
        ),
    };
    let k = TAU / period;
    let (kx, ky) = match texture {
        Texture::Grating => (k * angle.cos(), k * angle.sin()),
        Texture::Product => (k, k * rng.random_range(0.8..1.25)),
    };
    Look {
        base,
        contrast,
        kx,
        ky,
        phase: rng.random_range(0.0..TAU),
        drift,
        texture,
        noise: 6,
    }
}

fn draw_sound(rng: &mut ChaCha8Rng, label: &str) -> Sound {
    let tone = |hz: f64, rng: &mut ChaCha8Rng| Sound::Tone {
        hz: hz * rng.random_range(0.97..1.03),
        amplitude: rng.random_range(5000.0..8000.0),
    };
    match label {
        "auto" => tone(300.0, rng),
        "food" => tone(1200.0, rng),
        "tech" => tone(3000.0, rng),
        _ => Sound::Noise {
            amplitude: rng.random_range(3000.0..6000.0),
            smoothing: rng.random_range(0.3..0.7),
        },
    }
}

const NOISE_TAPS: usize = 16;

/// Uniform noise in [-1, 1) keyed by sample index.
fn white(seed: u64, index: usize) -> f64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// The broadcaster logo: a ring beside a bracket on a dark plate.
pub fn logo_pattern() -> Frame {
    let (w, h) = (LOGO_WIDTH as usize, LOGO_HEIGHT as usize);
    let mut px = vec![30u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - 7.5, y as f64 - 7.5);
            let r = (dx * dx + dy * dy).sqrt();
            let ring = (4.0..6.5).contains(&r);
            let bracket = (16..=21).contains(&x) && (2..=13).contains(&y) && (x <= 17 || y <= 3 || y >= 12 || y == 7 || y == 8);
            if ring || bracket {
                px[y * w + x] = 235;
            }
        }
    }
    Frame::new(LOGO_WIDTH, LOGO_HEIGHT, px).expect("logo dimensions are valid")
}

/// Top-left corner of the logo in a `width`-wide frame.
pub fn logo_position(width: u16) -> (usize, usize) {
    (width as usize - LOGO_WIDTH as usize - LOGO_MARGIN, LOGO_MARGIN)
}

/// A planned corpus; frames and audio are rendered on demand.
#[derive(Debug, Clone)]
pub struct Corpus {
    spec: CorpusSpec,
    scenes: Vec<Scene>,
    truth: Vec<TruthInterval>,
    total_frames: usize,
    logo: Frame,
}

impl Corpus {
    pub fn new(spec: CorpusSpec) -> Result<Self, CorpusError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let min_shot = spec.seconds_to_frames(spec.min_shot_seconds).max(1);
        let max_shot = spec.seconds_to_frames(spec.max_shot_seconds).max(min_shot);
        let mut scenes: Vec<Scene> = Vec::new();
        let mut truth = Vec::new();
        let mut start = 0usize;
        for block in &spec.blocks {
            let len = spec.seconds_to_frames(block.seconds());
            let label = block.label();
            if let Block::Ad { category, .. } = block {
                truth.push(TruthInterval {
                    start_frame: start as u64,
                    end_frame: (start + len - 1) as u64,
                    start_timestamp_ms: spec.fps.frame_to_ms(start as u64),
                    end_timestamp_ms: spec.fps.frame_to_ms((start + len) as u64),
                    category: category.clone(),
                });
            }
            let mut offset = 0;
            while offset < len {
                let mut shot = rng.random_range(min_shot..=max_shot).min(len - offset);
                if len - offset - shot < min_shot {
                    shot = len - offset;
                }
                // prefer a clear brightness step at every cut
                let mut look = draw_look(&mut rng, label);
                for _ in 0..8 {
                    if scenes.last().is_none_or(|p| (p.look.base - look.base).abs() >= 25.0) {
                        break;
                    }
                    look = draw_look(&mut rng, label);
                }
                scenes.push(Scene {
                    start_frame: start + offset,
                    len: shot,
                    label: label.to_owned(),
                    look,
                    sound: draw_sound(&mut rng, label),
                });
                offset += shot;
            }
            start += len;
        }
        Ok(Corpus {
            spec,
            scenes,
            truth,
            total_frames: start,
            logo: logo_pattern(),
        })
    }

    pub fn spec(&self) -> &CorpusSpec {
        &self.spec
    }

    pub fn scenes(&self) -> &[Scene] {
        &self.scenes
    }

    pub fn truth(&self) -> &[TruthInterval] {
        &self.truth
    }

    pub fn logo(&self) -> &Frame {
        &self.logo
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn segment_count(&self) -> usize {
        self.total_frames.div_ceil(self.spec.segment_frames())
    }

    fn scene_index(&self, frame: usize) -> usize {
        self.scenes.partition_point(|s| s.end_frame() <= frame)
    }

    pub fn scene_at(&self, frame: usize) -> &Scene {
        &self.scenes[self.scene_index(frame)]
    }

    pub fn render_frame(&self, index: usize) -> Frame {
        let scene = self.scene_at(index);
        let look = &scene.look;
        let (w, h) = (self.spec.width as usize, self.spec.height as usize);
        let t = (index - scene.start_frame) as f64;
        let phi = look.phase + look.drift * t;
        let (sx, cx): (Vec<f64>, Vec<f64>) = (0..w).map(|x| (look.kx * x as f64 + phi).sin_cos()).unzip();
        let (sy, cy): (Vec<f64>, Vec<f64>) = (0..h)
            .map(|y| {
                let a = look.ky * y as f64;
                match look.texture {
                    Texture::Grating => a.sin_cos(),
                    Texture::Product => (a + 0.5 * phi).sin_cos(),
                }
            })
            .unzip();

        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed);
        rng.set_stream(index as u64 + 1);
        let span = 2 * look.noise as u32 + 1;
        let mut noise_word = 0u32;
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let wave = match look.texture {
                    Texture::Grating => sx[x] * cy[y] + cx[x] * sy[y],
                    Texture::Product => sx[x] * sy[y],
                };
                if (x & 3) == 0 {
                    noise_word = rng.next_u32();
                }
                let n = ((noise_word >> (8 * (x & 3))) & 0xff) % span;
                let v = look.base + look.contrast * wave + n as f64 - look.noise as f64;
                px.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        if !scene.is_ad() {
            let (x0, y0) = logo_position(self.spec.width);
            let lw = LOGO_WIDTH as usize;
            for (ly, row) in self.logo.pixels().chunks(lw).enumerate() {
                for (lx, &l) in row.iter().enumerate() {
                    let p = &mut px[(y0 + ly) * w + x0 + lx];
                    *p = (LOGO_ALPHA * l as f64 + (1.0 - LOGO_ALPHA) * *p as f64).round() as u8;
                }
            }
        }
        Frame::new(self.spec.width, self.spec.height, px).expect("rendered frame is well formed")
    }

    /// PCM for global samples `[s0, s1)`; each sample depends only on its index.
    pub fn render_audio(&self, s0: usize, s1: usize) -> Vec<i16> {
        let sr = self.spec.sample_rate;
        let fps = self.spec.fps;
        let seed = self.spec.seed;
        (s0..s1)
            .map(|s| {
                // frame containing sample s: largest f with frame_to_sample(f) <= s
                let f = ((s as u128 * fps.num as u128) / (sr as u128 * fps.den as u128)) as usize;
                let v = match self.scene_at(f.min(self.total_frames - 1)).sound {
                    Sound::Noise { amplitude, smoothing } => {
                        // truncated one-pole low-pass as an FIR over hashed white noise
                        let (mut acc, mut gain, mut h) = (0.0, 0.0, 1.0);
                        for k in 0..NOISE_TAPS.min(s + 1) {
                            acc += h * white(seed, s - k);
                            gain += h;
                            h *= smoothing;
                        }
                        amplitude * acc / gain * 2.0
                    }
                    Sound::Tone { hz, amplitude } => {
                        let t = s as f64 / sr as f64;
                        amplitude * ((TAU * hz * t).sin() + 0.5 * (TAU * 2.0 * hz * t).sin()) / 1.5 + 200.0 * white(seed, s)
                    }
                };
                v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
            })
            .collect()
    }

    pub fn segment_range(&self, k: usize) -> std::ops::Range<usize> {
        let n = self.spec.segment_frames();
        k * n..((k + 1) * n).min(self.total_frames)
    }

    pub fn segment(&self, k: usize) -> Result<Segment, CorpusError> {
        let range = self.segment_range(k);
        let fps = self.spec.fps;
        let sr = self.spec.sample_rate;
        let frames: Vec<Frame> = range.clone().map(|i| self.render_frame(i)).collect();
        let s0 = fps.frame_to_sample(range.start as u64, sr) as usize;
        let s1 = fps.frame_to_sample(range.end as u64, sr) as usize;
        let audio = AudioBlock::new(sr, self.render_audio(s0, s1))?;
        let logo_frames = range.clone().filter(|&i| !self.scene_at(i).is_ad()).count();
        Ok(Segment::new(format!("{k:06}"), fps, frames, audio, fps.frame_to_ms(range.start as u64))?
            .with_logo_overlaid(logo_frames * 2 > range.len()))
    }

    pub fn segments(&self) -> impl Iterator<Item = Result<Segment, CorpusError>> + '_ {
        (0..self.segment_count()).map(|k| self.segment(k))
    }

    /// Majority label of a segment's frames.
    pub fn segment_label(&self, k: usize) -> String {
        label_of_range(&self.scenes, self.segment_range(k))
    }

    pub fn to_stream(&self) -> Result<Stream, CorpusError> {
        Ok(Stream::new(self.segments().collect::<Result<Vec<_>, _>>()?)?)
    }

    /// Writes `stream/`, `truth.json`, `scenes.json`, `logo.pgm` and `corpus.json`.
    pub fn write(&self, out: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(out).map_err(|source| CorpusError::Io {
            path: out.to_path_buf(),
            source,
        })?;
        let mut writer = StreamWriter::create(&out.join(STREAM_DIR), self.spec.fps, self.spec.width, self.spec.height)?;
        for seg in self.segments() {
            writer.push(&seg?)?;
        }
        writer.finish()?;
        write_file(&out.join(TRUTH_FILE), &to_json(&self.truth))?;
        write_file(&out.join(SCENES_FILE), &to_json(&self.scenes))?;
        write_file(&out.join(LOGO_FILE), &pgm::encode(&self.logo))?;
        write_file(&out.join(SPEC_FILE), &to_json(&self.spec))?;
        Ok(())
    }
}

/// Majority label over `range`, earliest scene on ties.
pub fn label_of_range(scenes: &[Scene], range: std::ops::Range<usize>) -> String {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for s in scenes {
        let overlap = s.end_frame().min(range.end).saturating_sub(s.start_frame.max(range.start));
        if overlap == 0 {
            continue;
        }
        match counts.iter_mut().find(|(l, _)| *l == s.label) {
            Some(c) => c.1 += overlap,
            None => counts.push((&s.label, overlap)),
        }
    }
    counts
        .iter()
        .fold(None::<(&str, usize)>, |best, &(l, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((l, n)),
        })
        .map_or_else(|| PROGRAM_LABEL.to_owned(), |(l, _)| l.to_owned())
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("corpus records serialize");
    out.push(b'\n');
    out
}

/// Replacement ads: for every category a short and a long spot.
pub fn ad_library(spec: &CorpusSpec) -> Result<Vec<(String, String, Stream)>, CorpusError> {
    let mut out = Vec::new();
    for (c, cat) in AD_CATEGORIES.iter().enumerate() {
        for (n, seconds) in [6.0, 15.0].into_iter().enumerate() {
            let ad_spec = CorpusSpec {
                seed: spec.seed.wrapping_mul(31).wrapping_add(1 + 2 * c as u64 + n as u64),
                blocks: vec![Block::ad(cat, seconds)],
                ..spec.clone()
            };
            let stream = Corpus::new(ad_spec)?.to_stream()?;
            out.push((format!("adsplice://ads/{cat}/{}", n + 1), cat.to_string(), stream));
        }
    }
    Ok(out)
}

/// Writes the ad library into `root` and returns the default target policy.
pub fn write_ad_repository(spec: &CorpusSpec, root: &Path) -> Result<(AdRepository, TargetPolicy), CorpusError> {
    let mut repo = AdRepository::open(root)?;
    let mut policy = TargetPolicy::new();
    for (uri, category, stream) in ad_library(spec)? {
        repo.insert(&uri, &category, &stream)?;
        policy.entry(category).or_insert(uri);
    }
    let default = policy[AD_CATEGORIES[0]].clone();
    policy.insert(DEFAULT_TARGET_KEY.to_owned(), default);
    Ok((repo, policy))
}

/// Generates the corpus plus its ad repository (`ads/`) and `policy.json`.
pub fn generate_corpus(spec: CorpusSpec, out: &Path) -> Result<Corpus, CorpusError> {
    let corpus = Corpus::new(spec)?;
    corpus.write(out)?;
    let (_, policy) = write_ad_repository(corpus.spec(), &out.join(ADS_DIR))?;
    write_file(&out.join(POLICY_FILE), &to_json(&policy))?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(blocks: Vec<Block>) -> CorpusSpec {
        CorpusSpec {
            seed: 3,
            width: 64,
            height: 48,
            blocks,
            ..Default::default()
        }
    }

    #[test]
    fn truth_intervals_from_blocks() {
        let c = Corpus::new(spec(vec![
            Block::program(60.0),
            Block::ad("auto", 30.0),
            Block::ad("food", 30.0),
            Block::program(60.0),
        ]))
        .unwrap();
        let spans: Vec<(u64, u64)> = c.truth().iter().map(|t| (t.start_frame, t.end_frame)).collect();
        assert_eq!(spans, [(1800, 2699), (2700, 3599)]);
        assert_eq!(c.truth()[0].end_timestamp_ms, 90_000);
        assert_eq!(c.total_frames(), 5400);
        assert_eq!(c.segment_count(), 18);
    }

    #[test]
    fn no_ads_no_truth() {
        let c = Corpus::new(spec(vec![Block::program(12.0)])).unwrap();
        assert!(c.truth().is_empty());
        assert_eq!(c.segment_count(), 2);
        assert_eq!(c.segment(1).unwrap().frame_count(), 60);
    }

    #[test]
    fn scenes_tile_blocks() {
        let c = Corpus::new(CorpusSpec::golden(5)).unwrap();
        let mut next = 0;
        for s in c.scenes() {
            assert_eq!(s.start_frame, next);
            assert!(s.len >= 60 && s.len <= 150 + 60, "{}", s.len);
            next = s.end_frame();
        }
        assert_eq!(next, c.total_frames());
        for t in c.truth() {
            assert!(c.scenes().iter().any(|s| s.start_frame as u64 == t.start_frame));
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let c = Corpus::new(spec(vec![Block::program(2.0), Block::ad("tech", 2.0)])).unwrap();
        let again = Corpus::new(c.spec().clone()).unwrap();
        for i in [0, 59, 60, 119] {
            assert_eq!(c.render_frame(i), again.render_frame(i));
        }
        assert_eq!(c.segment(0).unwrap(), again.segment(0).unwrap());
        let a = c.render_audio(100, 900);
        assert_eq!(a, again.render_audio(100, 900));
        assert_eq!(&a[200..300], &c.render_audio(300, 400)[..]);
    }

    #[test]
    fn logo_only_on_programme() {
        let c = Corpus::new(spec(vec![Block::program(1.0), Block::ad("food", 1.0), Block::program(1.0)])).unwrap();
        let (x0, y0) = logo_position(64);
        let logo = c.logo().clone();
        let near = |f: &Frame| {
            (0..16).all(|y| {
                (0..24).all(|x| {
                    let want = LOGO_ALPHA * logo.get(x, y) as f64;
                    let got = f.get(x0 + x, y0 + y) as f64;
                    (got - want).abs() <= 0.15 * 255.0 + 1.0
                })
            })
        };
        assert!(near(&c.render_frame(10)));
        assert!(!near(&c.render_frame(40)));
        assert!(c.segment(0).unwrap().logo_overlaid());
    }

    #[test]
    fn spec_violations() {
        assert!(Corpus::new(spec(vec![Block::ad("cars", 1.0)])).is_err());
        assert!(Corpus::new(spec(vec![Block::program(0.0)])).is_err());
        let tiny = CorpusSpec {
            width: 32,
            ..spec(vec![])
        };
        assert!(matches!(Corpus::new(tiny), Err(CorpusError::SpecViolation(_))));
    }

    #[test]
    fn long_schedule_reaches_target() {
        let s = CorpusSpec::long(1, 200);
        let c = Corpus::new(s.clone()).unwrap();
        assert_eq!(c.segment_count(), 200);
        assert!(s.blocks.iter().any(|b| matches!(b, Block::Ad { .. })));
        assert_eq!(CorpusSpec::long(1, 200), s);
    }
}
