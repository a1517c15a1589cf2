//! Streams: ordered segments, stored on disk as `NNNNNN.lvs` files plus a
//! `stream.json` manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lvs::{self, LvsError};
use crate::media::{AudioBlock, Fps, Frame, MediaError, Segment};

pub const MANIFEST_FILE: &str = "stream.json";

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad manifest: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Lvs { path: PathBuf, source: LvsError },
    #[error("segment {index} does not match the stream: {detail}")]
    Inconsistent { index: usize, detail: String },
    #[error(transparent)]
    Media(#[from] MediaError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StreamError + '_ {
    move |source| StreamError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub fps: Fps,
    pub width: u16,
    pub height: u16,
    pub segment_ids: Vec<String>,
}

pub fn segment_file_name(index: usize) -> String {
    format!("{index:06}.lvs")
}

/// An in-memory stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    pub fps: Fps,
    pub width: u16,
    pub height: u16,
    pub segments: Vec<Segment>,
}

impl Stream {
    pub fn new(segments: Vec<Segment>) -> Result<Self, StreamError> {
        let first = segments.first().ok_or(StreamError::Media(MediaError::EmptySegment))?;
        let (fps, width, height) = (first.fps(), first.width(), first.height());
        for (index, s) in segments.iter().enumerate() {
            if s.fps() != fps || s.width() != width || s.height() != height {
                return Err(StreamError::Inconsistent {
                    index,
                    detail: format!(
                        "{}x{}@{}/{} vs {}x{}@{}/{}",
                        s.width(),
                        s.height(),
                        s.fps().num,
                        s.fps().den,
                        width,
                        height,
                        fps.num,
                        fps.den
                    ),
                });
            }
        }
        Ok(Stream {
            fps,
            width,
            height,
            segments,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.segments.iter().map(Segment::frame_count).sum()
    }

    pub fn duration_ms(&self) -> u64 {
        self.fps.frame_to_ms(self.frame_count() as u64)
    }

    pub fn sample_rate(&self) -> u32 {
        self.segments[0].audio().sample_rate()
    }

    /// Global index of the first frame of each segment.
    pub fn segment_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.segments
            .iter()
            .map(|s| {
                let o = acc;
                acc += s.frame_count();
                o
            })
            .collect()
    }

    /// Flattens the stream into one timeline of frames and samples.
    pub fn timeline(&self) -> Timeline {
        let mut frames = Vec::with_capacity(self.frame_count());
        let mut samples = Vec::new();
        for s in &self.segments {
            frames.extend_from_slice(s.frames());
            samples.extend_from_slice(s.audio().samples());
        }
        Timeline {
            fps: self.fps,
            sample_rate: self.sample_rate(),
            frames,
            samples,
        }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            fps: self.fps,
            width: self.width,
            height: self.height,
            segment_ids: self.segments.iter().map(|s| s.segment_id().to_owned()).collect(),
        }
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), StreamError> {
        let mut writer = StreamWriter::create(dir, self.fps, self.width, self.height)?;
        for s in &self.segments {
            writer.push(s)?;
        }
        writer.finish()
    }

    pub fn read_dir(dir: &Path) -> Result<Self, StreamError> {
        let reader = StreamDir::open(dir)?;
        let segments = (0..reader.len()).map(|i| reader.read(i)).collect::<Result<Vec<_>, _>>()?;
        Stream::new(segments)
    }
}

/// Frames and audio of a whole stream laid end to end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub fps: Fps,
    pub sample_rate: u32,
    pub frames: Vec<Frame>,
    pub samples: Vec<i16>,
}

impl Timeline {
    pub fn sample_at_frame(&self, frame: usize) -> usize {
        self.fps.frame_to_sample(frame as u64, self.sample_rate) as usize
    }

    /// Cuts the timeline into segments of `segment_frames` frames (the last may
    /// be shorter), ids `000000..`, timestamps contiguous from zero.
    pub fn segment(self, segment_frames: usize) -> Result<Stream, StreamError> {
        assert!(segment_frames > 0, "segment length must be positive");
        let total = self.frames.len();
        let mut segments = Vec::with_capacity(total.div_ceil(segment_frames));
        let mut frames = self.frames.into_iter();
        let mut start = 0;
        while start < total {
            let end = (start + segment_frames).min(total);
            let chunk: Vec<Frame> = frames.by_ref().take(end - start).collect();
            let s0 = self.fps.frame_to_sample(start as u64, self.sample_rate) as usize;
            let s1 = self.fps.frame_to_sample(end as u64, self.sample_rate) as usize;
            // Sources may be a sample short per segment; pad with silence.
            let mut pcm = self.samples[s0.min(self.samples.len())..s1.min(self.samples.len())].to_vec();
            pcm.resize(s1 - s0, 0);
            let audio = AudioBlock::new(self.sample_rate, pcm)?;
            let seg = Segment::new(
                format!("{:06}", segments.len()),
                self.fps,
                chunk,
                audio,
                self.fps.frame_to_ms(start as u64),
            )?;
            segments.push(seg);
            start = end;
        }
        Stream::new(segments)
    }
}

/// Lazily reads segments of a stream directory.
#[derive(Debug, Clone)]
pub struct StreamDir {
    dir: PathBuf,
    manifest: Manifest,
}

impl StreamDir {
    pub fn open(dir: &Path) -> Result<Self, StreamError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(io_err(&path))?;
        let manifest = serde_json::from_slice(&text).map_err(|source| StreamError::Manifest { path, source })?;
        Ok(StreamDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.manifest.segment_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.segment_ids.is_empty()
    }

    pub fn read(&self, index: usize) -> Result<Segment, StreamError> {
        let path = self.dir.join(segment_file_name(index));
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let seg = lvs::read_segment(&self.manifest.segment_ids[index], &bytes)
            .map_err(|source| StreamError::Lvs { path, source })?;
        if seg.fps() != self.manifest.fps || seg.width() != self.manifest.width || seg.height() != self.manifest.height {
            return Err(StreamError::Inconsistent {
                index,
                detail: "geometry differs from manifest".into(),
            });
        }
        Ok(seg)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Segment, StreamError>> + '_ {
        (0..self.len()).map(|i| self.read(i))
    }
}

/// Appends segments to a stream directory; the manifest is rewritten on
/// every push so a concurrent reader always sees complete segments only.
#[derive(Debug)]
pub struct StreamWriter {
    dir: PathBuf,
    manifest: Manifest,
}

impl StreamWriter {
    pub fn create(dir: &Path, fps: Fps, width: u16, height: u16) -> Result<Self, StreamError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let w = StreamWriter {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                fps,
                width,
                height,
                segment_ids: Vec::new(),
            },
        };
        w.write_manifest()?;
        Ok(w)
    }

    pub fn push(&mut self, seg: &Segment) -> Result<(), StreamError> {
        let index = self.manifest.segment_ids.len();
        if seg.fps() != self.manifest.fps || seg.width() != self.manifest.width || seg.height() != self.manifest.height {
            return Err(StreamError::Inconsistent {
                index,
                detail: "geometry differs from stream".into(),
            });
        }
        let path = self.dir.join(segment_file_name(index));
        fs::write(&path, lvs::write_segment(seg)).map_err(io_err(&path))?;
        self.manifest.segment_ids.push(seg.segment_id().to_owned());
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<(), StreamError> {
        let path = self.dir.join(MANIFEST_FILE);
        let tmp = self.dir.join(".stream.json.tmp");
        let body = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    pub fn len(&self) -> usize {
        self.manifest.segment_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.segment_ids.is_empty()
    }

    pub fn finish(self) -> Result<(), StreamError> {
        self.write_manifest()
    }
}
