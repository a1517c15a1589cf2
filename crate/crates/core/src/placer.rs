//! Ad substitution. Each metadata interval is cut out of the source timeline
//! and the target ad laid in its place: trimmed when longer, and when shorter
//! followed by its last frame held over silence. Frame count is preserved, so
//! the output has exactly the source duration.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::media::Frame;
use crate::meta::AdMetadata;
use crate::stream::{Stream, StreamError, Timeline};

pub const AD_META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum PlaceError {
    #[error("no ad indexed under {0:?}")]
    UnresolvedAdId(String),
    #[error("metadata record {record}: {detail}")]
    MetadataOutOfRange { record: usize, detail: String },
    #[error("ad {uri:?} cannot replace source content: {detail}")]
    IncompatibleAd { uri: String, detail: String },
    #[error("ad repository {path}: {detail}")]
    Repository { path: PathBuf, detail: String },
    #[error(transparent)]
    Stream(#[from] StreamError),
}

/// Contents of `meta.json` next to each stored ad.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdInfo {
    pub uri: String,
    pub category: String,
    pub duration_ms: u64,
}

/// Anything that can produce an ad stream for a target URI.
pub trait AdSource {
    fn load(&self, uri: &str) -> Result<Stream, PlaceError>;
}

impl AdSource for BTreeMap<String, Stream> {
    fn load(&self, uri: &str) -> Result<Stream, PlaceError> {
        self.get(uri).cloned().ok_or_else(|| PlaceError::UnresolvedAdId(uri.to_owned()))
    }
}

/// An indexed ad in a repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdHandle {
    pub info: AdInfo,
    pub dir: PathBuf,
}

impl AdHandle {
    pub fn load(&self) -> Result<Stream, PlaceError> {
        Ok(Stream::read_dir(&self.dir)?)
    }
}

/// Directory of ads, one subdirectory per URI named by a hash of the URI.
#[derive(Debug, Clone)]
pub struct AdRepository {
    root: PathBuf,
    index: BTreeMap<String, AdHandle>,
}

pub fn ad_dir_name(uri: &str) -> String {
    let digest = Sha256::digest(uri.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn repo_err(path: &Path, detail: impl Into<String>) -> PlaceError {
    PlaceError::Repository {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

impl AdRepository {
    /// Indexes every `<root>/*/meta.json`; a missing root is an empty repository.
    pub fn open(root: &Path) -> Result<Self, PlaceError> {
        let mut index = BTreeMap::new();
        let entries = match fs::read_dir(root) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Ok(AdRepository {
                    root: root.to_path_buf(),
                    index,
                })
            }
            Err(e) => return Err(repo_err(root, e.to_string())),
        };
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(AD_META_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let meta_path = dir.join(AD_META_FILE);
            let text = fs::read(&meta_path).map_err(|e| repo_err(&meta_path, e.to_string()))?;
            let info: AdInfo = serde_json::from_slice(&text).map_err(|e| repo_err(&meta_path, e.to_string()))?;
            if index.contains_key(&info.uri) {
                return Err(repo_err(&meta_path, format!("duplicate uri {:?}", info.uri)));
            }
            index.insert(info.uri.clone(), AdHandle { info, dir });
        }
        Ok(AdRepository {
            root: root.to_path_buf(),
            index,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &AdHandle> {
        self.index.values()
    }

    /// Stores `stream` under `uri`, replacing any previous ad with that URI.
    pub fn insert(&mut self, uri: &str, category: &str, stream: &Stream) -> Result<&AdHandle, PlaceError> {
        let dir = self.root.join(ad_dir_name(uri));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| repo_err(&dir, e.to_string()))?;
        }
        stream.write_dir(&dir)?;
        let info = AdInfo {
            uri: uri.to_owned(),
            category: category.to_owned(),
            duration_ms: stream.duration_ms(),
        };
        let meta_path = dir.join(AD_META_FILE);
        let body = serde_json::to_vec_pretty(&info).expect("ad info serializes");
        fs::write(&meta_path, body).map_err(|e| repo_err(&meta_path, e.to_string()))?;
        self.index.insert(uri.to_owned(), AdHandle { info, dir });
        Ok(&self.index[uri])
    }

    /// Exact-match lookup; no URI normalization is applied.
    pub fn resolve_target(&self, uri: &str) -> Result<&AdHandle, PlaceError> {
        self.index.get(uri).ok_or_else(|| PlaceError::UnresolvedAdId(uri.to_owned()))
    }
}

impl AdSource for AdRepository {
    fn load(&self, uri: &str) -> Result<Stream, PlaceError> {
        self.resolve_target(uri)?.load()
    }
}

fn check_records(records: &[AdMetadata], total_frames: usize) -> Result<(), PlaceError> {
    let mut next_free = 0u64;
    for (record, m) in records.iter().enumerate() {
        if m.end_frame < m.start_frame {
            return Err(PlaceError::MetadataOutOfRange {
                record,
                detail: format!("end_frame {} before start_frame {}", m.end_frame, m.start_frame),
            });
        }
        if m.end_frame >= total_frames as u64 {
            return Err(PlaceError::MetadataOutOfRange {
                record,
                detail: format!("end_frame {} beyond the last source frame {}", m.end_frame, total_frames - 1),
            });
        }
        if m.start_frame < next_free {
            return Err(PlaceError::MetadataOutOfRange {
                record,
                detail: format!("start_frame {} overlaps the previous interval", m.start_frame),
            });
        }
        next_free = m.end_frame + 1;
    }
    Ok(())
}

fn check_ad(uri: &str, ad: &Timeline, src: &Timeline, width: u16, height: u16) -> Result<(), PlaceError> {
    let incompatible = |detail: String| PlaceError::IncompatibleAd {
        uri: uri.to_owned(),
        detail,
    };
    if ad.fps != src.fps {
        return Err(incompatible(format!(
            "fps {}/{} vs {}/{}",
            ad.fps.num, ad.fps.den, src.fps.num, src.fps.den
        )));
    }
    if ad.sample_rate != src.sample_rate {
        return Err(incompatible(format!("sample rate {} vs {}", ad.sample_rate, src.sample_rate)));
    }
    let f = &ad.frames[0];
    if f.width() != width || f.height() != height {
        return Err(incompatible(format!(
            "{}x{} vs {}x{}",
            f.width(),
            f.height(),
            width,
            height
        )));
    }
    Ok(())
}

/// Replaces every metadata interval with its target ad and re-segments the
/// result into `segment_frames`-frame segments with timestamps from zero.
pub fn splice(
    source: &Stream,
    metadata: &[AdMetadata],
    ads: &impl AdSource,
    segment_frames: usize,
) -> Result<Stream, PlaceError> {
    let src = source.timeline();
    check_records(metadata, src.frames.len())?;
    let mut frames: Vec<Frame> = Vec::with_capacity(src.frames.len());
    let mut samples: Vec<i16> = Vec::with_capacity(src.samples.len());
    let copy_source = |frames: &mut Vec<Frame>, samples: &mut Vec<i16>, from: usize, to: usize| {
        frames.extend_from_slice(&src.frames[from..to]);
        let (s0, s1) = (src.sample_at_frame(from), src.sample_at_frame(to));
        let have = &src.samples[s0.min(src.samples.len())..s1.min(src.samples.len())];
        samples.extend_from_slice(have);
        samples.resize(samples.len() + (s1 - s0 - have.len()), 0);
    };

    let mut cursor = 0usize;
    for m in metadata {
        let (start, end) = (m.start_frame as usize, m.end_frame as usize + 1);
        copy_source(&mut frames, &mut samples, cursor, start);
        let ad = ads.load(&m.target_ad_id)?.timeline();
        check_ad(&m.target_ad_id, &ad, &src, source.width, source.height)?;

        let slot = end - start;
        let used = slot.min(ad.frames.len());
        frames.extend_from_slice(&ad.frames[..used]);
        let last = ad.frames[used - 1].clone();
        frames.extend(std::iter::repeat_n(last, slot - used));

        let needed = src.sample_at_frame(end) - src.sample_at_frame(start);
        // ad audio for the frames actually shown, then silence for the hold
        let shown = ad.sample_at_frame(used).min(ad.samples.len()).min(needed);
        samples.extend_from_slice(&ad.samples[..shown]);
        samples.resize(samples.len() + (needed - shown), 0);
        cursor = end;
    }
    copy_source(&mut frames, &mut samples, cursor, src.frames.len());

    let out = Timeline {
        fps: src.fps,
        sample_rate: src.sample_rate,
        frames,
        samples,
    };
    Ok(out.segment(segment_frames)?)
}

/// Output segment length matching the source's first segment.
pub fn source_segment_frames(source: &Stream) -> usize {
    source.segments[0].frame_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{AudioBlock, Fps, Segment};

    fn flat_stream(values: &[u8], per_segment: usize, tone: i16) -> Stream {
        let fps = Fps::default();
        let segs = values
            .chunks(per_segment)
            .enumerate()
            .map(|(i, chunk)| {
                let frames: Vec<Frame> = chunk.iter().map(|&v| Frame::filled(8, 8, v).unwrap()).collect();
                let n = fps.frame_to_sample(chunk.len() as u64, 16_000) as usize;
                let audio = AudioBlock::new(16_000, vec![tone; n]).unwrap();
                Segment::new(format!("{i:06}"), fps, frames, audio, fps.frame_to_ms((i * per_segment) as u64)).unwrap()
            })
            .collect();
        Stream::new(segs).unwrap()
    }

    fn ads(uri: &str, s: Stream) -> BTreeMap<String, Stream> {
        BTreeMap::from([(uri.to_owned(), s)])
    }

    #[test]
    fn empty_metadata_is_resegmentation() {
        let src = flat_stream(&(0..50).collect::<Vec<u8>>(), 20, 7);
        let out = splice(&src, &[], &BTreeMap::new(), 20).unwrap();
        assert_eq!(out, src.timeline().segment(20).unwrap());
    }

    #[test]
    fn short_ad_is_held_and_silenced() {
        let src = flat_stream(&[1; 60], 30, 5);
        let ad = flat_stream(&[200, 201, 202], 3, 99);
        let meta = [AdMetadata::for_frames(10, 19, src.fps, "ads://a")];
        let out = splice(&src, &meta, &ads("ads://a", ad), 30).unwrap();
        let tl = out.timeline();
        assert_eq!(tl.frames.len(), 60);
        let vals: Vec<u8> = tl.frames[8..22].iter().map(|f| f.get(0, 0)).collect();
        assert_eq!(vals, [1, 1, 200, 201, 202, 202, 202, 202, 202, 202, 202, 202, 1, 1]);
        let s = |f: usize| tl.sample_at_frame(f);
        assert!(tl.samples[s(10)..s(13)].iter().all(|&x| x == 99));
        assert!(tl.samples[s(13)..s(20)].iter().all(|&x| x == 0));
        assert!(tl.samples[s(20)..].iter().all(|&x| x == 5));
        assert_eq!(out.duration_ms(), src.duration_ms());
    }

    #[test]
    fn long_ad_is_trimmed() {
        let src = flat_stream(&[1; 40], 40, 5);
        let ad = flat_stream(&(100..130).collect::<Vec<u8>>(), 30, 9);
        let meta = [AdMetadata::for_frames(30, 39, src.fps, "u")];
        let tl = splice(&src, &meta, &ads("u", ad), 40).unwrap().timeline();
        assert_eq!(tl.frames.len(), 40);
        assert_eq!(tl.frames[39].get(0, 0), 109);
        assert!(tl.samples[tl.sample_at_frame(30)..].iter().all(|&x| x == 9));
    }

    #[test]
    fn unresolved_and_out_of_range() {
        let src = flat_stream(&[1; 20], 20, 0);
        let meta = [AdMetadata::for_frames(0, 5, src.fps, "nope")];
        assert!(matches!(
            splice(&src, &meta, &BTreeMap::new(), 20),
            Err(PlaceError::UnresolvedAdId(u)) if u == "nope"
        ));
        let meta = [AdMetadata::for_frames(10, 20, src.fps, "u")];
        assert!(matches!(
            splice(&src, &meta, &ads("u", flat_stream(&[3], 1, 0)), 20),
            Err(PlaceError::MetadataOutOfRange { record: 0, .. })
        ));
    }

    #[test]
    fn repository_round_trip_and_exact_match() {
        let dir = tempfile::tempdir().unwrap();
        let ad = flat_stream(&[9; 30], 30, 1);
        let mut repo = AdRepository::open(dir.path()).unwrap();
        assert!(repo.is_empty());
        repo.insert("ads://food/1", "food", &ad).unwrap();
        let repo = AdRepository::open(dir.path()).unwrap();
        let h = repo.resolve_target("ads://food/1").unwrap();
        assert_eq!(h.info.duration_ms, 1000);
        assert_eq!(h.info.category, "food");
        assert_eq!(h.load().unwrap(), ad);
        assert!(matches!(repo.resolve_target("ads://food/1/"), Err(PlaceError::UnresolvedAdId(_))));
    }

    #[test]
    fn incompatible_ad_rejected() {
        let src = flat_stream(&[1; 20], 20, 0);
        let fps = Fps::new(25, 1).unwrap();
        let seg = Segment::new("x", fps, vec![Frame::filled(8, 8, 0).unwrap(); 5], AudioBlock::silence(16_000, 3200).unwrap(), 0)
            .unwrap();
        let meta = [AdMetadata::for_frames(0, 4, src.fps, "u")];
        assert!(matches!(
            splice(&src, &meta, &ads("u", Stream::new(vec![seg]).unwrap()), 20),
            Err(PlaceError::IncompatibleAd { .. })
        ));
    }
}
