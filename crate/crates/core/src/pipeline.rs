//! End-to-end processing: per-segment ad detection with either engine,
//! metadata emission, splicing, training and the engine comparison bench.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, TruthInterval};
use crate::features::{
    classify_segment_features, select_features, shot_features, stratified_split, train_classifier, FeatureError,
    LabeledExample, ModelConfig, TrainedModel, DEFAULT_FOLD_SEED, DEFAULT_K_MAX, PROGRAM_LABEL,
};
use crate::media::{AudioBlock, Fps, Frame, MediaError, Segment};
use crate::meta::{self, emit_metadata, lookup_target, AdInterval, AdMetadata, MetaError, TargetPolicy};
use crate::placer::{splice, AdSource, PlaceError};
use crate::shots::segment_shots;
use crate::stream::{Stream, StreamDir, StreamError, StreamWriter, Timeline};
use crate::xcorr::{classify_segment_xcorr, LogoTemplate, XcorrError, DEFAULT_SAMPLE_STRIDE, DEFAULT_THRESHOLD};

pub const METADATA_FILE: &str = "metadata.json";
pub const OUTPUT_STREAM_DIR: &str = "stream";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Xcorr(#[from] XcorrError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Place(#[from] PlaceError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("{path}: {detail}")]
    File { path: PathBuf, detail: String },
    #[error("stream has no segments")]
    EmptyStream,
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|e| PipelineError::File {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::File {
            path: parent.to_path_buf(),
            detail: e.to_string(),
        })?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::File {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_slice(&read_file(path)?).map_err(|e| PipelineError::File {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Xcorr,
    Features,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Xcorr => "xcorr",
            EngineKind::Features => "features",
        }
    }
}

/// A configured detection engine.
#[derive(Debug, Clone)]
pub enum Detector {
    Xcorr {
        template: LogoTemplate,
        threshold: f64,
        stride: usize,
    },
    Features {
        model: Box<TrainedModel>,
    },
}

impl Detector {
    pub fn xcorr(template: LogoTemplate) -> Self {
        Detector::Xcorr {
            template,
            threshold: DEFAULT_THRESHOLD,
            stride: DEFAULT_SAMPLE_STRIDE,
        }
    }

    pub fn features(model: TrainedModel) -> Self {
        Detector::Features { model: Box::new(model) }
    }

    pub fn kind(&self) -> EngineKind {
        match self {
            Detector::Xcorr { .. } => EngineKind::Xcorr,
            Detector::Features { .. } => EngineKind::Features,
        }
    }

    /// Classifies one segment whose first frame is global frame `start_frame`.
    pub fn classify(&self, seg: &Segment, start_frame: u64) -> Result<SegmentDecision, PipelineError> {
        let t0 = Instant::now();
        let (is_ad, category) = match self {
            Detector::Xcorr {
                template,
                threshold,
                stride,
            } => (classify_segment_xcorr(seg, template, *threshold, *stride)?.is_ad, None),
            Detector::Features { model } => {
                let d = classify_segment_features(seg, model)?;
                (d.is_ad, d.category)
            }
        };
        Ok(SegmentDecision {
            segment_id: seg.segment_id().to_owned(),
            start_frame,
            frame_count: seg.frame_count() as u64,
            is_ad,
            category,
            elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDecision {
    pub segment_id: String,
    pub start_frame: u64,
    pub frame_count: u64,
    pub is_ad: bool,
    pub category: Option<String>,
    pub elapsed_ms: f64,
}

impl SegmentDecision {
    pub fn interval(&self) -> AdInterval {
        AdInterval {
            start_frame: self.start_frame,
            end_frame: self.start_frame + self.frame_count - 1,
            category: self.category.clone(),
        }
    }
}

pub fn intervals_from_decisions(decisions: &[SegmentDecision]) -> Vec<AdInterval> {
    decisions.iter().filter(|d| d.is_ad).map(SegmentDecision::interval).collect()
}

/// Classifies every segment in order.
pub fn detect_segments<I>(segments: I, detector: &Detector) -> Result<Vec<SegmentDecision>, PipelineError>
where
    I: IntoIterator<Item = Result<Segment, PipelineError>>,
{
    let mut start = 0u64;
    let mut out = Vec::new();
    for seg in segments {
        let seg = seg?;
        out.push(detector.classify(&seg, start)?);
        start += seg.frame_count() as u64;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub engine: EngineKind,
    pub segments: usize,
    pub decisions: Vec<SegmentDecision>,
    pub metadata: Vec<AdMetadata>,
    pub processing_ms: f64,
}

/// Detection, metadata and splicing for a stored stream; writes
/// `metadata.json` and the spliced `stream/` under `out_dir`.
pub fn run_offline(
    stream_dir: &Path,
    detector: &Detector,
    policy: &TargetPolicy,
    ads: &impl AdSource,
    out_dir: &Path,
) -> Result<RunReport, PipelineError> {
    let t0 = Instant::now();
    let source = Stream::read_dir(stream_dir)?;
    let decisions = detect_segments(source.segments.iter().cloned().map(Ok), detector)?;
    let metadata = emit_metadata(&intervals_from_decisions(&decisions), source.fps, policy)?;
    let output = splice(&source, &metadata, ads, crate::placer::source_segment_frames(&source))?;
    write_file(&out_dir.join(METADATA_FILE), &meta::write_metadata(&metadata))?;
    let out_stream = out_dir.join(OUTPUT_STREAM_DIR);
    if out_stream.exists() {
        fs::remove_dir_all(&out_stream).map_err(|e| PipelineError::File {
            path: out_stream.clone(),
            detail: e.to_string(),
        })?;
    }
    output.write_dir(&out_stream)?;
    Ok(RunReport {
        engine: detector.kind(),
        segments: source.segments.len(),
        decisions,
        metadata,
        processing_ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

struct OpenBreak {
    start_frame: u64,
    target: String,
    ad: Timeline,
    /// First source sample of the break.
    start_sample: usize,
}

/// Segment-at-a-time splicer for live streams. Ad segments are replaced as
/// they arrive; a break's metadata record is emitted when it ends.
pub struct OnlineSplicer<A: AdSource> {
    ads: A,
    policy: TargetPolicy,
    next_frame: u64,
    open: Option<OpenBreak>,
    records: Vec<AdMetadata>,
    fps: Option<Fps>,
}

impl<A: AdSource> OnlineSplicer<A> {
    pub fn new(ads: A, policy: TargetPolicy) -> Self {
        OnlineSplicer {
            ads,
            policy,
            next_frame: 0,
            open: None,
            records: Vec::new(),
            fps: None,
        }
    }

    pub fn records(&self) -> &[AdMetadata] {
        &self.records
    }

    fn close(&mut self) {
        if let (Some(b), Some(fps)) = (self.open.take(), self.fps) {
            self.records
                .push(AdMetadata::for_frames(b.start_frame, self.next_frame - 1, fps, b.target));
        }
    }

    /// Returns the output segment for `seg` and whether a break just closed.
    pub fn push(&mut self, seg: &Segment, decision: &SegmentDecision) -> Result<(Segment, bool), PipelineError> {
        let fps = seg.fps();
        self.fps = Some(fps);
        let sr = seg.audio().sample_rate();
        let g0 = self.next_frame;
        let n = seg.frame_count() as u64;
        if !decision.is_ad {
            let closed = self.open.is_some();
            self.close();
            self.next_frame += n;
            return Ok((seg.clone(), closed));
        }
        if self.open.is_none() {
            let target = lookup_target(decision.category.as_deref(), &self.policy)?.to_owned();
            let ad = self.ads.load(&target)?.timeline();
            if ad.fps != fps || ad.sample_rate != sr || ad.frames[0].width() != seg.width() || ad.frames[0].height() != seg.height() {
                return Err(PlaceError::IncompatibleAd {
                    uri: target,
                    detail: "geometry, fps or sample rate differs from the source".into(),
                }
                .into());
            }
            self.open = Some(OpenBreak {
                start_frame: g0,
                target,
                ad,
                start_sample: fps.frame_to_sample(g0, sr) as usize,
            });
        }
        let b = self.open.as_ref().expect("break is open");
        let frames: Vec<Frame> = (g0..g0 + n)
            .map(|g| {
                let k = ((g - b.start_frame) as usize).min(b.ad.frames.len() - 1);
                b.ad.frames[k].clone()
            })
            .collect();
        let shown = b.ad.sample_at_frame(b.ad.frames.len()).min(b.ad.samples.len());
        let s0 = fps.frame_to_sample(g0, sr) as usize;
        let s1 = fps.frame_to_sample(g0 + n, sr) as usize;
        let pcm: Vec<i16> = (s0..s1)
            .map(|s| {
                let r = s - b.start_sample;
                if r < shown {
                    b.ad.samples[r]
                } else {
                    0
                }
            })
            .collect();
        let out = Segment::new(seg.segment_id(), fps, frames, AudioBlock::new(sr, pcm)?, seg.start_time_ms())?;
        self.next_frame += n;
        Ok((out, false))
    }

    /// Closes a break still open at end of stream.
    pub fn finish(&mut self) -> &[AdMetadata] {
        self.close();
        &self.records
    }
}

/// Ad state of a `[start, start + len)` frame range under ground truth:
/// the majority label, `program` when no interval dominates.
pub fn truth_label(truth: &[TruthInterval], start: u64, len: u64) -> String {
    let mut best: Option<(&str, u64)> = None;
    let mut ad_frames = 0;
    for t in truth {
        let lo = t.start_frame.max(start);
        let hi = (t.end_frame + 1).min(start + len);
        if hi > lo {
            ad_frames += hi - lo;
            if best.is_none_or(|(_, n)| hi - lo > n) {
                best = Some((&t.category, hi - lo));
            }
        }
    }
    match best {
        Some((c, _)) if ad_frames * 2 > len => c.to_owned(),
        _ => PROGRAM_LABEL.to_owned(),
    }
}

/// Shots of every segment labelled by their majority ground-truth label.
pub fn training_examples<I>(segments: I, truth: &[TruthInterval], config: &ModelConfig) -> Result<Vec<LabeledExample>, PipelineError>
where
    I: IntoIterator<Item = Result<Segment, PipelineError>>,
{
    let mut out = Vec::new();
    let mut start = 0u64;
    for seg in segments {
        let seg = seg?;
        for shot in segment_shots(&seg, config.cut_threshold) {
            let range = shot.frame_range();
            out.push(LabeledExample {
                features: shot_features(&seg, &shot, &config.mfcc)?,
                label: truth_label(truth, start + range.start as u64, range.len() as u64),
            });
        }
        start += seg.frame_count() as u64;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub selected_features: Vec<String>,
    pub train_examples: usize,
    pub test_examples: usize,
    pub test_accuracy: f64,
}

/// Stratified 80/20 split, feature selection and fitting on the 80%,
/// accuracy on the held-out 20%.
pub fn train_model(
    examples: &[LabeledExample],
    split_seed: u64,
    config: ModelConfig,
) -> Result<(TrainedModel, TrainReport), PipelineError> {
    let labels: Vec<String> = examples.iter().map(|e| e.label.clone()).collect();
    let (train_idx, test_idx) = stratified_split(&labels, 0.8, split_seed);
    let train: Vec<LabeledExample> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let selected = select_features(&train, DEFAULT_K_MAX, DEFAULT_FOLD_SEED)?;
    let model = train_classifier(&train, &selected, config)?;
    let correct = test_idx
        .iter()
        .filter(|&&i| model.predict(&examples[i].features) == examples[i].label)
        .count();
    let names = crate::features::feature_names();
    let report = TrainReport {
        selected_features: selected.iter().map(|&i| names[i].clone()).collect(),
        train_examples: train.len(),
        test_examples: test_idx.len(),
        test_accuracy: if test_idx.is_empty() {
            0.0
        } else {
            correct as f64 / test_idx.len() as f64
        },
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub engine: EngineKind,
    pub segments: usize,
    pub mean_ms: f64,
    pub accuracy: f64,
}

/// Per-segment mean time and ad/non-ad accuracy of each detector.
pub fn bench_engines<I>(segments: I, truth: &[TruthInterval], detectors: &[Detector]) -> Result<Vec<BenchRow>, PipelineError>
where
    I: IntoIterator<Item = Result<Segment, PipelineError>>,
{
    let mut rows: Vec<(f64, usize, usize)> = vec![(0.0, 0, 0); detectors.len()];
    let mut start = 0u64;
    for seg in segments {
        let seg = seg?;
        let n = seg.frame_count() as u64;
        let expect_ad = truth_label(truth, start, n) != PROGRAM_LABEL;
        for (row, det) in rows.iter_mut().zip(detectors) {
            let d = det.classify(&seg, start)?;
            row.0 += d.elapsed_ms;
            row.1 += 1;
            row.2 += (d.is_ad == expect_ad) as usize;
        }
        start += n;
    }
    if rows.iter().any(|r| r.1 == 0) {
        return Err(PipelineError::EmptyStream);
    }
    Ok(rows
        .into_iter()
        .zip(detectors)
        .map(|((ms, n, ok), det)| BenchRow {
            engine: det.kind(),
            segments: n,
            mean_ms: ms / n as f64,
            accuracy: ok as f64 / n as f64,
        })
        .collect())
}

pub fn format_bench_table(rows: &[BenchRow]) -> String {
    let mut out = String::from("| Engine | Execution Time (ms) | Accuracy |\n|---|---|---|\n");
    for r in rows {
        let name = match r.engine {
            EngineKind::Xcorr => "Cross Correlation",
            EngineKind::Features => "Feature Classifier",
        };
        out.push_str(&format!("| {name} | {:.1} | {:.1}% |\n", r.mean_ms, 100.0 * r.accuracy));
    }
    out
}

/// Segments of a stored stream as pipeline items.
pub fn stream_segments(dir: &StreamDir) -> impl Iterator<Item = Result<Segment, PipelineError>> + '_ {
    dir.iter().map(|s| s.map_err(PipelineError::from))
}

/// Segments of a lazily rendered corpus as pipeline items.
pub fn corpus_segments(c: &corpus::Corpus) -> impl Iterator<Item = Result<Segment, PipelineError>> + '_ {
    c.segments().map(|s| {
        s.map_err(|e| PipelineError::File {
            path: PathBuf::from("<corpus>"),
            detail: e.to_string(),
        })
    })
}

/// Copies segments into a stream directory, one by one.
pub fn write_stream<I>(dir: &Path, segments: I) -> Result<usize, PipelineError>
where
    I: IntoIterator<Item = Result<Segment, PipelineError>>,
{
    let mut writer: Option<StreamWriter> = None;
    for seg in segments {
        let seg = seg?;
        let w = match writer.as_mut() {
            Some(w) => w,
            None => writer.insert(StreamWriter::create(dir, seg.fps(), seg.width(), seg.height())?),
        };
        w.push(&seg)?;
    }
    let n = writer.as_ref().map_or(0, StreamWriter::len);
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(n)
}
