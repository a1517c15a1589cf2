//! Background processing for VoD and live-sim jobs.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use adsplice_core::feed::LiveFeed;
use adsplice_core::features::TrainedModel;
use adsplice_core::meta::write_metadata;
use adsplice_core::mmtp::Packetizer;
use adsplice_core::pgm;
use adsplice_core::pipeline::{
    read_file, read_json, run_offline, write_file, Detector, EngineKind, OnlineSplicer, METADATA_FILE,
    OUTPUT_STREAM_DIR,
};
use adsplice_core::placer::AdRepository;
use adsplice_core::stream::{StreamDir, StreamWriter, MANIFEST_FILE};
use adsplice_core::xcorr::{LogoTemplate, SearchRegion};

use crate::jobs::{unix_ms, JobEntry, JobMode, JobStatus, LiveClock, Sources};
use crate::packets::PacketLog;

type WorkResult = Result<(), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn build_detector(engine: EngineKind, sources: &Sources) -> Result<Detector, String> {
    match engine {
        EngineKind::Xcorr => {
            let path = sources.logo.as_ref().ok_or("xcorr engine needs a logo template")?;
            let frame = pgm::decode(&read_file(path).map_err(err)?).map_err(err)?;
            Ok(Detector::xcorr(LogoTemplate::new(frame, SearchRegion::default()).map_err(err)?))
        }
        EngineKind::Features => {
            let path = sources.model.as_ref().ok_or("features engine needs a model")?;
            Ok(Detector::features(read_json::<TrainedModel>(path).map_err(err)?))
        }
    }
}

/// Packetizes a stored stream into `log`, one MPU pair per segment.
pub fn load_log(log: &PacketLog, stream_dir: &Path) -> WorkResult {
    if stream_dir.join(MANIFEST_FILE).is_file() {
        let dir = StreamDir::open(stream_dir).map_err(err)?;
        let mut p = Packetizer::av();
        for (k, seg) in dir.iter().enumerate() {
            let packets = p.push_segment(&seg.map_err(err)?, k as u32).map_err(err)?;
            log.append_segment(&packets).map_err(err)?;
        }
    }
    log.finish();
    Ok(())
}

/// Runs a queued job to completion on a blocking thread.
pub fn spawn(entry: Arc<JobEntry>, sources: Sources) {
    tokio::task::spawn_blocking(move || {
        let record = entry.record();
        let result = match record.request.mode {
            JobMode::Vod => run_vod(&entry, &sources),
            JobMode::LiveSim => run_live(&entry, &sources, record.request.speed.unwrap_or(1.0)),
        };
        if let Err(e) = result {
            entry.fail(e);
        }
    });
}

fn start(entry: &JobEntry) -> WorkResult {
    entry
        .transition(JobStatus::Processing)
        .map_err(|s| format!("cannot start processing from {s:?}"))
}

fn run_vod(entry: &JobEntry, sources: &Sources) -> WorkResult {
    start(entry)?;
    let t0 = Instant::now();
    let record = entry.record();
    let detector = build_detector(record.job.engine, sources)?;
    let repo = AdRepository::open(&sources.ads).map_err(err)?;
    let out = entry.output_dir();
    let report = run_offline(&sources.stream_dir, &detector, &record.job.target_policy, &repo, &out).map_err(err)?;
    load_log(&entry.packets, &out.join(OUTPUT_STREAM_DIR))?;
    entry.set_metadata(report.metadata);
    let elapsed = t0.elapsed().as_secs_f64() * 1e3;
    entry.update(|r| {
        r.job.stats.processing_ms = Some(elapsed);
        r.job.stats.segments_processed = report.segments as u64;
        r.complete = true;
    });
    entry.transition(JobStatus::Ready).map_err(|s| format!("cannot become ready from {s:?}"))
}

fn run_live(entry: &JobEntry, sources: &Sources, speed: f64) -> WorkResult {
    start(entry)?;
    let record = entry.record();
    let detector = build_detector(record.job.engine, sources)?;
    let repo = AdRepository::open(&sources.ads).map_err(err)?;
    let out = entry.output_dir();
    let out_stream = out.join(OUTPUT_STREAM_DIR);
    if out_stream.exists() {
        fs::remove_dir_all(&out_stream).map_err(err)?;
    }
    let write_meta = |records: &[_]| write_file(&out.join(METADATA_FILE), &write_metadata(records)).map_err(err);

    let feed = LiveFeed::open(&sources.stream_dir, speed).map_err(err)?;
    // the published origin never trails the feed clock
    let origin = unix_ms();
    let feed = feed.start_now();
    let _ = entry.clock.set(LiveClock {
        start: feed.start(),
        unix_ms: origin,
        speed,
    });
    entry.update(|r| r.job.stream_start_unix_ms = Some(origin));

    let mut splicer = OnlineSplicer::new(repo, record.job.target_policy.clone());
    let mut writer: Option<StreamWriter> = None;
    let mut packetizer = Packetizer::av();
    let mut busy_ms = 0.0;
    for fed in feed {
        let fed = fed.map_err(err)?;
        let t0 = Instant::now();
        let seg = &fed.segment;
        let decision = detector.classify(seg, seg.start_frame()).map_err(err)?;
        let (spliced, closed) = splicer.push(seg, &decision).map_err(err)?;
        let w = match &mut writer {
            Some(w) => w,
            None => writer.insert(
                StreamWriter::create(&out_stream, spliced.fps(), spliced.width(), spliced.height()).map_err(err)?,
            ),
        };
        w.push(&spliced).map_err(err)?;
        let packets = packetizer.push_segment(&spliced, fed.index as u32).map_err(err)?;
        entry.packets.append_segment(&packets).map_err(err)?;
        if closed {
            write_meta(splicer.records())?;
            entry.set_metadata(splicer.records().to_vec());
        }
        busy_ms += t0.elapsed().as_secs_f64() * 1e3;
        entry.update(|r| {
            r.job.stats.segments_processed += 1;
            r.job.stats.processing_ms = Some(busy_ms);
        });
        if entry.status() == JobStatus::Processing {
            let _ = entry.transition(JobStatus::Ready);
        }
    }
    let records = splicer.finish().to_vec();
    write_meta(&records)?;
    entry.set_metadata(records);
    if let Some(w) = writer {
        w.finish().map_err(err)?;
    }
    entry.update(|r| {
        r.job.stats.processing_ms.get_or_insert(busy_ms);
        r.complete = true;
    });
    entry.packets.finish();
    if entry.status() == JobStatus::Processing {
        let _ = entry.transition(JobStatus::Ready);
    }
    Ok(())
}

/// Restores the packet log of a finished job loaded from disk.
pub fn restore(entry: &JobEntry) {
    if entry.status().has_output() {
        if let Err(e) = load_log(&entry.packets, &entry.output_dir().join(OUTPUT_STREAM_DIR)) {
            entry.fail(format!("restoring output failed: {e}"));
        }
    }
}
