//! Shared inputs for the benchmarks. Everything is derived from fixed seeds
//! so runs are comparable across machines.

use std::collections::BTreeMap;

use adsplice_core::corpus::{ad_library, Corpus, CorpusSpec};
use adsplice_core::features::ModelConfig;
use adsplice_core::media::{Frame, Segment};
use adsplice_core::meta::AdMetadata;
use adsplice_core::pipeline::{corpus_segments, train_model, training_examples, Detector};
use adsplice_core::stream::Stream;
use adsplice_core::xcorr::{LogoTemplate, SearchRegion};
use adsplice_core::features::TrainedModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 7;

pub fn noise_frame(seed: u64, width: u16, height: u16) -> Frame {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..width as usize * height as usize).map(|_| r.random()).collect();
    Frame::new(width, height, pixels).expect("frame dimensions")
}

pub fn golden() -> Corpus {
    Corpus::new(CorpusSpec::golden(SEED)).expect("golden corpus")
}

/// A programme segment and an ad segment from the golden corpus.
pub fn sample_segments(c: &Corpus) -> (Segment, Segment) {
    let seg = |k| c.segment(k).expect("segment");
    let ad = (0..c.segment_count()).find(|&k| c.segment_label(k) != "program").expect("an ad segment");
    (seg(0), seg(ad))
}

pub fn xcorr_detector(c: &Corpus) -> Detector {
    Detector::xcorr(LogoTemplate::new(c.logo().clone(), SearchRegion::default()).expect("logo template"))
}

/// Trains the features engine on the golden corpus with the default split.
pub fn trained_model(c: &Corpus) -> TrainedModel {
    let cfg = ModelConfig::default();
    let examples = training_examples(corpus_segments(c), c.truth(), &cfg).expect("training examples");
    train_model(&examples, 1, cfg).expect("training").0
}

/// The golden stream, metadata for its true ad breaks and the ad library.
pub fn splice_inputs(c: &Corpus) -> (Stream, Vec<AdMetadata>, BTreeMap<String, Stream>) {
    let spec = c.spec();
    let ads: BTreeMap<String, Stream> = ad_library(spec)
        .expect("ad library")
        .into_iter()
        .map(|(uri, _, stream)| (uri, stream))
        .collect();
    let meta = c
        .truth()
        .iter()
        .map(|t| {
            let uri = ads.keys().find(|u| u.contains(&format!("/{}/", t.category))).expect("ad for category");
            AdMetadata::for_frames(t.start_frame, t.end_frame, spec.fps, uri.clone())
        })
        .collect();
    (c.to_stream().expect("stream"), meta, ads)
}
