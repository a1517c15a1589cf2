//! Ad metadata records: where a commercial sits in the source stream and which
//! ad replaces it. Serialized as a JSON array of six-field objects.
//!
//! `end_frame` is inclusive; `end_timestamp_ms` is exclusive (the time of the
//! frame after `end_frame`), so consecutive records tile the time axis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::media::Fps;

/// Category key consulted when a predicted category has no mapping.
pub const DEFAULT_TARGET_KEY: &str = "default";

pub const FIELDS: [&str; 6] = [
    "start_timestamp_ms",
    "end_timestamp_ms",
    "start_frame",
    "end_frame",
    "is_ad",
    "target_ad_id",
];

/// Category → target ad URI.
pub type TargetPolicy = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaError {
    #[error("record {record}: field `{field}`: {detail}")]
    SchemaViolation {
        record: usize,
        field: String,
        detail: String,
    },
    #[error("no target ad for category {0:?} and no `default` entry")]
    NoTargetForCategory(String),
    #[error("interval {index} [{start}, {end}] overlaps or precedes its predecessor")]
    UnorderedIntervals { index: usize, start: u64, end: u64 },
}

fn violation(record: usize, field: &str, detail: impl Into<String>) -> MetaError {
    MetaError::SchemaViolation {
        record,
        field: field.to_owned(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdMetadata {
    pub start_timestamp_ms: u64,
    pub end_timestamp_ms: u64,
    pub start_frame: u64,
    pub end_frame: u64,
    pub is_ad: u8,
    pub target_ad_id: String,
}

impl AdMetadata {
    /// Record for frames `[start_frame, end_frame]` with timestamps derived from `fps`.
    pub fn for_frames(start_frame: u64, end_frame: u64, fps: Fps, target_ad_id: impl Into<String>) -> Self {
        AdMetadata {
            start_timestamp_ms: fps.frame_to_ms(start_frame),
            end_timestamp_ms: fps.frame_to_ms(end_frame + 1),
            start_frame,
            end_frame,
            is_ad: 1,
            target_ad_id: target_ad_id.into(),
        }
    }

    pub fn frame_count(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    /// Field-level checks that need no stream context.
    pub fn validate(&self, record: usize) -> Result<(), MetaError> {
        if self.is_ad != 1 {
            return Err(violation(record, "is_ad", format!("must be 1, got {}", self.is_ad)));
        }
        if self.end_frame < self.start_frame {
            return Err(violation(
                record,
                "end_frame",
                format!("{} precedes start_frame {}", self.end_frame, self.start_frame),
            ));
        }
        if self.end_timestamp_ms <= self.start_timestamp_ms {
            return Err(violation(
                record,
                "end_timestamp_ms",
                format!("{} is not after start_timestamp_ms {}", self.end_timestamp_ms, self.start_timestamp_ms),
            ));
        }
        if self.target_ad_id.is_empty() {
            return Err(violation(record, "target_ad_id", "empty"));
        }
        Ok(())
    }

    /// Checks that the timestamps are the ones `fps` assigns to the frame numbers.
    pub fn validate_timing(&self, record: usize, fps: Fps) -> Result<(), MetaError> {
        let start = fps.frame_to_ms(self.start_frame);
        if self.start_timestamp_ms != start {
            return Err(violation(
                record,
                "start_timestamp_ms",
                format!("{} but frame {} starts at {start}", self.start_timestamp_ms, self.start_frame),
            ));
        }
        let end = fps.frame_to_ms(self.end_frame + 1);
        if self.end_timestamp_ms != end {
            return Err(violation(
                record,
                "end_timestamp_ms",
                format!("{} but frame {} ends at {end}", self.end_timestamp_ms, self.end_frame),
            ));
        }
        Ok(())
    }
}

/// A detected ad run in global frame numbers, `end_frame` inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdInterval {
    pub start_frame: u64,
    pub end_frame: u64,
    pub category: Option<String>,
}

/// Frames covered per category, with the index of the first interval that had it.
type CategoryFrames = BTreeMap<Option<String>, (u64, usize)>;

/// Adjacent intervals (no frame between them) become one; the merged run keeps
/// the category covering the most frames, earliest on ties.
pub fn merge_intervals(intervals: &[AdInterval]) -> Result<Vec<AdInterval>, MetaError> {
    let mut out: Vec<(AdInterval, CategoryFrames)> = Vec::new();
    for (index, iv) in intervals.iter().enumerate() {
        if iv.end_frame < iv.start_frame {
            return Err(MetaError::UnorderedIntervals {
                index,
                start: iv.start_frame,
                end: iv.end_frame,
            });
        }
        let frames = iv.end_frame - iv.start_frame + 1;
        match out.last_mut() {
            Some((prev, _)) if iv.start_frame <= prev.end_frame => {
                return Err(MetaError::UnorderedIntervals {
                    index,
                    start: iv.start_frame,
                    end: iv.end_frame,
                });
            }
            Some((prev, votes)) if iv.start_frame == prev.end_frame + 1 => {
                prev.end_frame = iv.end_frame;
                let n = votes.len();
                votes.entry(iv.category.clone()).or_insert((0, n)).0 += frames;
            }
            _ => {
                let mut votes = BTreeMap::new();
                votes.insert(iv.category.clone(), (frames, 0));
                out.push((iv.clone(), votes));
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|(mut iv, votes)| {
            iv.category = votes
                .into_iter()
                .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
                .and_then(|(c, _)| c);
            iv
        })
        .collect())
}

pub fn lookup_target<'a>(category: Option<&str>, policy: &'a TargetPolicy) -> Result<&'a str, MetaError> {
    category
        .and_then(|c| policy.get(c))
        .or_else(|| policy.get(DEFAULT_TARGET_KEY))
        .map(String::as_str)
        .ok_or_else(|| MetaError::NoTargetForCategory(category.unwrap_or(DEFAULT_TARGET_KEY).to_owned()))
}

/// One record per merged interval, targets looked up by category.
pub fn emit_metadata(intervals: &[AdInterval], fps: Fps, policy: &TargetPolicy) -> Result<Vec<AdMetadata>, MetaError> {
    merge_intervals(intervals)?
        .into_iter()
        .map(|iv| {
            let target = lookup_target(iv.category.as_deref(), policy)?;
            Ok(AdMetadata::for_frames(iv.start_frame, iv.end_frame, fps, target))
        })
        .collect()
}

pub fn write_metadata(records: &[AdMetadata]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(records).expect("metadata serializes");
    out.push(b'\n');
    out
}

fn field_u64(obj: &Map<String, Value>, record: usize, field: &str) -> Result<u64, MetaError> {
    match obj.get(field) {
        None => Err(violation(record, field, "missing")),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| violation(record, field, format!("expected a non-negative integer, got {v}"))),
    }
}

/// Parses and validates a metadata array; the first violation is reported.
pub fn parse_metadata(bytes: &[u8]) -> Result<Vec<AdMetadata>, MetaError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| violation(0, "$", e.to_string()))?;
    let Value::Array(items) = root else {
        return Err(violation(0, "$", "expected a JSON array"));
    };
    let mut records = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let Value::Object(obj) = item else {
            return Err(violation(i, "$", "expected an object"));
        };
        if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(violation(i, extra, "unknown field"));
        }
        let is_ad = field_u64(obj, i, "is_ad")?;
        let target_ad_id = match obj.get("target_ad_id") {
            None => return Err(violation(i, "target_ad_id", "missing")),
            Some(Value::String(s)) => s.clone(),
            Some(v) => return Err(violation(i, "target_ad_id", format!("expected a string, got {v}"))),
        };
        let rec = AdMetadata {
            start_timestamp_ms: field_u64(obj, i, "start_timestamp_ms")?,
            end_timestamp_ms: field_u64(obj, i, "end_timestamp_ms")?,
            start_frame: field_u64(obj, i, "start_frame")?,
            end_frame: field_u64(obj, i, "end_frame")?,
            is_ad: u8::try_from(is_ad).map_err(|_| violation(i, "is_ad", format!("must be 1, got {is_ad}")))?,
            target_ad_id,
        };
        rec.validate(i)?;
        records.push(rec);
    }
    Ok(records)
}
