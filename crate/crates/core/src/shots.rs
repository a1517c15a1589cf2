//! Shot segmentation from consecutive-frame differences.
//!
//! Each mean-absolute frame difference is scored against the trailing window
//! of previous differences: a z-score squashed through a logistic centred at
//! [`Z_CENTER`] gives the cut probability. A boundary is declared when the
//! probability reaches the threshold and at least [`MIN_SHOT_LEN`] frames have
//! passed since the previous boundary (the segment start counts as one), so
//! every shot except possibly the last is at least that long.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::media::{frame_abs_diff, Segment, Timecode};

pub const HISTORY_LEN: usize = 12;
pub const Z_CENTER: f64 = 3.0;
pub const SIGMA_FLOOR: f64 = 1e-6;
pub const MIN_SHOT_LEN: usize = 8;
pub const DEFAULT_CUT_THRESHOLD: f64 = 0.5;

/// Frames `[start, end)` of one segment, local indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub start: Timecode,
    pub end: Timecode,
    /// Probability of the boundary that opens this shot; 0 for the first shot.
    pub cut_score: f64,
}

impl Shot {
    pub fn len(&self) -> usize {
        (self.end.frame_index - self.start.frame_index) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_range(&self) -> std::ops::Range<usize> {
        self.start.frame_index as usize..self.end.frame_index as usize
    }
}

/// Cut probability of `diff` given the trailing window of differences.
pub fn cut_probability(diff: f64, history: &[f64]) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let sigma = var.sqrt().max(SIGMA_FLOOR);
    let z = (diff - mean) / sigma;
    1.0 / (1.0 + (-(z - Z_CENTER)).exp())
}

/// Splits a segment into shots that tile it exactly.
pub fn segment_shots(seg: &Segment, threshold: f64) -> Vec<Shot> {
    let frames = seg.frames();
    let fps = seg.fps();
    let mut history: VecDeque<f64> = VecDeque::with_capacity(HISTORY_LEN);
    let mut boundaries: Vec<(usize, f64)> = Vec::new();
    let mut last_boundary = 0usize;

    for i in 1..frames.len() {
        let diff = frame_abs_diff(&frames[i - 1], &frames[i]).expect("segment frames share dimensions");
        let window: Vec<f64> = history.iter().copied().collect();
        let p = cut_probability(diff, &window);
        if p >= threshold && i - last_boundary >= MIN_SHOT_LEN {
            boundaries.push((i, p));
            last_boundary = i;
        }
        if history.len() == HISTORY_LEN {
            history.pop_front();
        }
        history.push_back(diff);
    }

    let mut shots = Vec::with_capacity(boundaries.len() + 1);
    let mut start = 0usize;
    let mut score = 0.0;
    for (b, p) in boundaries {
        shots.push(Shot {
            start: fps.timecode(start as u64),
            end: fps.timecode(b as u64),
            cut_score: score,
        });
        start = b;
        score = p;
    }
    shots.push(Shot {
        start: fps.timecode(start as u64),
        end: fps.timecode(frames.len() as u64),
        cut_score: score,
    });
    shots
}
