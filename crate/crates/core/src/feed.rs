//! Wall-clock replay of a stored stream, standing in for a tuner.
//!
//! Segment `k` becomes available once it has been fully "captured": at
//! `(start_k + duration_k) / speed` after the feed starts.

use std::path::Path;
use std::time::{Duration, Instant};

use crate::media::Segment;
use crate::stream::{StreamDir, StreamError, MANIFEST_FILE};

#[derive(Debug, Clone)]
pub struct FedSegment {
    pub index: usize,
    pub segment: Segment,
    /// Offset from feed start at which the segment was due.
    pub scheduled: Duration,
    pub arrived: Instant,
}

impl FedSegment {
    /// How late the segment was handed over relative to its schedule.
    pub fn lateness(&self, start: Instant) -> Duration {
        self.arrived.saturating_duration_since(start + self.scheduled)
    }
}

pub struct LiveFeed {
    dir: Option<StreamDir>,
    speed: f64,
    start: Instant,
    next: usize,
}

impl LiveFeed {
    /// An existing directory without a manifest is an empty feed.
    pub fn open(dir: &Path, speed: f64) -> Result<Self, StreamError> {
        assert!(speed > 0.0 && speed.is_finite(), "speed must be positive");
        let dir = if dir.is_dir() && !dir.join(MANIFEST_FILE).exists() {
            None
        } else {
            Some(StreamDir::open(dir)?)
        };
        Ok(LiveFeed {
            dir,
            speed,
            start: Instant::now(),
            next: 0,
        })
    }

    /// Resets the wall clock origin.
    pub fn start_now(mut self) -> Self {
        self.start = Instant::now();
        self
    }

    pub fn start(&self) -> Instant {
        self.start
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn len(&self) -> usize {
        self.dir.as_ref().map_or(0, StreamDir::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Iterator for LiveFeed {
    type Item = Result<FedSegment, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        let dir = self.dir.as_ref()?;
        if self.next >= dir.len() {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let segment = match dir.read(index) {
            Ok(s) => s,
            Err(e) => return Some(Err(e)),
        };
        let end_ms = segment.start_time_ms() + segment.duration_ms();
        let scheduled = Duration::from_secs_f64(end_ms as f64 / 1000.0 / self.speed);
        let due = self.start + scheduled;
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        Some(Ok(FedSegment {
            index,
            segment,
            scheduled,
            arrived: Instant::now(),
        }))
    }
}
