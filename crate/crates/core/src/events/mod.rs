//! Event data model, frame-to-event simulation, voxel-grid encoding and the
//! `EGVDEVT1` event file format.

mod io;
mod sim;
mod voxel;

pub use io::{decode_events, encode_events, read_events, read_events_csv, write_events, write_events_csv, EVENT_MAGIC};
pub use sim::{simulate_events, SimConfig, CROSSING_TOLERANCE};
pub use voxel::{build_voxel_grid, build_voxel_grid_with, Normalize, VoxelGrid};

use crate::error::{Error, Result};

/// A single brightness-change record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Microseconds.
    pub t: u64,
    /// +1 for a brightness increase, -1 for a decrease.
    pub p: i8,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: i8) -> Self {
        Event { x, y, t, p }
    }

    #[inline]
    pub(crate) fn sort_key(&self) -> (u64, u16, u16, i8) {
        (self.t, self.y, self.x, self.p)
    }
}

/// Events from one sensor over a closed time range, sorted by `(t, y, x, p)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub t_start: u64,
    pub t_end: u64,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn empty(width: u16, height: u16, t_start: u64, t_end: u64) -> Self {
        EventStream {
            width,
            height,
            t_start,
            t_end,
            events: Vec::new(),
        }
    }

    /// Builds a stream, sorting the events and checking every invariant.
    pub fn new(
        width: u16,
        height: u16,
        t_start: u64,
        t_end: u64,
        mut events: Vec<Event>,
    ) -> Result<Self> {
        if t_end < t_start {
            return Err(Error::config(format!(
                "t_end {t_end} precedes t_start {t_start}"
            )));
        }
        events.sort_by_key(Event::sort_key);
        let s = EventStream {
            width,
            height,
            t_start,
            t_end,
            events,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn polarity_sum(&self) -> i64 {
        self.events.iter().map(|e| e.p as i64).sum()
    }

    /// Checks bounds, polarity values, time range and ordering.
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<(u64, u16, u16, i8)> = None;
        for (i, e) in self.events.iter().enumerate() {
            if e.x >= self.width || e.y >= self.height {
                return Err(Error::config(format!(
                    "event {i} at ({}, {}) outside {}x{} sensor",
                    e.x, e.y, self.width, self.height
                )));
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::config(format!(
                    "event {i} has polarity {}",
                    e.p
                )));
            }
            if e.t < self.t_start || e.t > self.t_end {
                return Err(Error::EventOutOfRange {
                    index: i,
                    t: e.t,
                    t_start: self.t_start,
                    t_end: self.t_end,
                });
            }
            let key = e.sort_key();
            if prev.is_some_and(|p| p > key) {
                return Err(Error::config(format!("event {i} is out of order")));
            }
            prev = Some(key);
        }
        Ok(())
    }

    /// Events with `lo <= t < hi` (or `<= hi` when `inclusive_end`), re-ranged
    /// to `[lo, hi]`.
    pub fn slice(&self, lo: u64, hi: u64, inclusive_end: bool) -> EventStream {
        let begin = self.events.partition_point(|e| e.t < lo);
        let end = if inclusive_end {
            self.events.partition_point(|e| e.t <= hi)
        } else {
            self.events.partition_point(|e| e.t < hi)
        };
        EventStream {
            width: self.width,
            height: self.height,
            t_start: lo,
            t_end: hi,
            events: self.events[begin..end.max(begin)].to_vec(),
        }
    }
}
