//! Event persistence: one tab-separated log line plus one color snapshot per
//! triggered event, and per-day statistics over the log.
//!
//! Log format, UTF-8 with LF endings:
//! `<timestamp_ms>\t<kind>\t<roi_id>\t<metric>\t<snapshot>`

use std::collections::VecDeque;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{EventKind, TriggeredEvent};
use crate::frame::{encode_color, ColorFrame};

pub const LOG_FILE: &str = "events.log";
const RETRY_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum RecorderError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("experiment days must be > 0")]
    ZeroDays,
}

/// A persisted event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub kind: EventKind,
    pub roi_id: u32,
    pub timestamp_ms: u64,
    pub metric: u64,
    pub snapshot: String,
}

impl EventRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\n",
            self.timestamp_ms, self.kind, self.roi_id, self.metric, self.snapshot
        )
    }
}

struct PendingWrite {
    snapshot_name: String,
    snapshot_bytes: Vec<u8>,
    log_line: String,
}

/// Writes snapshots and log lines under one output directory. Failed writes
/// are kept in a bounded in-memory queue and retried on demand; the queue
/// drops its oldest entry past capacity.
pub struct Recorder {
    out_dir: PathBuf,
    retry: VecDeque<PendingWrite>,
    dropped: u64,
}

impl Recorder {
    pub fn create(out_dir: &Path) -> Result<Self, RecorderError> {
        fs::create_dir_all(out_dir).map_err(|source| RecorderError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        Ok(Recorder { out_dir: out_dir.to_path_buf(), retry: VecDeque::new(), dropped: 0 })
    }

    pub fn log_path(&self) -> PathBuf {
        self.out_dir.join(LOG_FILE)
    }

    /// Queued writes awaiting retry.
    pub fn pending(&self) -> usize {
        self.retry.len()
    }

    /// Entries discarded because the retry queue overflowed.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    fn write_parts(&self, name: &str, bytes: &[u8], line: &str) -> Result<(), RecorderError> {
        let snap_path = self.out_dir.join(name);
        fs::write(&snap_path, bytes).map_err(|source| RecorderError::Io {
            path: snap_path.clone(),
            source,
        })?;
        let log_path = self.log_path();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|source| RecorderError::Io { path: log_path.clone(), source })?;
        // One write call per line keeps lines atomic under a single writer.
        file.write_all(line.as_bytes())
            .map_err(|source| RecorderError::Io { path: log_path, source })?;
        Ok(())
    }

    fn queue(&mut self, pending: PendingWrite) {
        if self.retry.len() == RETRY_CAPACITY {
            self.retry.pop_front();
            self.dropped += 1;
        }
        self.retry.push_back(pending);
    }

    /// Persists one event: snapshot `<kind>_<timestamp_ms>.ppm` plus a log
    /// line. On failure the write is queued for retry and the error returned.
    pub fn record(
        &mut self,
        event: &TriggeredEvent,
        frame: &ColorFrame,
    ) -> Result<EventRecord, RecorderError> {
        let snapshot = format!("{}_{}.ppm", event.kind, event.timestamp_ms);
        let record = EventRecord {
            kind: event.kind,
            roi_id: event.roi_id,
            timestamp_ms: event.timestamp_ms,
            metric: event.metric,
            snapshot: snapshot.clone(),
        };
        let line = record.log_line();
        let bytes = encode_color(frame);
        match self.write_parts(&snapshot, &bytes, &line) {
            Ok(()) => Ok(record),
            Err(e) => {
                self.queue(PendingWrite { snapshot_name: snapshot, snapshot_bytes: bytes, log_line: line });
                Err(e)
            }
        }
    }

    /// Retries queued writes in arrival order; stops at the first failure.
    /// Returns how many entries were flushed.
    pub fn flush_retries(&mut self) -> Result<usize, RecorderError> {
        let mut flushed = 0;
        while let Some(pending) = self.retry.front() {
            match self.write_parts(&pending.snapshot_name, &pending.snapshot_bytes, &pending.log_line) {
                Ok(()) => {
                    self.retry.pop_front();
                    flushed += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(flushed)
    }
}

/// Counts per kind over an event log, with per-day averages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStats {
    pub days: u32,
    pub counts: [u64; 3],
    /// Lines that failed to parse and were skipped.
    pub malformed: u64,
}

impl EventStats {
    pub fn count(&self, kind: EventKind) -> u64 {
        self.counts[kind as usize]
    }

    /// One snapshot is written per event.
    pub fn image_count(&self, kind: EventKind) -> u64 {
        self.count(kind)
    }

    /// Per-day average in exact hundredths (`round(100 * count / days)`,
    /// half up), so the printed 2-decimal value carries no float error.
    pub fn average_hundredths(&self, kind: EventKind) -> u64 {
        let count = self.count(kind);
        let days = self.days as u64;
        (200 * count + days) / (2 * days)
    }

    pub fn average_per_day(&self, kind: EventKind) -> f64 {
        self.count(kind) as f64 / self.days as f64
    }

    fn format_average(&self, kind: EventKind) -> String {
        let h = self.average_hundredths(kind);
        format!("{}.{:02}", h / 100, h % 100)
    }

    /// Per-kind counts, image counts and per-day averages as a text table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("experiment days\t{}\n", self.days));
        for (kind, label) in [
            (EventKind::WatchDog, "watch dog"),
            (EventKind::DangerNotice, "danger notice"),
            (EventKind::PhotoLink, "photo link"),
        ] {
            out.push_str(&format!("{label} events\t{}\n", self.count(kind)));
            out.push_str(&format!("{label} images\t{}\n", self.image_count(kind)));
            out.push_str(&format!("{label} events per day\t{}\n", self.format_average(kind)));
        }
        if self.malformed > 0 {
            out.push_str(&format!("malformed lines skipped\t{}\n", self.malformed));
        }
        out
    }
}

fn parse_line(line: &str) -> Option<EventKind> {
    let mut fields = line.split('\t');
    let _ts: u64 = fields.next()?.parse().ok()?;
    let kind: EventKind = fields.next()?.parse().ok()?;
    let _roi: u32 = fields.next()?.parse().ok()?;
    let _metric: u64 = fields.next()?.parse().ok()?;
    let snapshot = fields.next()?;
    if snapshot.is_empty() || fields.next().is_some() {
        return None;
    }
    Some(kind)
}

/// Tallies an event log. Malformed lines are skipped and counted.
pub fn summarize(log_path: &Path, days: u32) -> Result<EventStats, RecorderError> {
    if days == 0 {
        return Err(RecorderError::ZeroDays);
    }
    let text = fs::read_to_string(log_path).map_err(|source| RecorderError::Io {
        path: log_path.to_path_buf(),
        source,
    })?;
    let mut stats = EventStats { days, counts: [0; 3], malformed: 0 };
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        match parse_line(line) {
            Some(kind) => stats.counts[kind as usize] += 1,
            None => stats.malformed += 1,
        }
    }
    Ok(stats)
}
