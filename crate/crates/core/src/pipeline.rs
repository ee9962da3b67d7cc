//! Frame-stream orchestration: calibrate, detect, record, notify.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::Config;
use crate::engine::{Engine, EngineConfig, EngineError, EventKind, TriggeredEvent};
use crate::frame::{self, encode_gray, FramePair, FrameStream, GrayFrame, SourceError};
use crate::notifier::{Notifier, NotifyStats};
use crate::recorder::{Recorder, RecorderError};
use crate::shape;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("source directory {0} holds no frames")]
    EmptySource(PathBuf),
}

/// Outcome of a full run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub frames: u64,
    pub calibration_frames: u64,
    pub events: [u64; 3],
    pub records: u64,
    pub record_failures: u64,
    pub dropped_notifications: u64,
    pub notify: Option<NotifyStats>,
}

impl RunSummary {
    pub fn event_count(&self, kind: EventKind) -> u64 {
        self.events[kind as usize]
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("frames processed\t{}\n", self.frames));
        out.push_str(&format!("calibration frames\t{}\n", self.calibration_frames));
        for kind in EventKind::ALL {
            out.push_str(&format!("{kind}: {}\n", self.event_count(kind)));
        }
        out.push_str(&format!("records written\t{}\n", self.records));
        if self.record_failures > 0 {
            out.push_str(&format!("record failures\t{}\n", self.record_failures));
        }
        if self.dropped_notifications > 0 {
            out.push_str(&format!("notifications dropped\t{}\n", self.dropped_notifications));
        }
        if let Some(n) = &self.notify {
            out.push_str(&format!(
                "social delivered/failed/missed\t{}/{}/{}\n",
                n.social_delivered, n.social_failed, n.social_deadline_missed
            ));
            out.push_str(&format!(
                "voice delivered/failed\t{}/{}\n",
                n.voice_delivered, n.voice_failed
            ));
        }
        out
    }
}

/// Builds the engine configuration for a frame geometry.
pub fn engine_config_from(config: &Config, width: u32, height: u32) -> EngineConfig {
    EngineConfig {
        width,
        height,
        rois: config.rois.clone(),
        background: config.background,
        shape: config.shape,
        calibration: config.calibration,
        refractory_ms: config.refractory_ms,
        novelty_expiry_ms: config.novelty_expiry_ms,
    }
}

/// Reads the first frame header of a directory source so the engine can be
/// fully validated before streaming starts.
pub fn peek_dimensions(dir: &Path, period_ms: u64) -> Result<(u32, u32), PipelineError> {
    let mut probe = frame::DirectorySource::open(dir, period_ms)?;
    match probe.next_pair()? {
        Some(pair) => Ok((pair.gray.width, pair.gray.height)),
        None => Err(PipelineError::EmptySource(dir.to_path_buf())),
    }
}

/// One configured processing pipeline. Construct with [`Pipeline::new`],
/// feed frames via [`Pipeline::process_pair`] or drain a whole stream with
/// [`Pipeline::run`].
pub struct Pipeline {
    engine: Engine,
    recorder: Recorder,
    notifier: Option<Notifier>,
    message: String,
    debug_dir: Option<PathBuf>,
    trace: Option<File>,
    summary: RunSummary,
}

impl Pipeline {
    pub fn new(
        engine: Engine,
        recorder: Recorder,
        notifier: Option<Notifier>,
        message: String,
        debug_dir: Option<PathBuf>,
    ) -> Result<Self, PipelineError> {
        let trace = match &debug_dir {
            Some(dir) => {
                fs::create_dir_all(dir)
                    .map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
                let path = dir.join("trace.csv");
                let mut file = OpenOptions::new()
                    .create(true)
                    .truncate(true)
                    .write(true)
                    .open(&path)
                    .map_err(|source| PipelineError::Io { path: path.clone(), source })?;
                writeln!(file, "frame_ts,roi_id,metric,threshold")
                    .map_err(|source| PipelineError::Io { path, source })?;
                Some(file)
            }
            None => None,
        };
        Ok(Pipeline {
            engine,
            recorder,
            notifier,
            message,
            debug_dir,
            trace,
            summary: RunSummary::default(),
        })
    }

    pub fn recorder(&self) -> &Recorder {
        &self.recorder
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Processes one frame pair end to end: engine step, persistence,
    /// notification, debug dumps. Record failures are tolerated and counted;
    /// the failed write stays in the recorder's retry queue.
    pub fn process_pair(&mut self, pair: &FramePair) -> Result<(), PipelineError> {
        let events = self.engine.process(pair)?;
        self.summary.frames += 1;
        self.summary.calibration_frames = self.engine.calibration_frames() as u64;

        if let Some(dir) = &self.debug_dir {
            if let Some(mask) = self.engine.last_mask() {
                let path = dir.join(format!("mask_{:08}.pgm", pair.timestamp_ms()));
                fs::write(&path, encode_gray(&mask.to_gray_frame(pair.timestamp_ms())))
                    .map_err(|source| PipelineError::Io { path, source })?;
            }
            self.dump_photo_regions(pair, &events)?;
        }
        if let Some(trace) = self.trace.as_mut() {
            for m in self.engine.last_metrics() {
                let _ = writeln!(
                    trace,
                    "{},{},{},{}",
                    pair.timestamp_ms(),
                    m.roi_id,
                    m.metric,
                    m.threshold
                );
            }
        }

        // Flush any writes a previous frame failed to land.
        if self.recorder.pending() > 0 {
            let _ = self.recorder.flush_retries();
        }
        for event in &events {
            self.summary.events[event.kind as usize] += 1;
            match self.recorder.record(event, &pair.color) {
                Ok(record) => {
                    self.summary.records += 1;
                    if let Some(notifier) = self.notifier.as_mut() {
                        let snapshot = self.recorder.log_path().with_file_name(record.snapshot);
                        notifier.notify(event, Some(&snapshot), &self.message);
                    }
                }
                Err(_) => {
                    self.summary.record_failures += 1;
                    if let Some(notifier) = self.notifier.as_mut() {
                        notifier.notify(event, None, &self.message);
                    }
                }
            }
        }
        Ok(())
    }

    /// Debug view of each photo region: the binarized image with any
    /// detected rectangle corners painted mid-gray.
    fn dump_photo_regions(
        &self,
        pair: &FramePair,
        events: &[TriggeredEvent],
    ) -> Result<(), PipelineError> {
        let Some(dir) = &self.debug_dir else { return Ok(()) };
        if !self.engine.is_calibrated() {
            return Ok(());
        }
        let photo_rois = self
            .engine
            .config()
            .rois
            .iter()
            .filter(|r| r.kind == EventKind::PhotoLink);
        for roi in photo_rois {
            let binary = shape::binarize(&pair.gray, roi.rect).map_err(EngineError::from)?;
            let mut image = GrayFrame::filled(roi.rect.w, roi.rect.h, 0);
            image.timestamp_ms = pair.timestamp_ms();
            for y in 0..roi.rect.h {
                for x in 0..roi.rect.w {
                    if binary.get(x, y) {
                        image.set(x, y, 255);
                    }
                }
            }
            for event in events.iter().filter(|e| e.roi_id == roi.id) {
                for quad in &event.rectangles {
                    for corner in quad.corners {
                        let x = corner.x - roi.rect.x as i32;
                        let y = corner.y - roi.rect.y as i32;
                        if x >= 0 && y >= 0 && (x as u32) < roi.rect.w && (y as u32) < roi.rect.h {
                            image.set(x as u32, y as u32, 128);
                        }
                    }
                }
            }
            let path = dir.join(format!("shape_{:08}_roi{}.pgm", pair.timestamp_ms(), roi.id));
            fs::write(&path, encode_gray(&image))
                .map_err(|source| PipelineError::Io { path, source })?;
        }
        Ok(())
    }

    /// Drains a stream and returns the run summary. The notifier is closed
    /// and joined so all deliveries settle.
    pub fn run<S: FrameStream>(mut self, source: &mut S) -> Result<RunSummary, PipelineError> {
        while let Some(pair) = source.next_pair()? {
            self.process_pair(&pair)?;
        }
        Ok(self.finish())
    }

    /// Finalizes without consuming more frames.
    pub fn finish(mut self) -> RunSummary {
        let _ = self.recorder.flush_retries();
        if let Some(notifier) = self.notifier.take() {
            self.summary.dropped_notifications = notifier.dropped();
            self.summary.notify = Some(notifier.finish());
        }
        self.summary
    }
}
