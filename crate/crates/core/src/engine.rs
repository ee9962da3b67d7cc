//! ROI configuration, threshold calibration, and per-frame event triggering.
//!
//! The engine owns the background model and up to three regions, one per
//! event kind. Motion regions (watch dog, danger notice) trigger when the
//! foreground area inside the region exceeds a threshold calibrated from the
//! initial frames; the photo-link region triggers when a rectangle that was
//! not seen before appears. A per-kind refractory period throttles
//! re-emission while a condition persists.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::background::{BackgroundModel, BackgroundParams, ForegroundMask, ModelError};
use crate::frame::{ColorFrame, FramePair, GrayFrame};
use crate::geom::Rect;
use crate::shape::{detect_rectangles, Quadrilateral, ShapeError, ShapeParams};

pub const ROI_MIN_SIDE: u32 = 8;
/// Threshold floor as a fraction of the region area.
pub const THRESHOLD_FLOOR_FRACTION: f64 = 0.005;
/// Calibration window for [`CalibrationMode::OneMinute`].
pub const ONE_MINUTE_MS: u64 = 60_000;
/// Bounding-box IoU at or above which two rectangles are the same object.
pub const NOVELTY_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    WatchDog,
    DangerNotice,
    PhotoLink,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::WatchDog, EventKind::DangerNotice, EventKind::PhotoLink];

    /// Motion kinds share the foreground-area trigger path.
    pub fn is_motion(&self) -> bool {
        matches!(self, EventKind::WatchDog | EventKind::DangerNotice)
    }

    fn index(&self) -> usize {
        match self {
            EventKind::WatchDog => 0,
            EventKind::DangerNotice => 1,
            EventKind::PhotoLink => 2,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::WatchDog => "WatchDog",
            EventKind::DangerNotice => "DangerNotice",
            EventKind::PhotoLink => "PhotoLink",
        })
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "WatchDog" => Ok(EventKind::WatchDog),
            "DangerNotice" => Ok(EventKind::DangerNotice),
            "PhotoLink" => Ok(EventKind::PhotoLink),
            other => Err(format!("unknown event kind {other:?}")),
        }
    }
}

/// A configured detection region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiRegion {
    pub id: u32,
    pub kind: EventKind,
    pub rect: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Thresholds from exactly the first 10 frames.
    TenFrames,
    /// Thresholds from every frame with timestamp below one minute.
    OneMinute,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub width: u32,
    pub height: u32,
    pub rois: Vec<RoiRegion>,
    pub background: BackgroundParams,
    pub shape: ShapeParams,
    pub calibration: CalibrationMode,
    /// Minimum gap between emissions of the same kind; 0 emits every frame
    /// the condition holds.
    pub refractory_ms: u64,
    /// Known rectangles unseen for this long are forgotten.
    pub novelty_expiry_ms: u64,
}

impl EngineConfig {
    pub fn new(width: u32, height: u32, rois: Vec<RoiRegion>) -> Self {
        EngineConfig {
            width,
            height,
            rois,
            background: BackgroundParams::default(),
            shape: ShapeParams::default(),
            calibration: CalibrationMode::TenFrames,
            refractory_ms: 2_000,
            novelty_expiry_ms: 600_000,
        }
    }
}

/// One emitted event. `metric` is the foreground pixel area for motion kinds
/// and the new-rectangle count for photo link; `rectangles` is non-empty for
/// photo-link events only.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggeredEvent {
    pub kind: EventKind,
    pub roi_id: u32,
    pub timestamp_ms: u64,
    pub metric: u64,
    pub rectangles: Vec<Quadrilateral>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("at least one region must be configured")]
    NoRois,
    #[error("at most three regions are supported, got {0}")]
    TooManyRois(usize),
    #[error("more than one {0} region configured")]
    DuplicateKind(EventKind),
    #[error("duplicate region id {0}")]
    DuplicateId(u32),
    #[error("region {id} rect {rect:?} exceeds the {width}x{height} frame")]
    RoiOutOfBounds { id: u32, rect: Rect, width: u32, height: u32 },
    #[error("region {id} sides must be >= {ROI_MIN_SIDE} pixels, got {w}x{h}")]
    RoiTooSmall { id: u32, w: u32, h: u32 },
    #[error("calibration is not complete")]
    CalibrationIncomplete,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Calibrated threshold: `max(floor, mean + 3 * stddev)` over the sampled
/// foreground areas, population standard deviation. An empty sample set
/// falls back to the floor.
pub fn calibration_threshold(samples: &[f64], floor: f64) -> f64 {
    if samples.is_empty() {
        return floor;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    floor.max(mean + 3.0 * var.sqrt())
}

/// Previously notified rectangles with last-seen timestamps.
#[derive(Debug, Clone, Default)]
pub struct KnownRectSet {
    entries: Vec<KnownRect>,
}

#[derive(Debug, Clone, Copy)]
struct KnownRect {
    bbox: Rect,
    last_seen_ms: u64,
}

impl KnownRectSet {
    pub fn new() -> Self {
        KnownRectSet::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Prunes entries unseen for longer than `expiry_ms`, then returns the
    /// detections whose bounding-box IoU with every known rectangle is below
    /// [`NOVELTY_IOU`]. All detections refresh or join the known set.
    pub fn filter_new(
        &mut self,
        detected: &[Quadrilateral],
        now_ms: u64,
        expiry_ms: u64,
    ) -> Vec<Quadrilateral> {
        self.entries
            .retain(|e| now_ms.saturating_sub(e.last_seen_ms) <= expiry_ms);
        let prior: Vec<Rect> = self.entries.iter().map(|e| e.bbox).collect();
        let mut new_rects = Vec::new();
        for quad in detected {
            let bbox = quad.aabb();
            let mut matched = false;
            for (i, known) in prior.iter().enumerate() {
                if known.iou(&bbox) >= NOVELTY_IOU {
                    self.entries[i].last_seen_ms = now_ms;
                    matched = true;
                }
            }
            if !matched {
                new_rects.push(*quad);
                self.entries.push(KnownRect { bbox, last_seen_ms: now_ms });
            }
        }
        new_rects
    }
}

/// Result of feeding one frame to [`Engine::calibrate_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationStep {
    /// The frame was consumed as a calibration sample.
    Sampled { frames_sampled: u32, complete: bool },
    /// Calibration is complete and the frame was not consumed; process it
    /// with [`Engine::step`].
    NotConsumed,
}

/// Per-region metric snapshot of the last detection step, for debug traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub roi_id: u32,
    pub metric: u64,
    pub threshold: f64,
}

#[derive(Debug)]
struct CalibrationState {
    frames_sampled: u32,
    samples: Vec<Vec<f64>>, // parallel to config.rois; empty for photo regions
    complete: bool,
}

pub struct Engine {
    config: EngineConfig,
    model: BackgroundModel,
    calibration: CalibrationState,
    thresholds: Vec<Option<f64>>, // parallel to config.rois
    known_rects: KnownRectSet,
    last_emit_ms: [Option<u64>; 3],
    last_metrics: Vec<MetricSample>,
    last_mask: Option<ForegroundMask>,
}

impl Engine {
    /// Validates the region layout and parameters and enters calibration.
    pub fn configure(config: EngineConfig) -> Result<Self, EngineError> {
        if config.rois.is_empty() {
            return Err(EngineError::NoRois);
        }
        if config.rois.len() > 3 {
            return Err(EngineError::TooManyRois(config.rois.len()));
        }
        for (i, roi) in config.rois.iter().enumerate() {
            if config.rois[..i].iter().any(|r| r.kind == roi.kind) {
                return Err(EngineError::DuplicateKind(roi.kind));
            }
            if config.rois[..i].iter().any(|r| r.id == roi.id) {
                return Err(EngineError::DuplicateId(roi.id));
            }
            if roi.rect.w < ROI_MIN_SIDE || roi.rect.h < ROI_MIN_SIDE {
                return Err(EngineError::RoiTooSmall { id: roi.id, w: roi.rect.w, h: roi.rect.h });
            }
            if !roi.rect.fits_within(config.width, config.height) {
                return Err(EngineError::RoiOutOfBounds {
                    id: roi.id,
                    rect: roi.rect,
                    width: config.width,
                    height: config.height,
                });
            }
        }
        config.shape.validate()?;
        let model = BackgroundModel::new(config.width, config.height, config.background)?;
        let samples = config.rois.iter().map(|_| Vec::new()).collect();
        let thresholds = config.rois.iter().map(|_| None).collect();
        Ok(Engine {
            config,
            model,
            calibration: CalibrationState { frames_sampled: 0, samples, complete: false },
            thresholds,
            known_rects: KnownRectSet::new(),
            last_emit_ms: [None; 3],
            last_metrics: Vec::new(),
            last_mask: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibration.complete
    }

    /// Frames consumed as calibration samples so far.
    pub fn calibration_frames(&self) -> u32 {
        self.calibration.frames_sampled
    }

    /// Calibrated threshold of a motion region, once calibration finished.
    pub fn threshold(&self, roi_id: u32) -> Option<f64> {
        self.config
            .rois
            .iter()
            .position(|r| r.id == roi_id)
            .and_then(|i| self.thresholds[i])
    }

    /// Operator override for a motion region's threshold.
    pub fn override_threshold(&mut self, roi_id: u32, threshold: f64) {
        if let Some(i) = self.config.rois.iter().position(|r| r.id == roi_id) {
            self.thresholds[i] = Some(threshold);
        }
    }

    /// Metric/threshold pairs observed by the most recent [`Engine::step`].
    pub fn last_metrics(&self) -> &[MetricSample] {
        &self.last_metrics
    }

    /// Foreground mask of the most recently consumed frame.
    pub fn last_mask(&self) -> Option<&ForegroundMask> {
        self.last_mask.as_ref()
    }

    fn finalize_thresholds(&mut self) {
        for (i, roi) in self.config.rois.iter().enumerate() {
            if roi.kind.is_motion() {
                let floor = THRESHOLD_FLOOR_FRACTION * roi.rect.area() as f64;
                self.thresholds[i] = Some(calibration_threshold(&self.calibration.samples[i], floor));
            }
        }
        self.calibration.complete = true;
    }

    /// Feeds one frame to calibration. No events are ever emitted while
    /// calibrating; motion regions sample their foreground area per frame.
    pub fn calibrate_step(&mut self, gray: &GrayFrame) -> Result<CalibrationStep, EngineError> {
        if self.calibration.complete {
            return Ok(CalibrationStep::NotConsumed);
        }
        if self.config.calibration == CalibrationMode::OneMinute
            && gray.timestamp_ms >= ONE_MINUTE_MS
        {
            self.finalize_thresholds();
            return Ok(CalibrationStep::NotConsumed);
        }
        let mask = self.model.apply(gray)?;
        for (i, roi) in self.config.rois.iter().enumerate() {
            if roi.kind.is_motion() {
                let area = mask.foreground_area(roi.rect)?;
                self.calibration.samples[i].push(area as f64);
            }
        }
        self.last_mask = Some(mask);
        self.calibration.frames_sampled += 1;
        if self.config.calibration == CalibrationMode::TenFrames
            && self.calibration.frames_sampled == 10
        {
            self.finalize_thresholds();
        }
        Ok(CalibrationStep::Sampled {
            frames_sampled: self.calibration.frames_sampled,
            complete: self.calibration.complete,
        })
    }

    fn refractory_ok(&self, kind: EventKind, now_ms: u64) -> bool {
        match self.last_emit_ms[kind.index()] {
            Some(last) => now_ms.saturating_sub(last) >= self.config.refractory_ms,
            None => true,
        }
    }

    /// Advances the model one frame and returns the events it triggered.
    /// Requires completed calibration and matching frame dimensions.
    pub fn step(
        &mut self,
        gray: &GrayFrame,
        color: &ColorFrame,
    ) -> Result<Vec<TriggeredEvent>, EngineError> {
        if !self.calibration.complete {
            return Err(EngineError::CalibrationIncomplete);
        }
        if color.width != self.config.width || color.height != self.config.height {
            return Err(EngineError::Model(ModelError::DimensionMismatch {
                width: self.config.width,
                height: self.config.height,
                got_width: color.width,
                got_height: color.height,
            }));
        }
        let mask = self.model.apply(gray)?;
        let now = gray.timestamp_ms;
        let mut events = Vec::new();
        self.last_metrics.clear();
        self.last_mask = Some(mask);
        let mask = self.last_mask.as_ref().expect("mask just stored");

        for (i, roi) in self.config.rois.iter().enumerate() {
            match roi.kind {
                EventKind::WatchDog | EventKind::DangerNotice => {
                    let area = mask.foreground_area(roi.rect)?;
                    let threshold = self.thresholds[i].expect("motion threshold calibrated");
                    self.last_metrics.push(MetricSample { roi_id: roi.id, metric: area, threshold });
                    if area as f64 > threshold && self.refractory_ok(roi.kind, now) {
                        debug_assert!(area as f64 > threshold);
                        events.push(TriggeredEvent {
                            kind: roi.kind,
                            roi_id: roi.id,
                            timestamp_ms: now,
                            metric: area,
                            rectangles: Vec::new(),
                        });
                        self.last_emit_ms[roi.kind.index()] = Some(now);
                    }
                }
                EventKind::PhotoLink => {
                    let detected = detect_rectangles(gray, roi.rect, &self.config.shape)?;
                    let new_rects =
                        self.known_rects
                            .filter_new(&detected, now, self.config.novelty_expiry_ms);
                    self.last_metrics.push(MetricSample {
                        roi_id: roi.id,
                        metric: new_rects.len() as u64,
                        threshold: 0.0,
                    });
                    if !new_rects.is_empty() && self.refractory_ok(roi.kind, now) {
                        events.push(TriggeredEvent {
                            kind: roi.kind,
                            roi_id: roi.id,
                            timestamp_ms: now,
                            metric: new_rects.len() as u64,
                            rectangles: new_rects,
                        });
                        self.last_emit_ms[roi.kind.index()] = Some(now);
                    }
                }
            }
        }
        Ok(events)
    }

    /// Routes a frame pair through calibration or detection as appropriate.
    pub fn process(&mut self, pair: &FramePair) -> Result<Vec<TriggeredEvent>, EngineError> {
        if !self.calibration.complete {
            if let CalibrationStep::Sampled { .. } = self.calibrate_step(&pair.gray)? {
                return Ok(Vec::new());
            }
        }
        self.step(&pair.gray, &pair.color)
    }
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("rois", &self.config.rois)
            .field("calibrated", &self.calibration.complete)
            .field("known_rects", &self.known_rects.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster;

    fn three_rois() -> Vec<RoiRegion> {
        vec![
            RoiRegion { id: 1, kind: EventKind::WatchDog, rect: Rect::new(8, 8, 40, 40) },
            RoiRegion { id: 2, kind: EventKind::DangerNotice, rect: Rect::new(80, 8, 40, 40) },
            RoiRegion { id: 3, kind: EventKind::PhotoLink, rect: Rect::new(30, 60, 80, 56) },
        ]
    }

    fn pair(gray: GrayFrame) -> FramePair {
        let color = gray.to_color();
        FramePair { color, gray }
    }

    fn run_frames(engine: &mut Engine, frames: Vec<GrayFrame>) -> Vec<TriggeredEvent> {
        let mut events = Vec::new();
        for g in frames {
            events.extend(engine.process(&pair(g)).unwrap());
        }
        events
    }

    fn static_frames(n: u64, w: u32, h: u32, value: u8, period: u64) -> Vec<GrayFrame> {
        (0..n)
            .map(|i| {
                let mut f = GrayFrame::filled(w, h, value);
                f.timestamp_ms = i * period;
                f
            })
            .collect()
    }

    #[test]
    fn configure_accepts_three_regions() {
        let engine = Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
        assert!(!engine.is_calibrated());
        assert_eq!(engine.config().rois.len(), 3);
    }

    #[test]
    fn configure_rejects_bad_layouts() {
        let mut dup = three_rois();
        dup[1].kind = EventKind::WatchDog;
        assert!(matches!(
            Engine::configure(EngineConfig::new(160, 120, dup)),
            Err(EngineError::DuplicateKind(EventKind::WatchDog))
        ));
        let out = vec![RoiRegion {
            id: 1,
            kind: EventKind::WatchDog,
            rect: Rect::new(150, 8, 40, 40),
        }];
        assert!(matches!(
            Engine::configure(EngineConfig::new(160, 120, out)),
            Err(EngineError::RoiOutOfBounds { id: 1, .. })
        ));
        assert!(matches!(
            Engine::configure(EngineConfig::new(160, 120, Vec::new())),
            Err(EngineError::NoRois)
        ));
        let small = vec![RoiRegion {
            id: 1,
            kind: EventKind::WatchDog,
            rect: Rect::new(0, 0, 7, 40),
        }];
        assert!(matches!(
            Engine::configure(EngineConfig::new(160, 120, small)),
            Err(EngineError::RoiTooSmall { .. })
        ));
    }

    #[test]
    fn threshold_formula_matches_hand_computed_values() {
        // Dead-still samples on a 100x100 region: the floor wins.
        let floor = 0.005 * 10_000.0;
        assert_eq!(calibration_threshold(&[0.0; 10], floor), 50.0);
        // Constant samples of 10: mean 10, stddev 0 -> max(50, 10) = 50.
        assert_eq!(calibration_threshold(&[10.0; 10], floor), 50.0);
        // Mean 100, population stddev 20 -> 160 when above the floor.
        let samples = [80.0, 120.0, 80.0, 120.0];
        assert_eq!(calibration_threshold(&samples, floor), 160.0);
        // Empty window degenerates to the floor.
        assert_eq!(calibration_threshold(&[], floor), 50.0);
    }

    #[test]
    fn ten_frames_mode_consumes_exactly_ten() {
        let mut engine = Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
        for (i, g) in static_frames(10, 160, 120, 100, 100).into_iter().enumerate() {
            match engine.calibrate_step(&g).unwrap() {
                CalibrationStep::Sampled { frames_sampled, complete } => {
                    assert_eq!(frames_sampled as usize, i + 1);
                    assert_eq!(complete, i == 9);
                }
                CalibrationStep::NotConsumed => panic!("frame {i} should be consumed"),
            }
        }
        assert!(engine.is_calibrated());
        let mut g = GrayFrame::filled(160, 120, 100);
        g.timestamp_ms = 1000;
        assert_eq!(engine.calibrate_step(&g).unwrap(), CalibrationStep::NotConsumed);
        // Static region: floor = 0.005 * 1600 = 8.
        assert_eq!(engine.threshold(1), Some(8.0));
        assert_eq!(engine.threshold(3), None);
    }

    #[test]
    fn one_minute_mode_consumes_frames_below_sixty_seconds() {
        let mut cfg = EngineConfig::new(160, 120, three_rois());
        cfg.calibration = CalibrationMode::OneMinute;
        let mut engine = Engine::configure(cfg).unwrap();
        // 6-second period: frames 0..9 calibrate, frame 10 (ts 60000) does not.
        for g in static_frames(10, 160, 120, 100, 6_000) {
            assert!(matches!(
                engine.calibrate_step(&g).unwrap(),
                CalibrationStep::Sampled { .. }
            ));
        }
        assert!(!engine.is_calibrated());
        let mut g = GrayFrame::filled(160, 120, 100);
        g.timestamp_ms = 60_000;
        assert_eq!(engine.calibrate_step(&g).unwrap(), CalibrationStep::NotConsumed);
        assert!(engine.is_calibrated());
    }

    #[test]
    fn step_requires_calibration() {
        let mut engine = Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
        let g = GrayFrame::filled(160, 120, 100);
        let c = g.to_color();
        assert!(matches!(engine.step(&g, &c), Err(EngineError::CalibrationIncomplete)));
    }

    #[test]
    fn static_scene_emits_nothing() {
        let mut engine = Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
        let events = run_frames(&mut engine, static_frames(60, 160, 120, 100, 100));
        assert!(events.is_empty());
    }

    #[test]
    fn no_events_during_calibration_even_with_motion() {
        let mut engine = Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
        let mut frames = Vec::new();
        for i in 0..8u64 {
            let mut g = GrayFrame::filled(160, 120, 200);
            // A blob roaming the watch-dog region from frame 2 on.
            if i >= 2 {
                raster::fill_rect(&mut g, Rect::new(10 + i as u32, 10, 20, 20), 40);
            }
            g.timestamp_ms = i * 100;
            frames.push(g);
        }
        let events = run_frames(&mut engine, frames);
        assert!(events.is_empty());
        assert!(!engine.is_calibrated());
    }

    fn blob_crossing_frames() -> Vec<GrayFrame> {
        // 60 frames at 100 ms; a 20x20 blob crosses the watch-dog region
        // frames 12..=20, is absent, then crosses again frames 45..=53.
        let mut frames = Vec::new();
        for i in 0..60u64 {
            let mut g = GrayFrame::filled(160, 120, 200);
            let span = |start: u64| -> Option<u32> {
                let t = i.checked_sub(start)?;
                (t <= 8).then_some((t * 6) as u32)
            };
            if let Some(x) = span(12).or_else(|| span(45)) {
                raster::fill_rect(&mut g, Rect::new(4 + x, 16, 20, 20), 40);
            }
            g.timestamp_ms = i * 100;
            frames.push(g);
        }
        frames
    }

    #[test]
    fn blob_crossing_triggers_once_per_pass() {
        let mut engine = Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
        let events = run_frames(&mut engine, blob_crossing_frames());
        let watch: Vec<&TriggeredEvent> =
            events.iter().filter(|e| e.kind == EventKind::WatchDog).collect();
        assert_eq!(watch.len(), 2, "events: {events:?}");
        assert_eq!(watch[0].timestamp_ms, 1_200);
        assert_eq!(watch[1].timestamp_ms, 4_500);
        for e in &watch {
            assert!(e.metric as f64 > engine.threshold(1).unwrap());
        }
        assert!(events.iter().all(|e| e.kind == EventKind::WatchDog));
    }

    #[test]
    fn refractory_zero_emits_every_frame_above_threshold() {
        let mut cfg = EngineConfig::new(160, 120, three_rois());
        cfg.refractory_ms = 0;
        let mut engine = Engine::configure(cfg).unwrap();
        let events = run_frames(&mut engine, blob_crossing_frames());
        let watch = events.iter().filter(|e| e.kind == EventKind::WatchDog).count();
        // Both passes emit on every frame the blob overlaps the region.
        assert!(watch > 10, "got {watch}");
    }

    #[test]
    fn persistent_condition_reemits_after_refractory() {
        let mut cfg = EngineConfig::new(160, 120, three_rois());
        cfg.refractory_ms = 600;
        let mut engine = Engine::configure(cfg).unwrap();
        let mut frames = Vec::new();
        for i in 0..40u64 {
            let mut g = GrayFrame::filled(160, 120, 200);
            // Blob parked inside the danger region from frame 12 on.
            if i >= 12 {
                raster::fill_rect(&mut g, Rect::new(90, 18, 20, 20), 40);
            }
            g.timestamp_ms = i * 100;
            frames.push(g);
        }
        let events = run_frames(&mut engine, frames);
        let danger: Vec<u64> = events
            .iter()
            .filter(|e| e.kind == EventKind::DangerNotice)
            .map(|e| e.timestamp_ms)
            .collect();
        // Re-emission every 600 ms while foreground; by 2.8 s the parked
        // blob has been absorbed into the background and emission stops.
        assert_eq!(danger, vec![1_200, 1_800, 2_400]);
    }

    #[test]
    fn static_pasted_rectangle_triggers_exactly_once() {
        let mut engine = Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
        let mut frames = Vec::new();
        for i in 0..100u64 {
            let mut g = GrayFrame::filled(160, 120, 200);
            if i >= 20 {
                raster::fill_rect(&mut g, Rect::new(50, 70, 36, 26), 40);
            }
            g.timestamp_ms = i * 100;
            frames.push(g);
        }
        let events = run_frames(&mut engine, frames);
        let photo: Vec<&TriggeredEvent> =
            events.iter().filter(|e| e.kind == EventKind::PhotoLink).collect();
        assert_eq!(photo.len(), 1);
        assert_eq!(photo[0].timestamp_ms, 2_000);
        assert_eq!(photo[0].metric, 1);
        assert_eq!(photo[0].rectangles.len(), 1);
    }

    #[test]
    fn novelty_filter_unit_cases() {
        let quad = |x: i32, y: i32, w: i32, h: i32| Quadrilateral {
            corners: [
                crate::geom::Point::new(x, y),
                crate::geom::Point::new(x, y + h - 1),
                crate::geom::Point::new(x + w - 1, y + h - 1),
                crate::geom::Point::new(x + w - 1, y),
            ],
        };
        let mut known = KnownRectSet::new();
        // Empty set: one detection is new.
        let a = quad(10, 10, 20, 20);
        assert_eq!(known.filter_new(&[a], 0, 10_000).len(), 1);
        // Identical re-detection is suppressed.
        assert_eq!(known.filter_new(&[a], 1_000, 10_000).len(), 0);
        // IoU 20x20 window shifted by 4 columns: 16*20 / (2*400 - 320) = 2/3.
        let shifted = quad(14, 10, 20, 20);
        let disjoint = quad(60, 60, 20, 20);
        let new = known.filter_new(&[shifted, disjoint], 2_000, 10_000);
        assert_eq!(new.len(), 1);
        assert_eq!(new[0], disjoint);
        // After expiry the original spot is new again.
        let new = known.filter_new(&[a], 20_000, 10_000);
        assert_eq!(new.len(), 1);
    }

    #[test]
    fn lowering_a_threshold_never_loses_events() {
        let frames = blob_crossing_frames;
        let count_with = |threshold: Option<f64>| {
            let mut engine =
                Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
            let mut total = 0usize;
            for g in frames() {
                if !engine.is_calibrated() {
                    if let CalibrationStep::Sampled { complete, .. } =
                        engine.calibrate_step(&g).unwrap()
                    {
                        if complete {
                            if let Some(t) = threshold {
                                engine.override_threshold(1, t);
                            }
                        }
                        continue;
                    }
                }
                total += engine
                    .step(&g, &g.to_color())
                    .unwrap()
                    .iter()
                    .filter(|e| e.kind == EventKind::WatchDog)
                    .count();
            }
            total
        };
        let calibrated = count_with(None);
        let lowered = count_with(Some(1.0));
        assert!(lowered >= calibrated, "{lowered} < {calibrated}");
    }

    #[test]
    fn determinism_same_input_same_events() {
        let run = || {
            let mut engine =
                Engine::configure(EngineConfig::new(160, 120, three_rois())).unwrap();
            run_frames(&mut engine, blob_crossing_frames())
        };
        assert_eq!(run(), run());
    }
}
