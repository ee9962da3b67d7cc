//! Deterministic synthetic frame sequences from declarative scripts, plus an
//! analytic oracle predicting the events the engine should emit over them.
//!
//! A scenario file uses the shared config dialect: one `[scenario]` section,
//! any number of `[blob]`, `[rect]` and `[fall]` actor sections, and the
//! usual `[roi]` / `[background]` / `[shape]` / `[engine]` sections for the
//! engine under test. The oracle never touches the background model; it
//! reasons over actor geometry and the engine's documented trigger rules.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::background::BackgroundParams;
use crate::config::{
    self, parse_sections, parse_value, ConfigError, EngineSettings, RawSection,
};
use crate::engine::{
    CalibrationMode, EngineConfig, EventKind, RoiRegion, THRESHOLD_FLOOR_FRACTION,
};
use crate::fall::PatternLabel;
use crate::frame::{FramePair, FrameStream, GrayFrame, SourceError};
use crate::geom::Rect;
use crate::raster;
use crate::shape::ShapeParams;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario has zero frames")]
    ZeroFrames,
    #[error("{actor}: {what}")]
    ActorOutOfBounds { actor: String, what: String },
    #[error("{actor}: {what}")]
    BadActor { actor: String, what: String },
    #[error("oracle cannot predict this script: {0}")]
    OracleUnsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Waypoint {
    pub frame: u32,
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Actor {
    /// Rectangle blob following linearly interpolated waypoints; visible
    /// only within its waypoint span.
    MovingBlob { w: u32, h: u32, intensity: u8, waypoints: Vec<Waypoint> },
    /// Rectangle appearing at `appear` and staying until `remove` (if any).
    PastedRect { rect: Rect, intensity: u8, appear: u32, remove: Option<u32> },
    /// Bar rotating from vertical to horizontal over `span`, visible from
    /// `appear` on, centered at `(cx, cy)`.
    FallActor {
        bar_w: u32,
        bar_h: u32,
        cx: f64,
        cy: f64,
        intensity: u8,
        appear: u32,
        span: (u32, u32),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub width: u32,
    pub height: u32,
    pub frames: u32,
    pub period_ms: u64,
    pub background: u8,
    /// Uniform per-pixel jitter amplitude; 0 disables noise.
    pub jitter: u8,
    pub seed: u64,
    pub actors: Vec<Actor>,
}

/// A scenario script together with the engine configuration it runs under.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub script: ScenarioScript,
    pub rois: Vec<RoiRegion>,
    pub background: BackgroundParams,
    pub shape: ShapeParams,
    pub calibration: CalibrationMode,
    pub refractory_ms: u64,
    pub novelty_expiry_ms: u64,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = fs::read_to_string(path).map_err(|source| {
            ScriptError::Config(ConfigError::Io { path: path.to_path_buf(), source })
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let sections = parse_sections(text)?;
        let mut script: Option<ScenarioScript> = None;
        let mut actors = Vec::new();
        let mut rois = Vec::new();
        let mut background = BackgroundParams::default();
        let mut shape = ShapeParams::default();
        let mut engine = EngineSettings::default();

        for mut section in sections {
            match section.name.as_str() {
                "scenario" => script = Some(scenario_from_section(&mut section)?),
                "blob" => actors.push(blob_from_section(&mut section)?),
                "rect" => actors.push(rect_from_section(&mut section)?),
                "fall" => actors.push(fall_from_section(&mut section)?),
                "roi" => rois.push(config::roi_from_section(&mut section)?),
                "background" => background = config::background_from_section(&mut section)?,
                "shape" => shape = config::shape_from_section(&mut section)?,
                "engine" => engine = config::engine_from_section(&mut section)?,
                other => {
                    return Err(ScriptError::Config(ConfigError::UnknownSection {
                        line: section.line,
                        name: other.to_string(),
                    }))
                }
            }
        }
        let mut script = script.ok_or_else(|| {
            ScriptError::Config(ConfigError::MissingSection("scenario".to_string()))
        })?;
        script.actors = actors;
        if rois.is_empty() {
            return Err(ScriptError::Config(ConfigError::MissingSection("roi".to_string())));
        }
        let scenario = Scenario {
            script,
            rois,
            background,
            shape,
            calibration: engine.calibration,
            refractory_ms: engine.refractory_ms,
            novelty_expiry_ms: engine.novelty_expiry_ms,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            width: self.script.width,
            height: self.script.height,
            rois: self.rois.clone(),
            background: self.background,
            shape: self.shape,
            calibration: self.calibration,
            refractory_ms: self.refractory_ms,
            novelty_expiry_ms: self.novelty_expiry_ms,
        }
    }

    fn validate(&self) -> Result<(), ScriptError> {
        let s = &self.script;
        if s.frames == 0 {
            return Err(ScriptError::ZeroFrames);
        }
        for (i, actor) in s.actors.iter().enumerate() {
            let name = |kind: &str| format!("{kind} actor {i}");
            match actor {
                Actor::MovingBlob { w, h, waypoints, .. } => {
                    if waypoints.is_empty() {
                        return Err(ScriptError::BadActor {
                            actor: name("blob"),
                            what: "needs at least one waypoint".to_string(),
                        });
                    }
                    for pair in waypoints.windows(2) {
                        if pair[1].frame < pair[0].frame {
                            return Err(ScriptError::BadActor {
                                actor: name("blob"),
                                what: "waypoint frames must be non-decreasing".to_string(),
                            });
                        }
                    }
                    for wp in waypoints {
                        if wp.frame >= s.frames {
                            return Err(ScriptError::BadActor {
                                actor: name("blob"),
                                what: format!("waypoint frame {} out of range", wp.frame),
                            });
                        }
                        if !Rect::new(wp.x, wp.y, *w, *h).fits_within(s.width, s.height) {
                            return Err(ScriptError::ActorOutOfBounds {
                                actor: name("blob"),
                                what: format!("waypoint ({}, {}) leaves the frame", wp.x, wp.y),
                            });
                        }
                    }
                }
                Actor::PastedRect { rect, appear, remove, .. } => {
                    if !rect.fits_within(s.width, s.height) {
                        return Err(ScriptError::ActorOutOfBounds {
                            actor: name("rect"),
                            what: format!("{rect:?} leaves the frame"),
                        });
                    }
                    if *appear >= s.frames {
                        return Err(ScriptError::BadActor {
                            actor: name("rect"),
                            what: format!("appear frame {appear} out of range"),
                        });
                    }
                    if let Some(r) = remove {
                        if r <= appear {
                            return Err(ScriptError::BadActor {
                                actor: name("rect"),
                                what: "remove must come after appear".to_string(),
                            });
                        }
                    }
                }
                Actor::FallActor { bar_w, bar_h, cx, cy, appear, span, .. } => {
                    let radius =
                        ((*bar_w as f64).powi(2) + (*bar_h as f64).powi(2)).sqrt() / 2.0;
                    let inside = cx - radius >= 0.0
                        && cy - radius >= 0.0
                        && cx + radius <= s.width as f64
                        && cy + radius <= s.height as f64;
                    if !inside {
                        return Err(ScriptError::ActorOutOfBounds {
                            actor: name("fall"),
                            what: "rotation sweep leaves the frame".to_string(),
                        });
                    }
                    if span.0 > span.1 || span.1 >= s.frames || *appear >= s.frames {
                        return Err(ScriptError::BadActor {
                            actor: name("fall"),
                            what: "span/appear out of range".to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn scenario_from_section(section: &mut RawSection) -> Result<ScenarioScript, ScriptError> {
    let (w, wl) = section.take_required("width")?;
    let (h, hl) = section.take_required("height")?;
    let (frames, fl) = section.take_required("frames")?;
    let (period, pl) = section.take_required("period_ms")?;
    let (bg, bl) = section.take_required("background")?;
    let jitter = match section.take("jitter")? {
        Some((v, line)) => parse_value(&v, line, "jitter")?,
        None => 0,
    };
    let seed = match section.take("seed")? {
        Some((v, line)) => parse_value(&v, line, "seed")?,
        None => 0,
    };
    section.finish()?;
    Ok(ScenarioScript {
        width: parse_value(&w, wl, "width")?,
        height: parse_value(&h, hl, "height")?,
        frames: parse_value(&frames, fl, "frames")?,
        period_ms: parse_value(&period, pl, "period_ms")?,
        background: parse_value(&bg, bl, "background")?,
        jitter,
        seed,
        actors: Vec::new(),
    })
}

fn parse_pair(value: &str, line: usize, what: &str) -> Result<(u32, u32), ConfigError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(ConfigError::BadValue { line, what: format!("expected `{what}`") });
    }
    Ok((parse_value(parts[0], line, what)?, parse_value(parts[1], line, what)?))
}

fn blob_from_section(section: &mut RawSection) -> Result<Actor, ScriptError> {
    let (size, sl) = section.take_required("size")?;
    let (w, h) = parse_pair(&size, sl, "size: `w h`")?;
    let (intensity, il) = section.take_required("intensity")?;
    let mut waypoints = Vec::new();
    for (value, line) in section.take_repeated("waypoint") {
        let parts: Vec<&str> = value.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(ScriptError::Config(ConfigError::BadValue {
                line,
                what: "waypoint expects `frame x y`".to_string(),
            }));
        }
        waypoints.push(Waypoint {
            frame: parse_value(parts[0], line, "frame")?,
            x: parse_value(parts[1], line, "x")?,
            y: parse_value(parts[2], line, "y")?,
        });
    }
    section.finish().map_err(ScriptError::Config)?;
    Ok(Actor::MovingBlob {
        w,
        h,
        intensity: parse_value(&intensity, il, "intensity")?,
        waypoints,
    })
}

fn rect_from_section(section: &mut RawSection) -> Result<Actor, ScriptError> {
    let (rect, rl) = section.take_required("rect")?;
    let parts: Vec<&str> = rect.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(ScriptError::Config(ConfigError::BadValue {
            line: rl,
            what: "rect expects `x y w h`".to_string(),
        }));
    }
    let rect = Rect::new(
        parse_value(parts[0], rl, "x")?,
        parse_value(parts[1], rl, "y")?,
        parse_value(parts[2], rl, "w")?,
        parse_value(parts[3], rl, "h")?,
    );
    let (intensity, il) = section.take_required("intensity")?;
    let (appear, al) = section.take_required("appear")?;
    let remove = match section.take("remove")? {
        None => None,
        Some((v, _)) if v == "never" => None,
        Some((v, line)) => Some(parse_value(&v, line, "remove")?),
    };
    section.finish().map_err(ScriptError::Config)?;
    Ok(Actor::PastedRect {
        rect,
        intensity: parse_value(&intensity, il, "intensity")?,
        appear: parse_value(&appear, al, "appear")?,
        remove,
    })
}

fn fall_from_section(section: &mut RawSection) -> Result<Actor, ScriptError> {
    let (bar, bl) = section.take_required("bar")?;
    let (bar_w, bar_h) = parse_pair(&bar, bl, "bar: `w h`")?;
    let (center, cl) = section.take_required("center")?;
    let (cx, cy) = parse_pair(&center, cl, "center: `x y`")?;
    let (intensity, il) = section.take_required("intensity")?;
    let appear = match section.take("appear")? {
        Some((v, line)) => parse_value(&v, line, "appear")?,
        None => 0,
    };
    let (span, sl) = section.take_required("span")?;
    let (s0, s1) = parse_pair(&span, sl, "span: `start end`")?;
    section.finish().map_err(ScriptError::Config)?;
    Ok(Actor::FallActor {
        bar_w,
        bar_h,
        cx: cx as f64,
        cy: cy as f64,
        intensity: parse_value(&intensity, il, "intensity")?,
        appear,
        span: (s0, s1),
    })
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

/// Blob top-left position at frame `f`, linearly interpolated between
/// waypoints with rounding; `None` outside the waypoint span.
fn blob_position(waypoints: &[Waypoint], f: u32) -> Option<(u32, u32)> {
    let first = waypoints.first()?;
    let last = waypoints.last()?;
    if f < first.frame || f > last.frame {
        return None;
    }
    let seg = waypoints.windows(2).find(|p| f >= p[0].frame && f <= p[1].frame);
    let (a, b) = match seg {
        Some(pair) => (pair[0], pair[1]),
        None => (*first, *first),
    };
    if a.frame == b.frame {
        return Some((a.x, a.y));
    }
    let t = (f - a.frame) as f64 / (b.frame - a.frame) as f64;
    let x = a.x as f64 + t * (b.x as f64 - a.x as f64);
    let y = a.y as f64 + t * (b.y as f64 - a.y as f64);
    Some((x.round() as u32, y.round() as u32))
}

/// Bar rotation in degrees from vertical at frame `f`.
fn fall_angle(span: (u32, u32), f: u32) -> f64 {
    if f <= span.0 {
        0.0
    } else if f >= span.1 {
        90.0
    } else {
        90.0 * (f - span.0) as f64 / (span.1 - span.0) as f64
    }
}

fn draw_actor(actor: &Actor, f: u32, canvas: &mut GrayFrame) {
    match actor {
        Actor::MovingBlob { w, h, intensity, waypoints } => {
            if let Some((x, y)) = blob_position(waypoints, f) {
                raster::fill_rect(canvas, Rect::new(x, y, *w, *h), *intensity);
            }
        }
        Actor::PastedRect { rect, intensity, appear, remove } => {
            let visible = f >= *appear && remove.is_none_or(|r| f < r);
            if visible {
                raster::fill_rect(canvas, *rect, *intensity);
            }
        }
        Actor::FallActor { bar_w, bar_h, cx, cy, intensity, appear, span } => {
            if f >= *appear {
                let corners = raster::rotated_rect_corners(
                    *cx,
                    *cy,
                    *bar_w as f64,
                    *bar_h as f64,
                    fall_angle(*span, f),
                );
                raster::fill_convex_polygon(canvas, &corners, *intensity);
            }
        }
    }
}

fn render_frame(script: &ScenarioScript, f: u32, jitter: bool) -> GrayFrame {
    let mut canvas = GrayFrame::filled(script.width, script.height, script.background);
    canvas.timestamp_ms = f as u64 * script.period_ms;
    for actor in &script.actors {
        draw_actor(actor, f, &mut canvas);
    }
    if jitter && script.jitter > 0 {
        // One generator per frame keeps frames independent of render order.
        let mut rng = SplitMix64(script.seed ^ (f as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let amp = script.jitter as i32;
        for px in &mut canvas.pixels {
            let offset = (rng.next() % (2 * amp as u64 + 1)) as i32 - amp;
            *px = (*px as i32 + offset).clamp(0, 255) as u8;
        }
    }
    canvas
}

/// Deterministic rasterization of the whole scenario.
pub fn render(script: &ScenarioScript) -> Vec<GrayFrame> {
    (0..script.frames).map(|f| render_frame(script, f, true)).collect()
}

/// Rendered frames as color/gray pairs feeding the pipeline.
pub fn render_pairs(script: &ScenarioScript) -> Vec<FramePair> {
    render(script)
        .into_iter()
        .map(|gray| FramePair { color: gray.to_color(), gray })
        .collect()
}

/// In-memory frame stream over rendered pairs.
pub struct RenderedFrames {
    pairs: std::vec::IntoIter<FramePair>,
}

impl RenderedFrames {
    pub fn new(pairs: Vec<FramePair>) -> Self {
        RenderedFrames { pairs: pairs.into_iter() }
    }
}

impl FrameStream for RenderedFrames {
    fn next_pair(&mut self) -> Result<Option<FramePair>, SourceError> {
        Ok(self.pairs.next())
    }
}

/// One predicted event occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpectedEvent {
    pub kind: EventKind,
    pub roi_id: u32,
    pub frame: u32,
}

/// Analytic prediction for a scenario: events with their trigger frames and
/// the per-frame fall/stand ground truth for the fall actor (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedOutcome {
    pub events: Vec<ExpectedEvent>,
    pub labels: Vec<(u32, PatternLabel)>,
    /// Frame index where detection starts (calibration ends).
    pub first_detect_frame: u32,
}

impl ExpectedOutcome {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "first_detect\t{}", self.first_detect_frame);
        for e in &self.events {
            let _ = writeln!(out, "event\t{}\t{}\t{}", e.kind, e.roi_id, e.frame);
        }
        for (frame, label) in &self.labels {
            let _ = writeln!(out, "label\t{frame}\t{label}");
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self, String> {
        let mut outcome =
            ExpectedOutcome { events: Vec::new(), labels: Vec::new(), first_detect_frame: 0 };
        for line in text.lines() {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["first_detect", f] => {
                    outcome.first_detect_frame =
                        f.parse().map_err(|_| format!("bad frame in {line:?}"))?;
                }
                ["event", kind, roi, frame] => outcome.events.push(ExpectedEvent {
                    kind: kind.parse()?,
                    roi_id: roi.parse().map_err(|_| format!("bad roi in {line:?}"))?,
                    frame: frame.parse().map_err(|_| format!("bad frame in {line:?}"))?,
                }),
                ["label", frame, label] => outcome.labels.push((
                    frame.parse().map_err(|_| format!("bad frame in {line:?}"))?,
                    label.parse::<PatternLabel>()?,
                )),
                _ => return Err(format!("unrecognized oracle line {line:?}")),
            }
        }
        Ok(outcome)
    }
}

/// Predicts the engine's events by replaying the documented trigger rules
/// over actor geometry: threshold floors from a still calibration window,
/// refractory gating, and the bounding-box novelty filter. Fall labels flip
/// from stand to fall when the bar passes 45 degrees.
pub fn expected(scenario: &Scenario) -> Result<ExpectedOutcome, ScriptError> {
    let script = &scenario.script;
    let first_detect = match scenario.calibration {
        CalibrationMode::TenFrames => 10u32,
        CalibrationMode::OneMinute => (60_000u64).div_ceil(script.period_ms) as u32,
    };
    if first_detect >= script.frames {
        return Err(ScriptError::OracleUnsupported(format!(
            "calibration consumes all {} frames",
            script.frames
        )));
    }

    // The oracle assumes a still calibration window: every threshold is its
    // floor. Anything moving (or appearing) during calibration would change
    // the thresholds in ways only the model can know.
    let base = render_frame(script, 0, false);
    for f in 1..first_detect {
        if render_frame(script, f, false).pixels != base.pixels {
            return Err(ScriptError::OracleUnsupported(format!(
                "scene changes at frame {f}, inside the calibration window"
            )));
        }
    }

    let photo_rois: Vec<&RoiRegion> = scenario
        .rois
        .iter()
        .filter(|r| r.kind == EventKind::PhotoLink)
        .collect();
    for actor in &script.actors {
        match actor {
            Actor::PastedRect { rect, intensity, .. } => {
                for roi in &photo_rois {
                    let overlaps = roi.rect.intersection(rect).is_some();
                    let inside = roi.rect.intersection(rect) == Some(*rect)
                        && rect.x > roi.rect.x
                        && rect.y > roi.rect.y
                        && rect.right() < roi.rect.right()
                        && rect.bottom() < roi.rect.bottom();
                    if overlaps && !inside {
                        return Err(ScriptError::OracleUnsupported(
                            "pasted rect must sit strictly inside the photo region".to_string(),
                        ));
                    }
                    if overlaps && *intensity == script.background {
                        return Err(ScriptError::OracleUnsupported(
                            "pasted rect has no contrast".to_string(),
                        ));
                    }
                }
            }
            Actor::MovingBlob { .. } | Actor::FallActor { .. } => {}
        }
    }

    let refractory_frames = scenario.refractory_ms.div_ceil(script.period_ms.max(1)) as u32;
    let mut last_emit: [Option<u32>; 3] = [None; 3];
    let mut events = Vec::new();

    // Known-rectangle state for the novelty filter, on geometric boxes.
    let mut known: Vec<(Rect, u32)> = Vec::new();
    let expiry_frames = (scenario.novelty_expiry_ms / script.period_ms.max(1)) as u32;

    for f in first_detect..script.frames {
        let scene = render_frame(script, f, false);
        for roi in &scenario.rois {
            let ok_refractory = |last: Option<u32>| match last {
                Some(l) => f - l >= refractory_frames,
                None => true,
            };
            match roi.kind {
                EventKind::WatchDog | EventKind::DangerNotice => {
                    let mut area = 0u64;
                    for y in roi.rect.y..roi.rect.bottom() {
                        for x in roi.rect.x..roi.rect.right() {
                            if scene.get(x, y) != base.get(x, y) {
                                area += 1;
                            }
                        }
                    }
                    let threshold = THRESHOLD_FLOOR_FRACTION * roi.rect.area() as f64;
                    if area as f64 > threshold && ok_refractory(last_emit[kind_slot(roi.kind)]) {
                        events.push(ExpectedEvent { kind: roi.kind, roi_id: roi.id, frame: f });
                        last_emit[kind_slot(roi.kind)] = Some(f);
                    }
                }
                EventKind::PhotoLink => {
                    let mut detected: Vec<Rect> = Vec::new();
                    for actor in &script.actors {
                        if let Actor::PastedRect { rect, appear, remove, .. } = actor {
                            let visible = f >= *appear && remove.is_none_or(|r| f < r);
                            if visible && roi.rect.intersection(rect) == Some(*rect) {
                                detected.push(*rect);
                            }
                        }
                    }
                    known.retain(|(_, seen)| f - seen <= expiry_frames);
                    let prior: Vec<Rect> = known.iter().map(|(r, _)| *r).collect();
                    let mut new_count = 0u64;
                    for rect in detected {
                        let mut matched = false;
                        for (i, k) in prior.iter().enumerate() {
                            if k.iou(&rect) >= 0.5 {
                                known[i].1 = f;
                                matched = true;
                            }
                        }
                        if !matched {
                            new_count += 1;
                            known.push((rect, f));
                        }
                    }
                    if new_count > 0 && ok_refractory(last_emit[kind_slot(roi.kind)]) {
                        events.push(ExpectedEvent { kind: roi.kind, roi_id: roi.id, frame: f });
                        last_emit[kind_slot(roi.kind)] = Some(f);
                    }
                }
            }
        }
    }

    let mut labels = Vec::new();
    for actor in &script.actors {
        if let Actor::FallActor { appear, span, .. } = actor {
            for f in *appear..script.frames {
                let label = if fall_angle(*span, f) > 45.0 {
                    PatternLabel::Fall
                } else {
                    PatternLabel::Stand
                };
                labels.push((f, label));
            }
            break; // one fall actor's ground truth per scenario
        }
    }

    Ok(ExpectedOutcome { events, labels, first_detect_frame: first_detect })
}

fn kind_slot(kind: EventKind) -> usize {
    match kind {
        EventKind::WatchDog => 0,
        EventKind::DangerNotice => 1,
        EventKind::PhotoLink => 2,
    }
}

/// An actually observed event, reduced to its matching key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedEvent {
    pub kind: EventKind,
    pub roi_id: u32,
    pub frame: u32,
}

/// Checks that observed events match the prediction per (kind, roi): same
/// count, and each pair within `slack` frames. Returns a description of the
/// first mismatch.
pub fn match_events(
    expected: &[ExpectedEvent],
    observed: &[ObservedEvent],
    slack: u32,
) -> Result<(), String> {
    let mut keys: Vec<(EventKind, u32)> =
        expected.iter().map(|e| (e.kind, e.roi_id)).collect();
    keys.extend(observed.iter().map(|o| (o.kind, o.roi_id)));
    keys.sort();
    keys.dedup();
    for (kind, roi_id) in keys {
        let want: Vec<u32> = expected
            .iter()
            .filter(|e| e.kind == kind && e.roi_id == roi_id)
            .map(|e| e.frame)
            .collect();
        let got: Vec<u32> = observed
            .iter()
            .filter(|o| o.kind == kind && o.roi_id == roi_id)
            .map(|o| o.frame)
            .collect();
        if want.len() != got.len() {
            return Err(format!(
                "{kind} roi {roi_id}: expected {} events at {want:?}, observed {} at {got:?}",
                want.len(),
                got.len()
            ));
        }
        for (w, g) in want.iter().zip(&got) {
            let diff = w.abs_diff(*g);
            if diff > slack {
                return Err(format!(
                    "{kind} roi {roi_id}: event at frame {g} is {diff} frames from predicted {w}"
                ));
            }
        }
    }
    Ok(())
}
