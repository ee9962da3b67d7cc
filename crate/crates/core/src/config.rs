//! Sectioned key-value configuration, shared by the pipeline config file and
//! scenario scripts.
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Sections may repeat where that is meaningful (`[roi]`, actor sections).
//! Validation is strict: unknown sections, unknown keys and duplicate
//! scalar keys are errors that name the offending line.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::background::{BackgroundParams, RhoMode};
use crate::engine::{CalibrationMode, EventKind, RoiRegion};
use crate::geom::Rect;
use crate::notifier::NotificationPolicy;
use crate::shape::ShapeParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {what}")]
    Syntax { line: usize, what: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key {key:?} in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required section [{0}]")]
    MissingSection(String),
    #[error("section [{section}] is missing key {key:?}")]
    MissingKey { section: String, key: String },
    #[error("line {line}: {what}")]
    BadValue { line: usize, what: String },
    #[error("{0}")]
    Invalid(String),
}

/// One parsed `[section]` with its entries in file order.
#[derive(Debug)]
pub struct RawSection {
    pub name: String,
    pub line: usize,
    entries: Vec<(String, String, usize)>,
    consumed: Vec<bool>,
}

impl RawSection {
    /// Takes a scalar key; duplicate occurrences are an error.
    pub fn take(&mut self, key: &str) -> Result<Option<(String, usize)>, ConfigError> {
        let mut found: Option<(String, usize)> = None;
        for (i, (k, v, line)) in self.entries.iter().enumerate() {
            if k == key {
                if found.is_some() {
                    return Err(ConfigError::DuplicateKey { line: *line, key: key.to_string() });
                }
                found = Some((v.clone(), *line));
                self.consumed[i] = true;
            }
        }
        Ok(found)
    }

    pub fn take_required(&mut self, key: &str) -> Result<(String, usize), ConfigError> {
        self.take(key)?.ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    /// Takes every occurrence of a repeatable key, in file order.
    pub fn take_repeated(&mut self, key: &str) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (i, (k, v, line)) in self.entries.iter().enumerate() {
            if k == key {
                out.push((v.clone(), *line));
                self.consumed[i] = true;
            }
        }
        out
    }

    /// Errors on the first entry nothing consumed.
    pub fn finish(&self) -> Result<(), ConfigError> {
        for (i, (k, _, line)) in self.entries.iter().enumerate() {
            if !self.consumed[i] {
                return Err(ConfigError::UnknownKey {
                    line: *line,
                    section: self.name.clone(),
                    key: k.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Splits a config text into raw sections.
pub fn parse_sections(text: &str) -> Result<Vec<RawSection>, ConfigError> {
    let mut sections: Vec<RawSection> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                what: "unterminated section header".to_string(),
            })?;
            sections.push(RawSection {
                name: name.trim().to_string(),
                line: line_no,
                entries: Vec::new(),
                consumed: Vec::new(),
            });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            what: format!("expected `key = value`, got {line:?}"),
        })?;
        let section = sections.last_mut().ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            what: "entry before any [section]".to_string(),
        })?;
        section
            .entries
            .push((key.trim().to_string(), value.trim().to_string(), line_no));
        section.consumed.push(false);
    }
    Ok(sections)
}

pub fn parse_value<T: FromStr>(value: &str, line: usize, what: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        what: format!("cannot parse {value:?} as {what}"),
    })
}

/// Parses `x y w h`.
fn parse_rect(value: &str, line: usize) -> Result<Rect, ConfigError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(ConfigError::BadValue {
            line,
            what: format!("expected `x y w h`, got {value:?}"),
        });
    }
    Ok(Rect::new(
        parse_value(parts[0], line, "x")?,
        parse_value(parts[1], line, "y")?,
        parse_value(parts[2], line, "w")?,
        parse_value(parts[3], line, "h")?,
    ))
}

fn kind_token(kind: EventKind) -> &'static str {
    match kind {
        EventKind::WatchDog => "watchdog",
        EventKind::DangerNotice => "danger",
        EventKind::PhotoLink => "photo",
    }
}

fn parse_kind(value: &str, line: usize) -> Result<EventKind, ConfigError> {
    match value {
        "watchdog" => Ok(EventKind::WatchDog),
        "danger" => Ok(EventKind::DangerNotice),
        "photo" => Ok(EventKind::PhotoLink),
        other => Err(ConfigError::BadValue {
            line,
            what: format!("kind must be watchdog | danger | photo, got {other:?}"),
        }),
    }
}

pub(crate) fn roi_from_section(section: &mut RawSection) -> Result<RoiRegion, ConfigError> {
    let (id, id_line) = section.take_required("id")?;
    let (kind, kind_line) = section.take_required("kind")?;
    let (rect, rect_line) = section.take_required("rect")?;
    let roi = RoiRegion {
        id: parse_value(&id, id_line, "id")?,
        kind: parse_kind(&kind, kind_line)?,
        rect: parse_rect(&rect, rect_line)?,
    };
    section.finish()?;
    Ok(roi)
}

pub(crate) fn background_from_section(
    section: &mut RawSection,
) -> Result<BackgroundParams, ConfigError> {
    let mut params = BackgroundParams::default();
    if let Some((v, line)) = section.take("components")? {
        params.components = parse_value(&v, line, "components")?;
    }
    if let Some((v, line)) = section.take("learning_rate")? {
        params.learning_rate = parse_value(&v, line, "learning_rate")?;
    }
    if let Some((v, line)) = section.take("background_portion")? {
        params.background_portion = parse_value(&v, line, "background_portion")?;
    }
    if let Some((v, line)) = section.take("match_sigma")? {
        params.match_sigma = parse_value(&v, line, "match_sigma")?;
    }
    if let Some((v, line)) = section.take("initial_variance")? {
        params.initial_variance = parse_value(&v, line, "initial_variance")?;
    }
    if let Some((v, line)) = section.take("new_component_weight")? {
        params.new_component_weight = parse_value(&v, line, "new_component_weight")?;
    }
    if let Some((v, line)) = section.take("variance_floor")? {
        params.variance_floor = parse_value(&v, line, "variance_floor")?;
    }
    if let Some((v, line)) = section.take("rho")? {
        params.rho_mode = match v.as_str() {
            "gaussian" => RhoMode::Gaussian,
            "simple" => RhoMode::Simple,
            other => {
                return Err(ConfigError::BadValue {
                    line,
                    what: format!("rho must be gaussian | simple, got {other:?}"),
                })
            }
        };
    }
    section.finish()?;
    Ok(params)
}

pub(crate) fn shape_from_section(section: &mut RawSection) -> Result<ShapeParams, ConfigError> {
    let mut params = ShapeParams::default();
    if let Some((v, line)) = section.take("min_area_fraction")? {
        params.min_area_fraction = parse_value(&v, line, "min_area_fraction")?;
    }
    if let Some((v, line)) = section.take("epsilon_fraction")? {
        params.dp_epsilon_fraction = parse_value(&v, line, "epsilon_fraction")?;
    }
    if let Some((v, line)) = section.take("angle_tolerance")? {
        params.angle_tolerance_deg = parse_value(&v, line, "angle_tolerance")?;
    }
    if let Some((v, line)) = section.take("fill_ratio_min")? {
        params.fill_ratio_min = parse_value(&v, line, "fill_ratio_min")?;
    }
    section.finish()?;
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EngineSettings {
    pub calibration: CalibrationMode,
    pub refractory_ms: u64,
    pub novelty_expiry_ms: u64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            calibration: CalibrationMode::TenFrames,
            refractory_ms: 2_000,
            novelty_expiry_ms: 600_000,
        }
    }
}

pub(crate) fn engine_from_section(
    section: &mut RawSection,
) -> Result<EngineSettings, ConfigError> {
    let mut settings = EngineSettings::default();
    if let Some((v, line)) = section.take("calibration")? {
        settings.calibration = match v.as_str() {
            "ten_frames" => CalibrationMode::TenFrames,
            "one_minute" => CalibrationMode::OneMinute,
            other => {
                return Err(ConfigError::BadValue {
                    line,
                    what: format!("calibration must be ten_frames | one_minute, got {other:?}"),
                })
            }
        };
    }
    if let Some((v, line)) = section.take("refractory_ms")? {
        settings.refractory_ms = parse_value(&v, line, "refractory_ms")?;
    }
    if let Some((v, line)) = section.take("novelty_expiry_ms")? {
        settings.novelty_expiry_ms = parse_value(&v, line, "novelty_expiry_ms")?;
    }
    section.finish()?;
    Ok(settings)
}

/// Notification settings; `url = none` (or an absent `[notify]` section)
/// disables the webhook while keeping voice alerts available.
#[derive(Debug, Clone, PartialEq)]
pub struct NotifyConfig {
    pub webhook_url: Option<String>,
    pub message: String,
    pub policy: NotificationPolicy,
    /// External command hook for voice alerts, whitespace-split.
    pub voice_command: Option<Vec<String>>,
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub source_dir: PathBuf,
    pub period_ms: u64,
    pub rois: Vec<RoiRegion>,
    pub background: BackgroundParams,
    pub shape: ShapeParams,
    pub calibration: CalibrationMode,
    pub refractory_ms: u64,
    pub novelty_expiry_ms: u64,
    pub notify: Option<NotifyConfig>,
    pub output_dir: PathBuf,
    pub debug_dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let mut source: Option<(PathBuf, u64)> = None;
        let mut rois = Vec::new();
        let mut background = BackgroundParams::default();
        let mut shape = ShapeParams::default();
        let mut engine = EngineSettings::default();
        let mut notify = None;
        let mut output: Option<(PathBuf, Option<PathBuf>)> = None;

        for mut section in sections {
            match section.name.as_str() {
                "source" => {
                    let (dir, _) = section.take_required("dir")?;
                    let (period, line) = section.take_required("period_ms")?;
                    section.finish()?;
                    source = Some((PathBuf::from(dir), parse_value(&period, line, "period_ms")?));
                }
                "roi" => rois.push(roi_from_section(&mut section)?),
                "background" => background = background_from_section(&mut section)?,
                "shape" => shape = shape_from_section(&mut section)?,
                "engine" => engine = engine_from_section(&mut section)?,
                "notify" => notify = Some(notify_from_section(&mut section)?),
                "output" => {
                    let (dir, _) = section.take_required("dir")?;
                    let debug = section.take("debug_dir")?.map(|(v, _)| PathBuf::from(v));
                    section.finish()?;
                    output = Some((PathBuf::from(dir), debug));
                }
                other => {
                    return Err(ConfigError::UnknownSection {
                        line: section.line,
                        name: other.to_string(),
                    })
                }
            }
        }

        let (source_dir, period_ms) =
            source.ok_or_else(|| ConfigError::MissingSection("source".to_string()))?;
        if rois.is_empty() {
            return Err(ConfigError::MissingSection("roi".to_string()));
        }
        let (output_dir, debug_dir) =
            output.ok_or_else(|| ConfigError::MissingSection("output".to_string()))?;
        if period_ms == 0 {
            return Err(ConfigError::Invalid("period_ms must be > 0".to_string()));
        }
        Ok(Config {
            source_dir,
            period_ms,
            rois,
            background,
            shape,
            calibration: engine.calibration,
            refractory_ms: engine.refractory_ms,
            novelty_expiry_ms: engine.novelty_expiry_ms,
            notify,
            output_dir,
            debug_dir,
        })
    }

    /// Canonical text form; `parse(save(c)) == c`.
    pub fn save(&self) -> String {
        let mut out = String::new();
        out.push_str("[source]\n");
        out.push_str(&format!("dir = {}\n", self.source_dir.display()));
        out.push_str(&format!("period_ms = {}\n", self.period_ms));
        for roi in &self.rois {
            out.push_str("\n[roi]\n");
            out.push_str(&format!("id = {}\n", roi.id));
            out.push_str(&format!("kind = {}\n", kind_token(roi.kind)));
            out.push_str(&format!(
                "rect = {} {} {} {}\n",
                roi.rect.x, roi.rect.y, roi.rect.w, roi.rect.h
            ));
        }
        let b = &self.background;
        out.push_str("\n[background]\n");
        out.push_str(&format!("components = {}\n", b.components));
        out.push_str(&format!("learning_rate = {}\n", b.learning_rate));
        out.push_str(&format!("background_portion = {}\n", b.background_portion));
        out.push_str(&format!("match_sigma = {}\n", b.match_sigma));
        out.push_str(&format!("initial_variance = {}\n", b.initial_variance));
        out.push_str(&format!("new_component_weight = {}\n", b.new_component_weight));
        out.push_str(&format!("variance_floor = {}\n", b.variance_floor));
        out.push_str(&format!(
            "rho = {}\n",
            match b.rho_mode {
                RhoMode::Gaussian => "gaussian",
                RhoMode::Simple => "simple",
            }
        ));
        let s = &self.shape;
        out.push_str("\n[shape]\n");
        out.push_str(&format!("min_area_fraction = {}\n", s.min_area_fraction));
        out.push_str(&format!("epsilon_fraction = {}\n", s.dp_epsilon_fraction));
        out.push_str(&format!("angle_tolerance = {}\n", s.angle_tolerance_deg));
        out.push_str(&format!("fill_ratio_min = {}\n", s.fill_ratio_min));
        out.push_str("\n[engine]\n");
        out.push_str(&format!(
            "calibration = {}\n",
            match self.calibration {
                CalibrationMode::TenFrames => "ten_frames",
                CalibrationMode::OneMinute => "one_minute",
            }
        ));
        out.push_str(&format!("refractory_ms = {}\n", self.refractory_ms));
        out.push_str(&format!("novelty_expiry_ms = {}\n", self.novelty_expiry_ms));
        if let Some(notify) = &self.notify {
            out.push_str("\n[notify]\n");
            match &notify.webhook_url {
                Some(url) => out.push_str(&format!("url = {url}\n")),
                None => out.push_str("url = none\n"),
            }
            out.push_str(&format!("message = {}\n", notify.message));
            let p = &notify.policy;
            out.push_str(&format!("deadline_s = {}\n", p.deadline_ms / 1000));
            out.push_str(&format!("social_window_s = {}\n", p.social_window_ms / 1000));
            out.push_str(&format!("voice_window_s = {}\n", p.voice_window_ms / 1000));
            out.push_str(&format!("max_retries = {}\n", p.max_retries));
            let backoff: Vec<String> =
                p.backoff_ms.iter().map(|ms| (ms / 1000).to_string()).collect();
            out.push_str(&format!("backoff_s = {}\n", backoff.join(" ")));
            if let Some(cmd) = &notify.voice_command {
                out.push_str(&format!("voice_command = {}\n", cmd.join(" ")));
            }
        }
        out.push_str("\n[output]\n");
        out.push_str(&format!("dir = {}\n", self.output_dir.display()));
        if let Some(debug) = &self.debug_dir {
            out.push_str(&format!("debug_dir = {}\n", debug.display()));
        }
        out
    }
}

fn notify_from_section(section: &mut RawSection) -> Result<NotifyConfig, ConfigError> {
    let webhook_url = match section.take("url")? {
        Some((v, _)) if v == "none" => None,
        Some((v, _)) => Some(v),
        None => None,
    };
    let (message, msg_line) = section.take_required("message")?;
    if message.is_empty() {
        return Err(ConfigError::BadValue {
            line: msg_line,
            what: "message must be non-empty".to_string(),
        });
    }
    let mut policy = NotificationPolicy::default();
    if let Some((v, line)) = section.take("deadline_s")? {
        policy.deadline_ms = parse_value::<u64>(&v, line, "deadline_s")? * 1000;
    }
    if let Some((v, line)) = section.take("social_window_s")? {
        policy.social_window_ms = parse_value::<u64>(&v, line, "social_window_s")? * 1000;
    }
    if let Some((v, line)) = section.take("voice_window_s")? {
        policy.voice_window_ms = parse_value::<u64>(&v, line, "voice_window_s")? * 1000;
    }
    if let Some((v, line)) = section.take("max_retries")? {
        policy.max_retries = parse_value(&v, line, "max_retries")?;
    }
    if let Some((v, line)) = section.take("backoff_s")? {
        let mut backoff = Vec::new();
        for part in v.split_whitespace() {
            backoff.push(parse_value::<u64>(part, line, "backoff_s")? * 1000);
        }
        if backoff.is_empty() {
            return Err(ConfigError::BadValue {
                line,
                what: "backoff_s must list at least one delay".to_string(),
            });
        }
        policy.backoff_ms = backoff;
    }
    let voice_command = section.take("voice_command")?.map(|(v, _)| {
        v.split_whitespace().map(str::to_string).collect::<Vec<_>>()
    });
    section.finish()?;
    Ok(NotifyConfig { webhook_url, message, policy, voice_command })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# monitoring setup
[source]
dir = frames
period_ms = 100

[roi]
id = 1
kind = watchdog
rect = 8 8 100 100

[roi]
id = 2
kind = danger
rect = 120 8 100 100

[roi]
id = 3
kind = photo
rect = 8 120 150 80

[engine]
calibration = one_minute
refractory_ms = 1500

[notify]
url = http://127.0.0.1:9/hook
message = new photo pasted on the wall
social_window_s = 120

[output]
dir = out
";

    #[test]
    fn parses_a_full_config() {
        let config = Config::parse(SAMPLE).unwrap();
        assert_eq!(config.period_ms, 100);
        assert_eq!(config.rois.len(), 3);
        assert_eq!(config.rois[1].kind, EventKind::DangerNotice);
        assert_eq!(config.calibration, CalibrationMode::OneMinute);
        assert_eq!(config.refractory_ms, 1_500);
        assert_eq!(config.novelty_expiry_ms, 600_000);
        let notify = config.notify.as_ref().unwrap();
        assert_eq!(notify.policy.social_window_ms, 120_000);
        assert_eq!(notify.policy.voice_window_ms, 30_000);
        assert_eq!(notify.message, "new photo pasted on the wall");
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let config = Config::parse(SAMPLE).unwrap();
        let reparsed = Config::parse(&config.save()).unwrap();
        assert_eq!(reparsed, config);
        // And a second lap stays fixed.
        assert_eq!(reparsed.save(), Config::parse(&reparsed.save()).unwrap().save());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let bad = format!("{SAMPLE}\n[source2]\ndir = x\n");
        assert!(matches!(Config::parse(&bad), Err(ConfigError::UnknownSection { .. })));
        let bad = SAMPLE.replace("period_ms = 100", "period_ms = 100\nspeed = 9");
        assert!(matches!(Config::parse(&bad), Err(ConfigError::UnknownKey { .. })));
    }

    #[test]
    fn missing_sections_are_named() {
        let no_roi: String = SAMPLE
            .lines()
            .filter(|l| !l.starts_with("[roi]") && !l.starts_with("id") && !l.starts_with("kind") && !l.starts_with("rect"))
            .collect::<Vec<_>>()
            .join("\n");
        match Config::parse(&no_roi) {
            Err(ConfigError::MissingSection(s)) => assert_eq!(s, "roi"),
            other => panic!("expected missing roi, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_name_the_line() {
        match Config::parse("[source\ndir = x\n") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match Config::parse("dir = x\n") {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_scalar_key_is_an_error() {
        let bad = SAMPLE.replace("dir = frames", "dir = frames\ndir = other");
        assert!(matches!(Config::parse(&bad), Err(ConfigError::DuplicateKey { .. })));
    }
}
