//! Fall/stand classification over foreground silhouettes.
//!
//! Features per silhouette: 16-bin horizontal and vertical projection
//! histograms (normalized to sum 1), bounding-box aspect ratio, fill ratio,
//! and centroid height ratio — 35 components driving a linear SVM. An upright
//! body yields a tall narrow silhouette, a fall a wide flat one, which
//! separates cleanly in this space.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::background::ForegroundMask;
use crate::frame::{decode_pnm, to_gray, Frame, GrayFrame};
use crate::geom::Rect;
use crate::svm::{self, SvmError, SvmModel, TrainOptions, TrainReport};

pub const PROJECTION_BINS: usize = 16;
pub const FEATURE_DIM: usize = 2 * PROJECTION_BINS + 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternLabel {
    Fall,
    Stand,
}

impl fmt::Display for PatternLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternLabel::Fall => "fall",
            PatternLabel::Stand => "stand",
        })
    }
}

impl FromStr for PatternLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fall" => Ok(PatternLabel::Fall),
            "stand" => Ok(PatternLabel::Stand),
            other => Err(format!("unknown pattern label {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum FallError {
    #[error("region {rect:?} exceeds {width}x{height} mask bounds")]
    RoiOutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {what}")]
    Dataset { path: PathBuf, line: usize, what: String },
    #[error("dataset holds no usable samples")]
    EmptyDataset,
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// 35-component silhouette descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_DIM],
}

impl FeatureVector {
    /// Column-projection histogram (distribution over x).
    pub fn horizontal_hist(&self) -> &[f64] {
        &self.values[..PROJECTION_BINS]
    }

    /// Row-projection histogram (distribution over y).
    pub fn vertical_hist(&self) -> &[f64] {
        &self.values[PROJECTION_BINS..2 * PROJECTION_BINS]
    }

    /// Bounding-box height over width.
    pub fn aspect_ratio(&self) -> f64 {
        self.values[2 * PROJECTION_BINS]
    }

    /// Silhouette area over bounding-box area.
    pub fn fill_ratio(&self) -> f64 {
        self.values[2 * PROJECTION_BINS + 1]
    }

    /// Centroid y over region height (0 = top, 1 = bottom).
    pub fn centroid_height(&self) -> f64 {
        self.values[2 * PROJECTION_BINS + 2]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Proportionally rebins `counts` into `bins` buckets using exact integer
/// overlap arithmetic, then normalizes to sum 1.
fn resample_normalized(counts: &[u64], bins: usize) -> Vec<f64> {
    let n = counts.len() as u64;
    let bins_u = bins as u64;
    let mut out = vec![0.0; bins];
    // Column i covers [i*bins, (i+1)*bins) on a grid of n*bins cells; bin b
    // covers [b*n, (b+1)*n). Overlaps are exact integers.
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let lo = i as u64 * bins_u;
        let hi = lo + bins_u;
        let mut b = (lo / n) as usize;
        loop {
            let bin_lo = b as u64 * n;
            let bin_hi = bin_lo + n;
            let overlap = hi.min(bin_hi) - lo.max(bin_lo);
            out[b] += (c * overlap) as f64;
            if bin_hi >= hi {
                break;
            }
            b += 1;
        }
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        for v in &mut out {
            *v /= total;
        }
    }
    out
}

/// Extracts the silhouette descriptor from the set pixels inside the region.
/// An empty silhouette is a value (`None`), not an error.
pub fn extract_features(
    mask: &ForegroundMask,
    roi: Rect,
) -> Result<Option<FeatureVector>, FallError> {
    if !roi.fits_within(mask.width, mask.height) {
        return Err(FallError::RoiOutOfBounds {
            rect: roi,
            width: mask.width,
            height: mask.height,
        });
    }
    let mut col_counts = vec![0u64; roi.w as usize];
    let mut row_counts = vec![0u64; roi.h as usize];
    let mut area = 0u64;
    let mut sum_y = 0u64;
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (u32::MAX, 0u32, u32::MAX, 0u32);
    for y in 0..roi.h {
        for x in 0..roi.w {
            if mask.get(roi.x + x, roi.y + y) {
                col_counts[x as usize] += 1;
                row_counts[y as usize] += 1;
                area += 1;
                sum_y += y as u64;
                min_x = min_x.min(x);
                max_x = max_x.max(x);
                min_y = min_y.min(y);
                max_y = max_y.max(y);
            }
        }
    }
    if area == 0 {
        return Ok(None);
    }
    let h_hist = resample_normalized(&col_counts, PROJECTION_BINS);
    let v_hist = resample_normalized(&row_counts, PROJECTION_BINS);
    let bbox_w = (max_x - min_x + 1) as f64;
    let bbox_h = (max_y - min_y + 1) as f64;
    let mut values = [0.0; FEATURE_DIM];
    values[..PROJECTION_BINS].copy_from_slice(&h_hist);
    values[PROJECTION_BINS..2 * PROJECTION_BINS].copy_from_slice(&v_hist);
    values[2 * PROJECTION_BINS] = bbox_h / bbox_w;
    values[2 * PROJECTION_BINS + 1] = area as f64 / (bbox_w * bbox_h);
    values[2 * PROJECTION_BINS + 2] = (sum_y as f64 / area as f64 + 0.5) / roi.h as f64;
    Ok(Some(FeatureVector { values }))
}

fn label_sign(label: PatternLabel) -> f64 {
    match label {
        PatternLabel::Fall => 1.0,
        PatternLabel::Stand => -1.0,
    }
}

/// Trains the fall/stand model; fall is the positive class.
pub fn train(
    samples: &[(FeatureVector, PatternLabel)],
    opts: &TrainOptions,
) -> Result<(SvmModel, TrainReport), FallError> {
    let features: Vec<Vec<f64>> = samples.iter().map(|(f, _)| f.as_slice().to_vec()).collect();
    let labels: Vec<f64> = samples.iter().map(|(_, l)| label_sign(*l)).collect();
    Ok(svm::train(&features, &labels, opts)?)
}

/// Classifies one descriptor. Positive score means fall; a zero score ties
/// to stand.
pub fn predict(
    model: &SvmModel,
    features: &FeatureVector,
) -> Result<(PatternLabel, f64), FallError> {
    let score = svm::decision(model, features.as_slice())?;
    let label = if score > 0.0 { PatternLabel::Fall } else { PatternLabel::Stand };
    Ok((label, score))
}

/// Confusion counts with fall as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalReport {
    pub true_fall: u64,
    pub missed_fall: u64,
    pub false_fall: u64,
    pub true_stand: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Fraction of actual falls predicted as fall.
    pub fn fall_prediction_rate(&self) -> f64 {
        ratio(self.true_fall, self.true_fall + self.missed_fall)
    }

    /// Fraction of actual stands predicted as stand.
    pub fn stand_prediction_rate(&self) -> f64 {
        ratio(self.true_stand, self.true_stand + self.false_fall)
    }

    /// Among samples predicted fall, the fraction that were stands.
    pub fn fall_error_rate(&self) -> f64 {
        ratio(self.false_fall, self.true_fall + self.false_fall)
    }

    /// Among samples predicted stand, the fraction that were falls.
    pub fn stand_error_rate(&self) -> f64 {
        ratio(self.missed_fall, self.true_stand + self.missed_fall)
    }

    /// Four-row percentage table: prediction rates then error rates.
    pub fn render_table(&self) -> String {
        format!(
            "average prediction of fall pattern\t{:.2}%\n\
             average prediction of stand pattern\t{:.2}%\n\
             average error rate of fall pattern\t{:.2}%\n\
             average error rate of stand pattern\t{:.2}%\n",
            100.0 * self.fall_prediction_rate(),
            100.0 * self.stand_prediction_rate(),
            100.0 * self.fall_error_rate(),
            100.0 * self.stand_error_rate(),
        )
    }

    pub fn render_tsv(&self) -> String {
        format!(
            "fall_prediction\t{}\nstand_prediction\t{}\nfall_error\t{}\nstand_error\t{}\n",
            self.fall_prediction_rate(),
            self.stand_prediction_rate(),
            self.fall_error_rate(),
            self.stand_error_rate(),
        )
    }
}

/// Scores labeled samples into a confusion report.
pub fn evaluate(
    model: &SvmModel,
    samples: &[(FeatureVector, PatternLabel)],
) -> Result<EvalReport, FallError> {
    if samples.is_empty() {
        return Err(FallError::EmptyDataset);
    }
    let mut report = EvalReport::default();
    for (features, actual) in samples {
        let (predicted, _) = predict(model, features)?;
        match (actual, predicted) {
            (PatternLabel::Fall, PatternLabel::Fall) => report.true_fall += 1,
            (PatternLabel::Fall, PatternLabel::Stand) => report.missed_fall += 1,
            (PatternLabel::Stand, PatternLabel::Fall) => report.false_fall += 1,
            (PatternLabel::Stand, PatternLabel::Stand) => report.true_stand += 1,
        }
    }
    Ok(report)
}

/// Where each frame of a day's sequence was routed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DayRouting {
    pub fall: Vec<String>,
    pub stand: Vec<String>,
    pub skip: Vec<String>,
}

/// Classifies a mask sequence frame by frame and writes `fall.list`,
/// `stand.list` and `skip.list` under `out_dir`. Empty silhouettes are
/// skipped, not classified.
pub fn classify_day<I>(
    model: &SvmModel,
    masks: I,
    roi: Rect,
    out_dir: &Path,
) -> Result<DayRouting, FallError>
where
    I: IntoIterator<Item = (String, ForegroundMask)>,
{
    let mut routing = DayRouting::default();
    for (name, mask) in masks {
        match extract_features(&mask, roi)? {
            None => routing.skip.push(name),
            Some(features) => match predict(model, &features)?.0 {
                PatternLabel::Fall => routing.fall.push(name),
                PatternLabel::Stand => routing.stand.push(name),
            },
        }
    }
    fs::create_dir_all(out_dir)
        .map_err(|source| FallError::Io { path: out_dir.to_path_buf(), source })?;
    for (file, names) in [
        ("fall.list", &routing.fall),
        ("stand.list", &routing.stand),
        ("skip.list", &routing.skip),
    ] {
        let path = out_dir.join(file);
        let mut text = names.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(&path, text).map_err(|source| FallError::Io { path, source })?;
    }
    Ok(routing)
}

/// Interprets a grayscale image as a silhouette mask: nonzero = set.
pub fn mask_from_gray(frame: &GrayFrame) -> ForegroundMask {
    let mut mask = ForegroundMask::new(frame.width, frame.height);
    for y in 0..frame.height {
        for x in 0..frame.width {
            if frame.get(x, y) != 0 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// A labeled feature set loaded from disk.
#[derive(Debug)]
pub struct Dataset {
    pub samples: Vec<(FeatureVector, PatternLabel)>,
    /// Mask files whose silhouette was empty.
    pub skipped_empty: usize,
}

/// Loads a dataset file: one `label<TAB>mask_file` line per sample, mask
/// paths relative to the dataset file, masks as netpbm images with nonzero
/// silhouette pixels. Features are extracted over the full mask extent.
pub fn load_dataset(path: &Path) -> Result<Dataset, FallError> {
    let text = fs::read_to_string(path)
        .map_err(|source| FallError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    let mut skipped_empty = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |what: String| FallError::Dataset {
            path: path.to_path_buf(),
            line: idx + 1,
            what,
        };
        let (label_str, file) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `label<TAB>mask_file`".to_string()))?;
        let label: PatternLabel = label_str.parse().map_err(err)?;
        let mask_path = base.join(file);
        let bytes = fs::read(&mask_path)
            .map_err(|source| FallError::Io { path: mask_path.clone(), source })?;
        let gray = match decode_pnm(&bytes).map_err(|e| err(e.to_string()))? {
            Frame::Gray(g) => g,
            Frame::Color(c) => to_gray(&c),
        };
        let mask = mask_from_gray(&gray);
        let roi = Rect::new(0, 0, mask.width, mask.height);
        match extract_features(&mask, roi)? {
            Some(features) => samples.push((features, label)),
            None => skipped_empty += 1,
        }
    }
    if samples.is_empty() {
        return Err(FallError::EmptyDataset);
    }
    Ok(Dataset { samples, skipped_empty })
}
