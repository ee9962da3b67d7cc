//! Raster frame types, the binary netpbm (P5/P6) codec, and frame sources.
//!
//! Only binary graymaps and pixmaps with maxval 255 are supported; anything
//! else is converted before it reaches the pipeline. Decoding is strict and
//! every parse error names the byte offset it was detected at.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// 8-bit grayscale frame, row-major pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    /// Milliseconds since stream start.
    pub timestamp_ms: u64,
}

/// 8-bit RGB frame, row-major interleaved triplets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub timestamp_ms: u64,
}

impl GrayFrame {
    /// Panics if the pixel buffer does not match `width × height` or a
    /// dimension is zero; frames are never constructed with bad geometry.
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, timestamp_ms: u64) -> Self {
        assert!(width >= 1 && height >= 1, "frame dimensions must be >= 1");
        assert_eq!(
            pixels.len(),
            width as usize * height as usize,
            "pixel buffer length must equal width * height"
        );
        GrayFrame { width, height, pixels, timestamp_ms }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize], 0)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = value;
    }

    /// Replicates the gray channel into an RGB frame.
    pub fn to_color(&self) -> ColorFrame {
        let mut pixels = Vec::with_capacity(self.pixels.len() * 3);
        for &v in &self.pixels {
            pixels.extend_from_slice(&[v, v, v]);
        }
        ColorFrame {
            width: self.width,
            height: self.height,
            pixels,
            timestamp_ms: self.timestamp_ms,
        }
    }
}

impl ColorFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, timestamp_ms: u64) -> Self {
        assert!(width >= 1 && height >= 1, "frame dimensions must be >= 1");
        assert_eq!(
            pixels.len(),
            3 * width as usize * height as usize,
            "pixel buffer length must equal 3 * width * height"
        );
        ColorFrame { width, height, pixels, timestamp_ms }
    }

    #[inline]
    pub fn rgb(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        (self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }
}

/// A decoded netpbm frame of either kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Gray(GrayFrame),
    Color(ColorFrame),
}

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("bad magic at byte 0: expected \"P5\" or \"P6\"")]
    BadMagic,
    #[error("malformed header at byte {offset}: {what}")]
    Header { offset: usize, what: String },
    #[error("unsupported maxval {maxval} at byte {offset}: only 255 is supported")]
    Maxval { offset: usize, maxval: u64 },
    #[error("zero dimension at byte {offset}")]
    ZeroDimension { offset: usize },
    #[error("truncated pixel data at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated { offset: usize, expected: usize, found: usize },
}

/// Luma conversion, round half up: `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_gray(frame: &ColorFrame) -> GrayFrame {
    let mut pixels = Vec::with_capacity(frame.pixels.len() / 3);
    for px in frame.pixels.chunks_exact(3) {
        let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        pixels.push(y.round().clamp(0.0, 255.0) as u8);
    }
    GrayFrame {
        width: frame.width,
        height: frame.height,
        pixels,
        timestamp_ms: frame.timestamp_ms,
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    /// Skips whitespace runs and `#` comment lines between header tokens.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<u64, PnmError> {
        self.skip_separators();
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((self.bytes[self.pos] - b'0') as u64))
                .ok_or_else(|| PnmError::Header {
                    offset: start,
                    what: format!("{what} overflows"),
                })?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PnmError::Header {
                offset: start,
                what: format!("expected {what}"),
            });
        }
        Ok(value)
    }
}

/// Decodes a binary P5 graymap or P6 pixmap with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<Frame, PnmError> {
    if bytes.len() < 2 || bytes[0] != b'P' || (bytes[1] != b'5' && bytes[1] != b'6') {
        return Err(PnmError::BadMagic);
    }
    let color = bytes[1] == b'6';
    let mut cur = HeaderCursor { bytes, pos: 2 };

    let width_at = {
        cur.skip_separators();
        cur.pos
    };
    let width = cur.read_uint("width")?;
    let height_at = {
        cur.skip_separators();
        cur.pos
    };
    let height = cur.read_uint("height")?;
    let maxval_at = {
        cur.skip_separators();
        cur.pos
    };
    let maxval = cur.read_uint("maxval")?;
    if width == 0 {
        return Err(PnmError::ZeroDimension { offset: width_at });
    }
    if height == 0 {
        return Err(PnmError::ZeroDimension { offset: height_at });
    }
    if width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(PnmError::Header {
            offset: width_at,
            what: "dimension too large".to_string(),
        });
    }
    if maxval != 255 {
        return Err(PnmError::Maxval { offset: maxval_at, maxval });
    }

    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(PnmError::Header {
            offset: cur.pos,
            what: "expected single whitespace before pixel data".to_string(),
        });
    }
    let data_start = cur.pos + 1;

    let channels = if color { 3 } else { 1 };
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| PnmError::Header {
            offset: width_at,
            what: "pixel count overflows".to_string(),
        })?;
    let found = bytes.len() - data_start;
    if found < expected {
        return Err(PnmError::Truncated {
            offset: data_start + found,
            expected,
            found,
        });
    }
    let pixels = bytes[data_start..data_start + expected].to_vec();
    Ok(if color {
        Frame::Color(ColorFrame::new(width as u32, height as u32, pixels, 0))
    } else {
        Frame::Gray(GrayFrame::new(width as u32, height as u32, pixels, 0))
    })
}

pub fn encode_gray(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn encode_color(frame: &ColorFrame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn encode_pnm(frame: &Frame) -> Vec<u8> {
    match frame {
        Frame::Gray(g) => encode_gray(g),
        Frame::Color(c) => encode_color(c),
    }
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: PnmError,
    },
}

/// A color/gray pair for one stream position. Gray is derived from color
/// sources; color is replicated from gray sources, so both views always
/// exist for recording and detection.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub color: ColorFrame,
    pub gray: GrayFrame,
}

impl FramePair {
    pub fn from_frame(frame: Frame, timestamp_ms: u64) -> FramePair {
        match frame {
            Frame::Color(mut c) => {
                c.timestamp_ms = timestamp_ms;
                let gray = to_gray(&c);
                FramePair { color: c, gray }
            }
            Frame::Gray(mut g) => {
                g.timestamp_ms = timestamp_ms;
                let color = g.to_color();
                FramePair { color, gray: g }
            }
        }
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.gray.timestamp_ms
    }
}

/// Anything that yields frame pairs in strictly increasing timestamp order.
pub trait FrameStream {
    fn next_pair(&mut self) -> Result<Option<FramePair>, SourceError>;
}

/// Frame source over the `.pgm`/`.ppm` files of a directory, lexicographically
/// sorted by file name. Timestamps are synthesized as `index × period_ms`.
pub struct DirectorySource {
    files: Vec<PathBuf>,
    period_ms: u64,
    next: usize,
    warnings: Vec<String>,
}

impl DirectorySource {
    pub fn open(dir: &Path, period_ms: u64) -> Result<Self, SourceError> {
        let entries = fs::read_dir(dir).map_err(|source| SourceError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| SourceError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
            let path = entry.path();
            match path.extension().and_then(|e| e.to_str()) {
                Some("pgm") | Some("ppm") => files.push(path),
                _ => {}
            }
        }
        files.sort();
        let mut source = DirectorySource { files, period_ms, next: 0, warnings: Vec::new() };
        source.scan_for_gaps();
        Ok(source)
    }

    /// Numbered file names with missing indices get a warning; the stream
    /// still plays every file it found.
    fn scan_for_gaps(&mut self) {
        let numbers: Vec<u64> = self
            .files
            .iter()
            .filter_map(|p| p.file_stem()?.to_str()?.parse().ok())
            .collect();
        if numbers.len() != self.files.len() {
            return;
        }
        for pair in numbers.windows(2) {
            if pair[1] > pair[0] + 1 {
                self.warnings
                    .push(format!("sequence gap: frame {} follows {}", pair[1], pair[0]));
            }
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

impl FrameStream for DirectorySource {
    fn next_pair(&mut self) -> Result<Option<FramePair>, SourceError> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        let bytes = fs::read(path).map_err(|source| SourceError::Io {
            path: path.clone(),
            source,
        })?;
        let frame = decode_pnm(&bytes).map_err(|source| SourceError::Decode {
            path: path.clone(),
            source,
        })?;
        let timestamp = self.next as u64 * self.period_ms;
        self.next += 1;
        Ok(Some(FramePair::from_frame(frame, timestamp)))
    }
}

impl fmt::Debug for DirectorySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirectorySource")
            .field("files", &self.files.len())
            .field("period_ms", &self.period_ms)
            .field("next", &self.next)
            .finish()
    }
}
