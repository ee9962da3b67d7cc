//! Rectangle-shaped object detection inside a region of interest.
//!
//! The pipeline binarizes the region with Otsu's threshold (minority class
//! as foreground), labels 8-connected components, traces each component's
//! outer contour, simplifies the closed contour with Douglas-Peucker, and
//! accepts quadrilaterals whose angles are near 90 degrees and whose filled
//! area covers most of their minimal enclosing rectangle.

use thiserror::Error;

use crate::frame::GrayFrame;
use crate::geom::{Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    /// Components smaller than this fraction of the region are ignored.
    pub min_area_fraction: f64,
    /// Douglas-Peucker epsilon as a fraction of the contour length.
    pub dp_epsilon_fraction: f64,
    /// Allowed deviation of interior angles from 90 degrees.
    pub angle_tolerance_deg: f64,
    /// Minimum blob area over minimal enclosing rectangle area.
    pub fill_ratio_min: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            min_area_fraction: 0.01,
            dp_epsilon_fraction: 0.02,
            angle_tolerance_deg: 15.0,
            fill_ratio_min: 0.8,
        }
    }
}

impl ShapeParams {
    pub fn validate(&self) -> Result<(), ShapeError> {
        let positive = self.min_area_fraction > 0.0
            && self.dp_epsilon_fraction > 0.0
            && self.angle_tolerance_deg > 0.0
            && self.fill_ratio_min > 0.0;
        if !positive {
            return Err(ShapeError::BadParams("all shape parameters must be > 0".into()));
        }
        if self.angle_tolerance_deg >= 45.0 {
            return Err(ShapeError::BadParams("angle_tolerance_deg must be < 45".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("region {rect:?} exceeds {width}x{height} frame bounds")]
    RoiOutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("invalid shape parameters: {0}")]
    BadParams(String),
}

/// Binary image in region-local coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryImage { width, height, bits: vec![false; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// One labeled 8-connected component.
#[derive(Debug, Clone)]
pub struct Blob {
    pub label: u32,
    pub area: u64,
    pub bbox: Rect,
    /// Closed outer boundary in region-local coordinates, traced from the
    /// top-left-most pixel.
    pub contour: Vec<Point>,
}

/// Convex quadrilateral in frame coordinates. Corners run counter-clockwise
/// (mathematical orientation, y up) starting from the top-left-most corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrilateral {
    pub corners: [Point; 4],
}

impl Quadrilateral {
    /// Axis-aligned pixel bounding box.
    pub fn aabb(&self) -> Rect {
        let min_x = self.corners.iter().map(|p| p.x).min().unwrap();
        let max_x = self.corners.iter().map(|p| p.x).max().unwrap();
        let min_y = self.corners.iter().map(|p| p.y).min().unwrap();
        let max_y = self.corners.iter().map(|p| p.y).max().unwrap();
        Rect::new(
            min_x.max(0) as u32,
            min_y.max(0) as u32,
            (max_x - min_x + 1) as u32,
            (max_y - min_y + 1) as u32,
        )
    }
}

/// Otsu threshold over a 256-bin histogram: the split maximizing between-class
/// variance, smallest threshold on ties. `None` when only one bin is occupied.
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let occupied = hist.iter().filter(|&&h| h > 0).count();
    if total == 0 || occupied < 2 {
        return None;
    }
    let sum_total: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let total = total as f64;
    let mut w_b = 0.0;
    let mut sum_b = 0.0;
    let mut best_var = -1.0;
    let mut best_t = 0u8;
    for (t, &count) in hist.iter().enumerate() {
        w_b += count as f64;
        if w_b == 0.0 {
            continue;
        }
        let w_f = total - w_b;
        if w_f == 0.0 {
            break;
        }
        sum_b += t as f64 * count as f64;
        let m_b = sum_b / w_b;
        let m_f = (sum_total - sum_b) / w_f;
        let var = w_b * w_f * (m_b - m_f) * (m_b - m_f);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    Some(best_t)
}

/// Otsu-binarizes the region; the minority intensity class becomes
/// foreground, ties broken toward the dark class. A uniform region yields an
/// all-clear image.
pub fn binarize(frame: &GrayFrame, roi: Rect) -> Result<BinaryImage, ShapeError> {
    if !roi.fits_within(frame.width, frame.height) {
        return Err(ShapeError::RoiOutOfBounds {
            rect: roi,
            width: frame.width,
            height: frame.height,
        });
    }
    let mut hist = [0u64; 256];
    for y in roi.y..roi.bottom() {
        for x in roi.x..roi.right() {
            hist[frame.get(x, y) as usize] += 1;
        }
    }
    let mut out = BinaryImage::new(roi.w, roi.h);
    let Some(t) = otsu_threshold(&hist) else {
        return Ok(out);
    };
    let dark: u64 = hist[..=t as usize].iter().sum();
    let bright: u64 = hist[t as usize + 1..].iter().sum();
    let dark_is_foreground = dark <= bright;
    for y in 0..roi.h {
        for x in 0..roi.w {
            let v = frame.get(roi.x + x, roi.y + y);
            let is_dark = v <= t;
            out.set(x, y, is_dark == dark_is_foreground);
        }
    }
    Ok(out)
}

// Moore neighborhood, clockwise on screen starting west.
const DIRS: [(i32, i32); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn is_set(image: &BinaryImage, p: Point) -> bool {
    p.x >= 0
        && p.y >= 0
        && (p.x as u32) < image.width
        && (p.y as u32) < image.height
        && image.get(p.x as u32, p.y as u32)
}

/// Moore boundary trace from the blob's top-left-most pixel. The walk stops
/// when it is about to repeat its first transition, so the returned cycle
/// covers the whole outer boundary exactly once.
fn trace_contour(image: &BinaryImage, start: Point, area: u64) -> Vec<Point> {
    let mut contour = vec![start];
    let b0 = Point::new(start.x - 1, start.y);

    let advance = |p: Point, b: Point| -> Option<(Point, Point)> {
        let from = (b.x - p.x, b.y - p.y);
        let bi = DIRS.iter().position(|&d| d == from).expect("backtrack is a neighbor");
        let mut prev = b;
        for k in 1..=8 {
            let d = DIRS[(bi + k) % 8];
            let q = Point::new(p.x + d.0, p.y + d.1);
            if is_set(image, q) {
                return Some((q, prev));
            }
            prev = q;
        }
        None
    };

    let Some((first_next, mut back)) = advance(start, b0) else {
        return contour; // isolated pixel
    };
    contour.push(first_next);
    let mut p = first_next;
    let max_steps = 8 * (area as usize + 2) * 4;
    for _ in 0..max_steps {
        let Some((q, b)) = advance(p, back) else {
            return contour;
        };
        if p == start && q == first_next {
            // About to repeat the opening transition; drop the duplicate
            // closing vertex pushed on re-entry.
            contour.pop();
            return contour;
        }
        contour.push(q);
        p = q;
        back = b;
    }
    contour
}

/// Labels 8-connected components in scan order and traces each outer contour.
pub fn connected_components(image: &BinaryImage) -> Vec<Blob> {
    let w = image.width as usize;
    let h = image.height as usize;
    let mut labels = vec![0u32; w * h];
    let mut blobs = Vec::new();
    let mut queue = Vec::new();

    for sy in 0..h {
        for sx in 0..w {
            if !image.get(sx as u32, sy as u32) || labels[sy * w + sx] != 0 {
                continue;
            }
            let label = blobs.len() as u32 + 1;
            let mut area = 0u64;
            let (mut min_x, mut min_y, mut max_x, mut max_y) = (sx, sy, sx, sy);
            queue.clear();
            queue.push((sx, sy));
            labels[sy * w + sx] = label;
            while let Some((x, y)) = queue.pop() {
                area += 1;
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
                for (dx, dy) in DIRS {
                    let nx = x as i64 + dx as i64;
                    let ny = y as i64 + dy as i64;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if image.get(nx as u32, ny as u32) && labels[ny * w + nx] == 0 {
                        labels[ny * w + nx] = label;
                        queue.push((nx, ny));
                    }
                }
            }
            let start = Point::new(sx as i32, sy as i32);
            let contour = trace_contour(image, start, area);
            blobs.push(Blob {
                label,
                area,
                bbox: Rect::new(
                    min_x as u32,
                    min_y as u32,
                    (max_x - min_x + 1) as u32,
                    (max_y - min_y + 1) as u32,
                ),
                contour,
            });
        }
    }
    blobs
}

fn dist2(a: Point, b: Point) -> f64 {
    let dx = (a.x - b.x) as f64;
    let dy = (a.y - b.y) as f64;
    dx * dx + dy * dy
}

/// Euclidean distance from `p` to the segment `a..b`.
fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (px, py) = (p.x as f64, p.y as f64);
    let (ax, ay) = (a.x as f64, a.y as f64);
    let (bx, by) = (b.x as f64, b.y as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((px - ax).powi(2) + (py - ay).powi(2)).sqrt();
    }
    let t = (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn dp_open(points: &[Point], epsilon: f64, out: &mut Vec<Point>) {
    if points.len() <= 2 {
        out.extend_from_slice(points);
        return;
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let mut max_d = -1.0;
    let mut max_i = 0;
    for (i, &p) in points.iter().enumerate().take(points.len() - 1).skip(1) {
        let d = point_segment_distance(p, first, last);
        if d > max_d {
            max_d = d;
            max_i = i;
        }
    }
    if max_d > epsilon {
        dp_open(&points[..=max_i], epsilon, out);
        out.pop(); // drop the duplicated split point
        dp_open(&points[max_i..], epsilon, out);
    } else {
        out.push(first);
        out.push(last);
    }
}

/// Douglas-Peucker on a closed contour: the contour is split at its two most
/// distant points, each open chain is simplified, and the halves are rejoined.
/// The result is a subset of the input vertices; a fully collinear contour
/// collapses to its two extreme points.
pub fn simplify_polygon(contour: &[Point], epsilon: f64) -> Vec<Point> {
    if contour.len() <= 2 {
        return contour.to_vec();
    }
    let n = contour.len();
    let (mut bi, mut bj, mut best) = (0usize, 0usize, -1.0f64);
    for i in 0..n {
        for j in i + 1..n {
            let d = dist2(contour[i], contour[j]);
            if d > best {
                best = d;
                bi = i;
                bj = j;
            }
        }
    }
    if best <= 0.0 {
        return vec![contour[0]];
    }

    let chain_a: Vec<Point> = contour[bi..=bj].to_vec();
    let mut chain_b: Vec<Point> = contour[bj..].to_vec();
    chain_b.extend_from_slice(&contour[..=bi]);

    let mut simplified_a = Vec::new();
    dp_open(&chain_a, epsilon, &mut simplified_a);
    let mut simplified_b = Vec::new();
    dp_open(&chain_b, epsilon, &mut simplified_b);

    let mut out = simplified_a;
    // chain_b shares both endpoints with chain_a.
    out.extend_from_slice(&simplified_b[1..simplified_b.len() - 1]);
    out
}

/// Snaps each vertex to the nearby contour point farthest from the chord
/// between its neighbors. Rasterization blunts apexes by a pixel or two and
/// simplification may settle on a blunted neighbor; this recovers the true
/// extreme point.
fn refine_corners(polygon: &[Point], contour: &[Point], radius: f64) -> Vec<Point> {
    let n = polygon.len();
    let refined: Vec<Point> = (0..n)
        .map(|i| {
            let prev = polygon[(i + n - 1) % n];
            let next = polygon[(i + 1) % n];
            let v = polygon[i];
            let mut best = v;
            let mut best_d = point_segment_distance(v, prev, next);
            for &p in contour {
                let dx = (p.x - v.x) as f64;
                let dy = (p.y - v.y) as f64;
                if dx * dx + dy * dy <= radius * radius {
                    let d = point_segment_distance(p, prev, next);
                    if d > best_d + 1e-9 {
                        best_d = d;
                        best = p;
                    }
                }
            }
            best
        })
        .collect();
    // Degenerate snap (two vertices collapsing) keeps the original polygon.
    for i in 0..n {
        for j in i + 1..n {
            if refined[i] == refined[j] {
                return polygon.to_vec();
            }
        }
    }
    refined
}

fn polygon_signed_area2(points: &[Point]) -> i64 {
    let n = points.len();
    let mut s = 0i64;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        s += a.x as i64 * b.y as i64 - b.x as i64 * a.y as i64;
    }
    s
}

fn is_convex(points: &[Point]) -> bool {
    let n = points.len();
    let mut sign = 0i64;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let c = points[(i + 2) % n];
        let cross = (b.x as i64 - a.x as i64) * (c.y as i64 - b.y as i64)
            - (b.y as i64 - a.y as i64) * (c.x as i64 - b.x as i64);
        if cross == 0 {
            return false; // collinear edge, not a proper quadrilateral
        }
        if sign == 0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Area of the smallest rectangle (any orientation) enclosing the points.
/// For a convex polygon the optimum is aligned with one of its edges.
fn min_enclosing_rect_area(points: &[Point]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let ex = (b.x - a.x) as f64;
        let ey = (b.y - a.y) as f64;
        let len = (ex * ex + ey * ey).sqrt();
        if len == 0.0 {
            continue;
        }
        let (ux, uy) = (ex / len, ey / len);
        let (vx, vy) = (-uy, ux);
        let (mut min_u, mut max_u) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_v, mut max_v) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let pu = p.x as f64 * ux + p.y as f64 * uy;
            let pv = p.x as f64 * vx + p.y as f64 * vy;
            min_u = min_u.min(pu);
            max_u = max_u.max(pu);
            min_v = min_v.min(pv);
            max_v = max_v.max(pv);
        }
        best = best.min((max_u - min_u) * (max_v - min_v));
    }
    best
}

/// True when the simplified polygon is a filled rectangle: four convex
/// corners, interior angles within tolerance of 90 degrees, and the blob
/// covering at least `fill_ratio_min` of its minimal enclosing rectangle.
pub fn is_rectangle(polygon: &[Point], params: &ShapeParams, blob_area: u64) -> bool {
    if polygon.len() != 4 {
        return false;
    }
    if !is_convex(polygon) {
        return false;
    }
    for i in 0..4 {
        let prev = polygon[(i + 3) % 4];
        let here = polygon[i];
        let next = polygon[(i + 1) % 4];
        let (ax, ay) = ((prev.x - here.x) as f64, (prev.y - here.y) as f64);
        let (bx, by) = ((next.x - here.x) as f64, (next.y - here.y) as f64);
        let la = (ax * ax + ay * ay).sqrt();
        let lb = (bx * bx + by * by).sqrt();
        if la == 0.0 || lb == 0.0 {
            return false;
        }
        let cos = ((ax * bx + ay * by) / (la * lb)).clamp(-1.0, 1.0);
        let angle = cos.acos().to_degrees();
        if (angle - 90.0).abs() > params.angle_tolerance_deg {
            return false;
        }
    }
    let enclosing = min_enclosing_rect_area(polygon);
    if enclosing <= 0.0 {
        return false;
    }
    blob_area as f64 / enclosing >= params.fill_ratio_min
}

fn canonical_quad(local: &[Point], roi: Rect) -> Quadrilateral {
    let mut pts: Vec<Point> = local
        .iter()
        .map(|p| Point::new(p.x + roi.x as i32, p.y + roi.y as i32))
        .collect();
    // Counter-clockwise in mathematical orientation: positive signed area.
    if polygon_signed_area2(&pts) < 0 {
        pts.reverse();
    }
    let start = (0..4)
        .min_by_key(|&i| (pts[i].y, pts[i].x))
        .expect("quadrilateral has four corners");
    pts.rotate_left(start);
    Quadrilateral { corners: [pts[0], pts[1], pts[2], pts[3]] }
}

/// Full recognition pipeline over one region: binarize, label, filter by
/// area, simplify each contour, keep rectangles. Corners are reported in
/// frame coordinates.
pub fn detect_rectangles(
    frame: &GrayFrame,
    roi: Rect,
    params: &ShapeParams,
) -> Result<Vec<Quadrilateral>, ShapeError> {
    params.validate()?;
    let binary = binarize(frame, roi)?;
    let blobs = connected_components(&binary);
    let min_area = params.min_area_fraction * roi.area() as f64;
    let mut out = Vec::new();
    for blob in blobs {
        if (blob.area as f64) < min_area || blob.contour.len() < 4 {
            continue;
        }
        let epsilon = params.dp_epsilon_fraction * blob.contour.len() as f64;
        let mut polygon = simplify_polygon(&blob.contour, epsilon);
        if polygon.len() == 4 {
            polygon = refine_corners(&polygon, &blob.contour, epsilon + 2.5);
        }
        if is_rectangle(&polygon, params, blob.area) {
            out.push(canonical_quad(&polygon, roi));
        }
    }
    Ok(out)
}
