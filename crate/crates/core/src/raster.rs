//! Grayscale rasterization helpers used by the scenario renderer and by
//! synthetic-shape test fixtures. A pixel belongs to a shape when its center
//! `(x + 0.5, y + 0.5)` lies inside the shape.

use crate::frame::GrayFrame;
use crate::geom::Rect;

pub fn fill_rect(frame: &mut GrayFrame, rect: Rect, value: u8) {
    let x1 = rect.right().min(frame.width);
    let y1 = rect.bottom().min(frame.height);
    for y in rect.y.min(frame.height)..y1 {
        for x in rect.x.min(frame.width)..x1 {
            frame.set(x, y, value);
        }
    }
}

/// True when `p` lies inside the convex polygon (boundary counts as inside).
pub fn point_in_convex_polygon(p: (f64, f64), corners: &[(f64, f64)]) -> bool {
    let n = corners.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let a = corners[i];
        let b = corners[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

pub fn fill_convex_polygon(frame: &mut GrayFrame, corners: &[(f64, f64)], value: u8) {
    let min_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_x = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let min_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_y = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let max_x = (max_x.max(0) as u32).min(frame.width);
    let max_y = (max_y.max(0) as u32).min(frame.height);
    for y in min_y..max_y {
        for x in min_x..max_x {
            let center = (x as f64 + 0.5, y as f64 + 0.5);
            if point_in_convex_polygon(center, corners) {
                frame.set(x, y, value);
            }
        }
    }
}

pub fn fill_disk(frame: &mut GrayFrame, cx: f64, cy: f64, radius: f64, value: u8) {
    let min_x = ((cx - radius).floor().max(0.0)) as u32;
    let max_x = (((cx + radius).ceil().max(0.0)) as u32).min(frame.width);
    let min_y = ((cy - radius).floor().max(0.0)) as u32;
    let max_y = (((cy + radius).ceil().max(0.0)) as u32).min(frame.height);
    for y in min_y..max_y {
        for x in min_x..max_x {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= radius * radius {
                frame.set(x, y, value);
            }
        }
    }
}

/// Corner points of a `w × h` rectangle centered at `(cx, cy)`, rotated by
/// `angle_deg` clockwise on screen. Returned in drawing order.
pub fn rotated_rect_corners(
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    angle_deg: f64,
) -> [(f64, f64); 4] {
    let a = angle_deg.to_radians();
    let (sin, cos) = a.sin_cos();
    let local = [
        (-w / 2.0, -h / 2.0),
        (w / 2.0, -h / 2.0),
        (w / 2.0, h / 2.0),
        (-w / 2.0, h / 2.0),
    ];
    local.map(|(x, y)| (cx + x * cos - y * sin, cy + x * sin + y * cos))
}
