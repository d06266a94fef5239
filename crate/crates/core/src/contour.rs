//! Boundary extraction and the polygon primitives every feature builds on.
//!
//! Two boundaries are traced from a mask:
//!
//! * [`trace_contour`] walks the outer boundary pixels (Moore neighbourhood,
//!   8-connected). Its vertices are pixel centres, consecutive vertices are
//!   8-neighbours, and it is the input to curvature analysis.
//! * [`trace_outline`] follows the cracks between foreground and background
//!   and emits the midpoint of every crack edge. This is the polygon a
//!   marching-squares isoline at 0.5 would produce; its shoelace area matches
//!   the pixel count up to corner terms of 1/8 pixel, so area ratios compare
//!   like with like.
//!
//! Both are returned with positive signed area: in image coordinates (y down)
//! the walk is clockwise on screen, which is counter-clockwise in the
//! ordinary x/y frame used by the shoelace formula.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::{largest_component, Connectivity, MaskImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContourError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }
}

/// z-component of (b - a) x (c - a).
#[inline]
pub fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Closed polygon; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<Point>,
}

impl Contour {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Self {
        Self::new(xy.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fewer than three vertices cannot enclose area.
    pub fn is_degenerate(&self) -> bool {
        self.points.len() < 3
    }

    /// Shoelace sum / 2, positive for the orientation traced here.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            acc += a.x * b.y - b.x * a.y;
        }
        acc / 2.0
    }

    /// Reverses the vertex order if needed so that the signed area is >= 0,
    /// keeping the first vertex in place.
    pub fn normalized(mut self) -> Self {
        if self.signed_area() < 0.0 {
            self.points[1..].reverse();
        }
        self
    }

    /// Cyclic moving average over `2 * half_window + 1` vertices.
    pub fn smoothed(&self, half_window: usize) -> Contour {
        let n = self.points.len();
        let width = 2 * half_window + 1;
        if half_window == 0 || n < width {
            return self.clone();
        }
        let inv = 1.0 / width as f64;
        let points = (0..n)
            .map(|i| {
                let (mut sx, mut sy) = (0.0, 0.0);
                for k in 0..width {
                    let p = self.points[(i + n + k - half_window) % n];
                    sx += p.x;
                    sy += p.y;
                }
                Point::new(sx * inv, sy * inv)
            })
            .collect();
        Contour { points }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Contour {
        Contour::new(self.points.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect())
    }
}

/// Axis-aligned rectangle in whole pixels; both bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingRect {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
}

impl BoundingRect {
    pub fn area(&self) -> f64 {
        (self.width * self.height) as f64
    }
}

/// Minimum-area enclosing rectangle; `angle` is the direction of the `width`
/// side in degrees, in `[0, 90)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinAreaRect {
    pub center: Point,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl MinAreaRect {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

// Moore neighbourhood, clockwise on screen starting at west.
const MOORE: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn moore_index(dx: isize, dy: isize) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is a Moore neighbour")
}

/// Outer boundary pixels of the largest 8-connected component, by
/// Moore-neighbour tracing from the first foreground pixel in row-major order.
///
/// The walk stops once the first move out of the start pixel is about to be
/// repeated, which is the same state as Jacob's criterion and also handles
/// boundaries that pass through the start pixel twice.
pub fn trace_contour(mask: &MaskImage) -> Result<Contour, ContourError> {
    let region = largest_component(mask, Connectivity::Eight);
    let start = region.first_foreground().ok_or(ContourError::EmptyMask)?;
    let start = (start.0 as isize, start.1 as isize);
    let to_point = |(x, y): (isize, isize)| Point::new(x as f64, y as f64);

    let step = |cur: (isize, isize), back: usize| -> Option<((isize, isize), usize)> {
        for i in 1..8 {
            let d = (back + i) % 8;
            let (dx, dy) = MOORE[d];
            let next = (cur.0 + dx, cur.1 + dy);
            if region.at(next.0, next.1) {
                let (px, py) = MOORE[(d + 7) % 8];
                let prev = (cur.0 + px, cur.1 + py);
                return Some((next, moore_index(prev.0 - next.0, prev.1 - next.1)));
            }
        }
        None
    };

    let Some((first, first_back)) = step(start, 0) else {
        return Ok(Contour::new(vec![to_point(start)]));
    };
    let mut points = vec![to_point(start)];
    let (mut cur, mut back) = (first, first_back);
    let limit = 8 * region.width() * region.height() + 8;
    for _ in 0..limit {
        let (next, nb) = step(cur, back).expect("traced pixel has a neighbour");
        if cur == start && next == first {
            break;
        }
        points.push(to_point(cur));
        cur = next;
        back = nb;
    }
    Ok(Contour::new(points).normalized())
}

/// Crack-midpoint outline of the largest 8-connected component, in pixel-centre
/// coordinates. Diagonal contacts are followed (8-connectivity).
pub fn trace_outline(mask: &MaskImage) -> Result<Contour, ContourError> {
    let region = largest_component(mask, Connectivity::Eight);
    let (sx, sy) = region.first_foreground().ok_or(ContourError::EmptyMask)?;
    // Vertices live on the pixel-corner lattice; corner (x, y) is the top-left
    // corner of pixel (x, y). Headings are E, S, W, N.
    const HEAD: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    let start = (sx as isize, sy as isize, 0usize);
    let (mut vx, mut vy, mut d) = start;
    let mut points = Vec::new();
    let limit = 4 * (region.width() + 1) * (region.height() + 1) + 4;
    for _ in 0..limit {
        let (dx, dy) = HEAD[d];
        let (nx, ny) = (vx + dx, vy + dy);
        points.push(Point::new(
            (vx + nx) as f64 / 2.0 - 0.5,
            (vy + ny) as f64 / 2.0 - 0.5,
        ));
        vx = nx;
        vy = ny;
        // pixel diagonal from the vertex in direction (ox, oy), each +-1
        let pixel = |ox: isize, oy: isize| {
            region.at(vx + if ox > 0 { 0 } else { -1 }, vy + if oy > 0 { 0 } else { -1 })
        };
        let (rx, ry) = (-dy, dx);
        let front_right = pixel(dx + rx, dy + ry);
        let front_left = pixel(dx - rx, dy - ry);
        d = if front_left {
            (d + 3) % 4
        } else if front_right {
            d
        } else {
            (d + 1) % 4
        };
        if (vx, vy, d) == start {
            break;
        }
    }
    Ok(Contour::new(points).normalized())
}

/// Unsigned shoelace area; zero for fewer than three vertices.
pub fn polygon_area(c: &Contour) -> f64 {
    c.signed_area().abs()
}

/// Closed-polygon length including the closing edge.
pub fn polygon_perimeter(c: &Contour) -> f64 {
    let n = c.points.len();
    if n < 2 {
        return 0.0;
    }
    (0..n).map(|i| c.points[i].dist(c.points[(i + 1) % n])).sum()
}

/// Andrew's monotone chain. Collinear points are dropped and the hull has
/// positive signed area, starting from the lowest-x (then lowest-y) vertex.
pub fn convex_hull(c: &Contour) -> Contour {
    let mut pts = c.points.clone();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Contour::new(pts);
    }
    let mut lower: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    Contour::new(lower)
}

pub fn bounding_rect(c: &Contour) -> BoundingRect {
    if c.points.is_empty() {
        return BoundingRect { x: 0, y: 0, width: 0, height: 0 };
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &c.points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let (x0, y0) = (x0.floor() as i64, y0.floor() as i64);
    let (x1, y1) = (x1.ceil() as i64, y1.ceil() as i64);
    BoundingRect {
        x: x0,
        y: y0,
        width: x1 - x0 + 1,
        height: y1 - y0 + 1,
    }
}

/// Rotating calipers over the convex hull: one edge of the optimal rectangle
/// is collinear with a hull edge, and the three supporting vertices advance
/// monotonically as the edge index does.
pub fn min_area_rect(c: &Contour) -> MinAreaRect {
    let hull = convex_hull(c);
    let h = &hull.points;
    match h.len() {
        0 => {
            return MinAreaRect { center: Point::new(0.0, 0.0), width: 0.0, height: 0.0, angle: 0.0 };
        }
        1 => return MinAreaRect { center: h[0], width: 0.0, height: 0.0, angle: 0.0 },
        2 => {
            let d = h[1].sub(h[0]);
            let center = Point::new((h[0].x + h[1].x) / 2.0, (h[0].y + h[1].y) / 2.0);
            return rect_from_axis(center, d.y.atan2(d.x).to_degrees(), h[0].dist(h[1]), 0.0);
        }
        _ => {}
    }
    let n = h.len();
    let dot = |u: Point, v: Point| u.x * v.x + u.y * v.y;
    let (mut right, mut top, mut left) = (0usize, 0usize, 0usize);
    let mut best: Option<(f64, Point, f64, f64, f64)> = None;
    for i in 0..n {
        let a = h[i];
        let b = h[(i + 1) % n];
        let len = a.dist(b);
        let u = Point::new((b.x - a.x) / len, (b.y - a.y) / len);
        // inward normal for a positively oriented polygon
        let v = Point::new(-u.y, u.x);
        while dot(h[(right + 1) % n].sub(a), u) > dot(h[right].sub(a), u) {
            right = (right + 1) % n;
        }
        if i == 0 {
            top = right;
        }
        while dot(h[(top + 1) % n].sub(a), v) > dot(h[top].sub(a), v) {
            top = (top + 1) % n;
        }
        if i == 0 {
            left = top;
        }
        while dot(h[(left + 1) % n].sub(a), u) < dot(h[left].sub(a), u) {
            left = (left + 1) % n;
        }
        let max_u = dot(h[right].sub(a), u);
        let min_u = dot(h[left].sub(a), u).min(0.0);
        let max_v = dot(h[top].sub(a), v);
        let area = (max_u - min_u) * max_v;
        if best.is_none_or(|(ba, ..)| area < ba - 1e-12 * ba.abs().max(1.0)) {
            let cu = (max_u + min_u) / 2.0;
            let cv = max_v / 2.0;
            let center = Point::new(a.x + u.x * cu + v.x * cv, a.y + u.y * cu + v.y * cv);
            best = Some((area, center, u.y.atan2(u.x).to_degrees(), max_u - min_u, max_v));
        }
    }
    let (_, center, angle, width, height) = best.expect("hull has at least three vertices");
    rect_from_axis(center, angle, width, height)
}

/// Folds an arbitrary side direction into `[0, 90)`, swapping sides as needed.
fn rect_from_axis(center: Point, angle_deg: f64, width: f64, height: f64) -> MinAreaRect {
    let mut angle = angle_deg.rem_euclid(180.0);
    let (mut width, mut height) = (width, height);
    if angle >= 90.0 {
        angle -= 90.0;
        std::mem::swap(&mut width, &mut height);
    }
    if (90.0 - angle).abs() < 1e-9 {
        angle = 0.0;
        std::mem::swap(&mut width, &mut height);
    }
    MinAreaRect { center, width, height, angle }
}
