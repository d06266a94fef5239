//! k-curve angles along a traced boundary and the convex/concave
//! suppression that turns them into a protrusion count.

use serde::{Deserialize, Serialize};

use super::MorphError;
use crate::contour::Contour;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Smooth,
    Convex,
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePoint {
    pub index: usize,
    /// Turning angle in degrees: 0 on a straight run, 180 on a spike.
    pub angle_deviation: f64,
    pub kind: PointKind,
}

/// Classifies every vertex by the turn between `p[i-k] -> p[i]` and
/// `p[i] -> p[i+k]`. The contour orientation decides which sign is convex,
/// so callers may pass either winding.
pub fn curvature_points(c: &Contour, k: usize, smooth_threshold: f64) -> Result<Vec<CurvaturePoint>, MorphError> {
    let n = c.len();
    if k == 0 {
        return Err(MorphError::InvalidParameter("k must be at least 1".into()));
    }
    if n <= 2 * k {
        return Err(MorphError::ContourTooShort { len: n, k });
    }
    let orient = if c.signed_area() < 0.0 { -1.0 } else { 1.0 };
    Ok((0..n)
        .map(|i| {
            let prev = c.points[(i + n - k) % n];
            let cur = c.points[i];
            let next = c.points[(i + k) % n];
            let u = cur.sub(prev);
            let v = next.sub(cur);
            let dot = u.x * v.x + u.y * v.y;
            let turn = (u.x * v.y - u.y * v.x) * orient;
            // atan2 keeps precision near 0 and 180 where acos would not
            let angle_deviation = turn.abs().atan2(dot).to_degrees();
            let kind = if angle_deviation <= smooth_threshold {
                PointKind::Smooth
            } else if turn >= 0.0 {
                // a straight reversal (turn == 0, deviation 180) is a spur tip
                PointKind::Convex
            } else {
                PointKind::Concave
            };
            CurvaturePoint {
                index: i,
                angle_deviation,
                kind,
            }
        })
        .collect())
}

/// Drops smooth points, then collapses every cyclic run of same-kind points
/// to its largest-deviation member (earliest index on ties). Smooth points
/// do not interrupt a run, so a shape whose only corners are concave keeps a
/// single point. One pass reaches the fixpoint.
pub fn suppress_points(points: &[CurvaturePoint]) -> Vec<CurvaturePoint> {
    collapse(points, None)
}

/// Like [`suppress_points`], but a run also ends where two consecutive
/// same-kind points lie more than `max_gap` contour steps apart
/// (cyclically, on a contour of `contour_len` points). With
/// `max_gap = 2k` two points are merged only if their k-windows overlap,
/// so notches separated by a smooth arc stay distinct. The survivors of
/// adjacent runs are further apart than the runs' ends, so this is also a
/// fixpoint after one pass.
pub fn suppress_points_within(points: &[CurvaturePoint], contour_len: usize, max_gap: usize) -> Vec<CurvaturePoint> {
    collapse(points, Some((contour_len, max_gap)))
}

fn collapse(points: &[CurvaturePoint], gap: Option<(usize, usize)>) -> Vec<CurvaturePoint> {
    let pts: Vec<CurvaturePoint> = points.iter().copied().filter(|p| p.kind != PointKind::Smooth).collect();
    let n = pts.len();
    if n <= 1 {
        return pts;
    }
    let joined = |a: &CurvaturePoint, b: &CurvaturePoint| {
        a.kind == b.kind
            && match gap {
                None => true,
                Some((len, max_gap)) => (b.index + len - a.index) % len <= max_gap,
            }
    };
    // start at a run boundary so no run wraps around the seam
    let Some(start) = (0..n).find(|&i| !joined(&pts[(i + n - 1) % n], &pts[i])) else {
        let best = pts.iter().copied().reduce(|a, b| if better(&b, &a) { b } else { a });
        return best.into_iter().collect();
    };
    let mut out: Vec<CurvaturePoint> = Vec::new();
    let mut best = pts[start];
    let mut prev = pts[start];
    for step in 1..n {
        let p = pts[(start + step) % n];
        if joined(&prev, &p) {
            if better(&p, &best) {
                best = p;
            }
        } else {
            out.push(best);
            best = p;
        }
        prev = p;
    }
    out.push(best);
    out.sort_by_key(|p| p.index);
    out
}

fn better(a: &CurvaturePoint, b: &CurvaturePoint) -> bool {
    a.angle_deviation > b.angle_deviation || (a.angle_deviation == b.angle_deviation && a.index < b.index)
}

/// Twice the number of concave points in a suppressed list.
pub fn cspi(points: &[CurvaturePoint]) -> u32 {
    2 * points.iter().filter(|p| p.kind == PointKind::Concave).count() as u32
}
