//! Lobe areas between consecutive concave points.

use serde::{Deserialize, Serialize};

use crate::contour::{polygon_area, Contour, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub start: usize,
    pub end: usize,
    pub area: f64,
    /// The closing chord crosses the arc, so `area` is the absolute shoelace
    /// value of a non-simple polygon.
    pub self_intersecting: bool,
}

/// Lobes bounded by each pair of cyclically adjacent concave indices.
/// Indices may be given in any order; duplicates are ignored.
pub fn lobes(c: &Contour, concave: &[usize]) -> Vec<Lobe> {
    let n = c.len();
    let mut idx: Vec<usize> = concave.iter().copied().filter(|&i| i < n).collect();
    idx.sort_unstable();
    idx.dedup();
    if idx.len() < 2 {
        return Vec::new();
    }
    (0..idx.len())
        .map(|j| {
            let (start, end) = (idx[j], idx[(j + 1) % idx.len()]);
            let span = (end + n - start) % n;
            let arc: Vec<Point> = (0..=span).map(|s| c.points[(start + s) % n]).collect();
            let self_intersecting = chord_crosses_arc(&arc);
            Lobe {
                start,
                end,
                area: polygon_area(&Contour::new(arc)),
                self_intersecting,
            }
        })
        .collect()
}

/// `(A_max - A_min) / A_mean` over the lobes; 0 with fewer than two
/// concave points or when every lobe is empty.
pub fn lobulation_index(c: &Contour, concave: &[usize]) -> f64 {
    index_from_lobes(&lobes(c, concave))
}

pub fn index_from_lobes(lobes: &[Lobe]) -> f64 {
    if lobes.is_empty() {
        return 0.0;
    }
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, 0.0f64, 0.0);
    for l in lobes {
        lo = lo.min(l.area);
        hi = hi.max(l.area);
        sum += l.area;
    }
    let mean = sum / lobes.len() as f64;
    if mean > 0.0 {
        (hi - lo) / mean
    } else {
        0.0
    }
}

fn chord_crosses_arc(arc: &[Point]) -> bool {
    let m = arc.len();
    if m < 4 {
        return false;
    }
    let (a, b) = (arc[m - 1], arc[0]);
    // skip the two arc segments that share an endpoint with the chord
    (1..m - 2).any(|i| segments_cross(a, b, arc[i], arc[i + 1]))
}

fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    use crate::contour::cross;
    let d1 = cross(p1, p2, q1);
    let d2 = cross(p1, p2, q2);
    let d3 = cross(q1, q2, p1);
    let d4 = cross(q1, q2, p2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}
