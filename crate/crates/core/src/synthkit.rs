//! Deterministic synthetic lesion masks and the brute-force reference
//! computations the feature tests are checked against.
//!
//! Every shape is an implicit region around the canvas centre, so ground-truth
//! areas and concavity counts are known in closed form. Star and rosette
//! boundaries are polar: `r(θ)` is linear between tips and notches for stars,
//! and `R(1 - δ + δ|cos(nθ/2)|)` for rosettes. Both reduce to the
//! circumscribed disk at `δ = 0`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{Contour, Point};
use crate::dataset::{scan_dataset, ClassLabel, DatasetError, DatasetIndex};
use crate::imgproc::{save_gray_png, GrayImage, ImageError, MaskImage};
use crate::rng::SeededRng;

/// Required clearance between a shape and the canvas edge, in pixels.
pub const MARGIN: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("shape does not fit inside the {width}x{height} canvas with a {MARGIN}-pixel margin")]
    SpecOutOfCanvas { width: usize, height: usize },
    #[error("invalid shape parameters: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShapeKind {
    Disk { radius: f64 },
    Ellipse { semi_major: f64, semi_minor: f64 },
    Rect { width: f64, height: f64 },
    Star { radius: f64, lobes: u32, depth: f64 },
    Rosette { radius: f64, lobes: u32, depth: f64 },
    /// Two centred bars of length `span` and thickness `arm`.
    Plus { span: f64, arm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub rotation_deg: f64,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub seed: u64,
    /// Maximum centre displacement in pixels, drawn from `seed`. Zero keeps
    /// the shape centred at `((w - 1) / 2, (h - 1) / 2)`.
    pub jitter: f64,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, canvas: usize) -> Self {
        Self {
            kind,
            rotation_deg: 0.0,
            canvas_width: canvas,
            canvas_height: canvas,
            seed: 0,
            jitter: 0.0,
        }
    }

    pub fn rotated(mut self, deg: f64) -> Self {
        self.rotation_deg = deg;
        self
    }

    pub fn jittered(mut self, seed: u64, amount: f64) -> Self {
        self.seed = seed;
        self.jitter = amount;
        self
    }

    /// Same shape with every length and the canvas multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.kind = match self.kind {
            ShapeKind::Disk { radius } => ShapeKind::Disk { radius: radius * factor },
            ShapeKind::Ellipse { semi_major, semi_minor } => ShapeKind::Ellipse {
                semi_major: semi_major * factor,
                semi_minor: semi_minor * factor,
            },
            ShapeKind::Rect { width, height } => ShapeKind::Rect {
                width: width * factor,
                height: height * factor,
            },
            ShapeKind::Star { radius, lobes, depth } => ShapeKind::Star { radius: radius * factor, lobes, depth },
            ShapeKind::Rosette { radius, lobes, depth } => ShapeKind::Rosette { radius: radius * factor, lobes, depth },
            ShapeKind::Plus { span, arm } => ShapeKind::Plus {
                span: span * factor,
                arm: arm * factor,
            },
        };
        self.canvas_width = (self.canvas_width as f64 * factor).round() as usize;
        self.canvas_height = (self.canvas_height as f64 * factor).round() as usize;
        self.jitter *= factor;
        self
    }

    pub fn center(&self) -> Point {
        let base = Point::new(
            (self.canvas_width as f64 - 1.0) / 2.0,
            (self.canvas_height as f64 - 1.0) / 2.0,
        );
        if self.jitter <= 0.0 {
            return base;
        }
        let mut rng = SeededRng::new(self.seed);
        Point::new(
            base.x + rng.uniform(-self.jitter, self.jitter),
            base.y + rng.uniform(-self.jitter, self.jitter),
        )
    }

    fn bounding_radius(&self) -> f64 {
        match self.kind {
            ShapeKind::Disk { radius } => radius,
            ShapeKind::Ellipse { semi_major, .. } => semi_major,
            ShapeKind::Rect { width, height } => width.hypot(height) / 2.0,
            ShapeKind::Star { radius, .. } | ShapeKind::Rosette { radius, .. } => radius,
            ShapeKind::Plus { span, arm } => (span / 2.0).hypot(arm / 2.0),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SynthError::InvalidSpec(format!("{name} must be positive, got {v}")))
            }
        };
        match self.kind {
            ShapeKind::Disk { radius } => positive(radius, "radius")?,
            ShapeKind::Ellipse { semi_major, semi_minor } => {
                positive(semi_major, "semi_major")?;
                positive(semi_minor, "semi_minor")?;
                if semi_minor > semi_major {
                    return Err(SynthError::InvalidSpec("semi_minor exceeds semi_major".into()));
                }
            }
            ShapeKind::Rect { width, height } => {
                positive(width, "width")?;
                positive(height, "height")?;
            }
            ShapeKind::Star { radius, lobes, depth } | ShapeKind::Rosette { radius, lobes, depth } => {
                positive(radius, "radius")?;
                if lobes < 3 {
                    return Err(SynthError::InvalidSpec(format!("need at least 3 lobes, got {lobes}")));
                }
                if !(0.0..=1.0).contains(&depth) {
                    return Err(SynthError::InvalidSpec(format!("depth must lie in [0, 1], got {depth}")));
                }
            }
            ShapeKind::Plus { span, arm } => {
                positive(span, "span")?;
                positive(arm, "arm")?;
                if arm >= span {
                    return Err(SynthError::InvalidSpec("arm must be thinner than span".into()));
                }
            }
        }
        let c = self.center();
        let r = self.bounding_radius();
        let fits = c.x - r >= MARGIN
            && c.y - r >= MARGIN
            && c.x + r <= self.canvas_width as f64 - 1.0 - MARGIN
            && c.y + r <= self.canvas_height as f64 - 1.0 - MARGIN;
        if fits {
            Ok(())
        } else {
            Err(SynthError::SpecOutOfCanvas {
                width: self.canvas_width,
                height: self.canvas_height,
            })
        }
    }

    /// Whether a point given in the shape's own frame (centred, unrotated) is inside.
    fn contains_local(&self, u: f64, v: f64) -> bool {
        match self.kind {
            ShapeKind::Disk { radius } => u * u + v * v <= radius * radius,
            ShapeKind::Ellipse { semi_major, semi_minor } => {
                (u / semi_major).powi(2) + (v / semi_minor).powi(2) <= 1.0
            }
            ShapeKind::Rect { width, height } => u.abs() <= width / 2.0 && v.abs() <= height / 2.0,
            ShapeKind::Plus { span, arm } => {
                (u.abs() <= span / 2.0 && v.abs() <= arm / 2.0) || (v.abs() <= span / 2.0 && u.abs() <= arm / 2.0)
            }
            ShapeKind::Star { .. } | ShapeKind::Rosette { .. } => {
                let rho = u.hypot(v);
                rho <= self.polar_radius(v.atan2(u))
            }
        }
    }

    /// Boundary radius at local angle `theta` for the polar shapes.
    pub fn polar_radius(&self, theta: f64) -> f64 {
        match self.kind {
            ShapeKind::Star { radius, lobes, depth } => {
                let phase = (theta * lobes as f64 / (2.0 * PI)).rem_euclid(1.0);
                let tri = 1.0 - (2.0 * phase - 1.0).abs();
                radius * (1.0 - depth * tri)
            }
            ShapeKind::Rosette { radius, lobes, depth } => {
                radius * (1.0 - depth + depth * (lobes as f64 * theta / 2.0).cos().abs())
            }
            ShapeKind::Disk { radius } => radius,
            _ => f64::NAN,
        }
    }

    /// Closed-form area of the continuous shape.
    pub fn analytic_area(&self) -> f64 {
        match self.kind {
            ShapeKind::Disk { radius } => PI * radius * radius,
            ShapeKind::Ellipse { semi_major, semi_minor } => PI * semi_major * semi_minor,
            ShapeKind::Rect { width, height } => width * height,
            ShapeKind::Plus { span, arm } => 2.0 * span * arm - arm * arm,
            ShapeKind::Star { radius, depth, .. } => {
                let q = 1.0 - depth;
                PI * radius * radius * (1.0 + q + q * q) / 3.0
            }
            ShapeKind::Rosette { radius, depth, .. } => {
                let q = 1.0 - depth;
                PI * radius * radius * (q * q + 4.0 * q * depth / PI + depth * depth / 2.0)
            }
        }
    }

    /// Number of reflex corners of the continuous boundary.
    pub fn analytic_concave_count(&self) -> usize {
        match self.kind {
            ShapeKind::Star { lobes, depth, .. } | ShapeKind::Rosette { lobes, depth, .. } if depth > 0.0 => {
                lobes as usize
            }
            ShapeKind::Plus { .. } => 4,
            _ => 0,
        }
    }

    /// Polygon approximating the boundary in canvas coordinates. Corners of the
    /// continuous shape (tips, notches, rectangle corners) are exact vertices;
    /// smooth arcs are sampled with `samples_per_arc` points.
    pub fn boundary_polygon(&self, samples_per_arc: usize) -> Contour {
        let s = samples_per_arc.max(1);
        let local: Vec<(f64, f64)> = match self.kind {
            ShapeKind::Rect { width, height } => {
                let (a, b) = (width / 2.0, height / 2.0);
                vec![(-a, -b), (a, -b), (a, b), (-a, b)]
            }
            ShapeKind::Plus { span, arm } => {
                let (l, t) = (span / 2.0, arm / 2.0);
                vec![
                    (-t, -l),
                    (t, -l),
                    (t, -t),
                    (l, -t),
                    (l, t),
                    (t, t),
                    (t, l),
                    (-t, l),
                    (-t, t),
                    (-l, t),
                    (-l, -t),
                    (-t, -t),
                ]
            }
            ShapeKind::Disk { radius } => (0..4 * s)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / (4 * s) as f64;
                    (radius * t.cos(), radius * t.sin())
                })
                .collect(),
            ShapeKind::Ellipse { semi_major, semi_minor } => (0..4 * s)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / (4 * s) as f64;
                    (semi_major * t.cos(), semi_minor * t.sin())
                })
                .collect(),
            ShapeKind::Star { lobes, .. } | ShapeKind::Rosette { lobes, .. } => {
                // arcs run tip -> notch -> tip; corners sit at multiples of pi / lobes
                let arcs = 2 * lobes as usize;
                (0..arcs * s)
                    .map(|i| {
                        let t = PI / lobes as f64 * i as f64 / s as f64;
                        let r = self.polar_radius(t);
                        (r * t.cos(), r * t.sin())
                    })
                    .collect()
            }
        };
        let c = self.center();
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        Contour::new(
            local
                .into_iter()
                .map(|(u, v)| Point::new(c.x + u * cos - v * sin, c.y + u * sin + v * cos))
                .collect(),
        )
        .normalized()
    }
}

/// Rasterizes the shape by testing every pixel centre, row by row.
pub fn render(spec: &ShapeSpec) -> Result<MaskImage, SynthError> {
    spec.validate()?;
    let c = spec.center();
    let (sin, cos) = spec.rotation_deg.to_radians().sin_cos();
    Ok(MaskImage::from_fn(spec.canvas_width, spec.canvas_height, |x, y| {
        let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
        // inverse rotation into the shape frame
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        spec.contains_local(u, v)
    })?)
}

/// Reference computations used only to cross-check the production code paths.
pub mod oracles {
    use super::*;

    /// Foreground count by direct enumeration.
    pub fn pixel_area(mask: &MaskImage) -> usize {
        let mut n = 0;
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    n += 1;
                }
            }
        }
        n
    }

    /// O(n^3) hull: a point is a vertex if it is an extreme endpoint of some
    /// supporting line through it and another point.
    pub fn hull(points: &[Point]) -> Vec<Point> {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        if pts.len() <= 2 {
            return pts;
        }
        let side = |p: Point, q: Point, r: Point| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
        pts.iter()
            .copied()
            .filter(|&p| {
                pts.iter().any(|&q| {
                    if p == q {
                        return false;
                    }
                    let left = pts.iter().all(|&r| side(p, q, r) >= 0.0);
                    let right = pts.iter().all(|&r| side(p, q, r) <= 0.0);
                    if !(left || right) {
                        return false;
                    }
                    let t = |r: Point| (r.x - p.x) * (q.x - p.x) + (r.y - p.y) * (q.y - p.y);
                    pts.iter().filter(|&&r| side(p, q, r) == 0.0).all(|&r| t(r) >= 0.0)
                })
            })
            .collect()
    }

    /// Closed-polygon length as an explicit sum of step lengths.
    pub fn perimeter(c: &Contour) -> f64 {
        let mut total = 0.0;
        let n = c.points.len();
        if n < 2 {
            return 0.0;
        }
        for i in 0..n {
            let a = c.points[i];
            let b = c.points[if i + 1 == n { 0 } else { i + 1 }];
            total += (b.x - a.x).hypot(b.y - a.y);
        }
        total
    }

    /// Classifies every vertex of a polygon by the sign of its turn, relative
    /// to the polygon's own orientation. Returns `(convex, concave)`;
    /// collinear vertices are in neither.
    pub fn corner_scan(c: &Contour) -> (usize, usize) {
        let n = c.points.len();
        let mut twice_area = 0.0;
        for i in 0..n {
            let (a, b) = (c.points[i], c.points[(i + 1) % n]);
            twice_area += a.x * b.y - b.x * a.y;
        }
        let orient = twice_area.signum();
        let (mut convex, mut concave) = (0, 0);
        for i in 0..n {
            let prev = c.points[(i + n - 1) % n];
            let cur = c.points[i];
            let next = c.points[(i + 1) % n];
            let turn = ((cur.x - prev.x) * (next.y - cur.y) - (cur.y - prev.y) * (next.x - cur.x)) * orient;
            let scale = prev.dist(cur) * cur.dist(next);
            if turn > 1e-9 * scale {
                convex += 1;
            } else if turn < -1e-9 * scale {
                concave += 1;
            }
        }
        (convex, concave)
    }
}

/// One generated corpus entry; `shape` is `None` for an empty mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub label: ClassLabel,
    pub shape: Option<ShapeSpec>,
    /// Single foreground pixel used for "near-empty" normal masks.
    pub speck: Option<(usize, usize)>,
}

pub const CORPUS_CANVAS: usize = 256;

/// Parameters for a three-class corpus: smooth ellipses as benign, deep
/// stars and rosettes as malignant, empty or single-pixel masks as normal.
pub fn corpus_entries(per_class: usize, seed: u64) -> Vec<CorpusEntry> {
    let mut rng = SeededRng::new(seed);
    let mut out = Vec::with_capacity(3 * per_class);
    for label in ClassLabel::ALL {
        for i in 0..per_class {
            let id = format!("{label} ({})", i + 1);
            let rotation = rng.uniform(0.0, 180.0);
            let jitter_seed = rng.next_u64();
            let (shape, speck) = match label {
                ClassLabel::Normal => {
                    let speck = (i % 3 == 2).then(|| {
                        (
                            20 + rng.below(CORPUS_CANVAS as u64 - 40) as usize,
                            20 + rng.below(CORPUS_CANVAS as u64 - 40) as usize,
                        )
                    });
                    (None, speck)
                }
                ClassLabel::Benign => {
                    let a = rng.uniform(40.0, 80.0);
                    let b = a * rng.uniform(0.55, 0.95);
                    (Some(ShapeKind::Ellipse { semi_major: a, semi_minor: b }), None)
                }
                ClassLabel::Malignant => {
                    let radius = rng.uniform(60.0, 95.0);
                    let lobes = 5 + rng.below(4) as u32;
                    let depth = rng.uniform(0.35, 0.55);
                    let kind = if i % 2 == 0 {
                        ShapeKind::Star { radius, lobes, depth }
                    } else {
                        ShapeKind::Rosette { radius, lobes, depth }
                    };
                    (Some(kind), None)
                }
            };
            let shape = shape.map(|kind| {
                ShapeSpec::new(kind, CORPUS_CANVAS)
                    .rotated(rotation)
                    .jittered(jitter_seed, 12.0)
            });
            out.push(CorpusEntry { id, label, shape, speck });
        }
    }
    out
}

pub fn render_entry(entry: &CorpusEntry) -> Result<MaskImage, SynthError> {
    let mut mask = match &entry.shape {
        Some(spec) => render(spec)?,
        None => MaskImage::empty(CORPUS_CANVAS, CORPUS_CANVAS)?,
    };
    if let Some((x, y)) = entry.speck {
        mask.set(x, y, true);
    }
    Ok(mask)
}

/// Writes the corpus in the `root/<class>/<id>.png` + `<id>_mask.png` layout
/// and returns its index.
pub fn synth_corpus(out_dir: &Path, per_class: usize, seed: u64) -> Result<DatasetIndex, SynthError> {
    if per_class < 2 {
        return Err(SynthError::InvalidSpec(format!("per_class must be at least 2, got {per_class}")));
    }
    for entry in corpus_entries(per_class, seed) {
        let dir = out_dir.join(entry.label.as_str());
        fs::create_dir_all(&dir)?;
        let mask = render_entry(&entry)?;
        // flat speckle-free stand-in for the ultrasound frame
        let image = GrayImage::new(
            mask.width(),
            mask.height(),
            mask.pixels().iter().map(|&p| 40 + 120 * p).collect(),
        )?;
        save_gray_png(&image, &dir.join(format!("{}.png", entry.id)))?;
        mask.save_png(&dir.join(format!("{}_mask.png", entry.id)))?;
    }
    Ok(scan_dataset(out_dir)?)
}
