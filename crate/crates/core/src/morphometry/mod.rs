//! The seventeen-feature shape description of a lesion mask.
//!
//! Two boundaries feed the features. Length and area measures use the crack
//! outline smoothed by a three-vertex moving average: pixel-centre chains
//! undercount area by half the boundary length and overcount the length of
//! any curve by the 8-chain staircase error (about 5% on a circle), which
//! together push form factor, convexity and roundness well outside their
//! analytic values. Corner analysis (CSPI, lobes) uses the raw pixel-centre
//! trace, where a k-step angle is well defined. Bounding boxes count whole
//! pixels.

pub mod curvature;
pub mod ellipse;
pub mod lobes;
pub mod skeleton;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{
    bounding_rect, convex_hull, min_area_rect, polygon_area, polygon_perimeter, trace_contour, trace_outline,
    BoundingRect, Contour, MinAreaRect,
};
use crate::imgproc::{fill_holes, largest_component, resize_nearest, Connectivity, GrayImage, ImageError, MaskImage};

pub use curvature::{cspi, curvature_points, suppress_points, suppress_points_within, CurvaturePoint, PointKind};
pub use ellipse::{ellipse_perimeter, equivalent_ellipse, EllipseFit};
pub use lobes::{lobulation_index, Lobe};
pub use skeleton::skeletonize;

#[derive(Debug, Error, PartialEq)]
pub enum MorphError {
    #[error("contour has {len} points, need more than {} for k = {k}", 2 * k)]
    ContourTooShort { len: usize, k: usize },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("region is collinear or too small for an ellipse fit")]
    DegenerateRegion,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Column names of the numeric features, in table order.
pub const FEATURE_NAMES: [&str; 18] = [
    "perimeter",
    "height",
    "width",
    "area",
    "cspi",
    "li",
    "ens",
    "aspect_ratio",
    "form_factor",
    "roundness",
    "solidity",
    "major_axis",
    "minor_axis",
    "enc",
    "ls_ratio",
    "convexity",
    "extent",
    "tca_ratio",
];

/// Width of the classifier input: every feature column except `tca_ratio`,
/// which repeats `solidity` and would give the normalizer a duplicated axis.
pub const MODEL_INPUT_DIM: usize = 17;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub perimeter: f64,
    pub height: f64,
    pub width: f64,
    pub area: f64,
    pub cspi: u32,
    pub lobulation_index: f64,
    pub ens: u32,
    pub aspect_ratio: f64,
    pub form_factor: f64,
    pub roundness: f64,
    pub solidity: f64,
    pub major_axis: f64,
    pub minor_axis: f64,
    pub enc: f64,
    pub ls_ratio: f64,
    pub convexity: f64,
    pub extent: f64,
    pub tca_ratio: f64,
    pub degenerate: bool,
}

impl FeatureVector {
    pub fn degenerate() -> Self {
        Self {
            degenerate: true,
            ..Self::default()
        }
    }

    /// Numeric columns in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; 18] {
        [
            self.perimeter,
            self.height,
            self.width,
            self.area,
            self.cspi as f64,
            self.lobulation_index,
            self.ens as f64,
            self.aspect_ratio,
            self.form_factor,
            self.roundness,
            self.solidity,
            self.major_axis,
            self.minor_axis,
            self.enc,
            self.ls_ratio,
            self.convexity,
            self.extent,
            self.tca_ratio,
        ]
    }

    pub fn from_values(v: &[f64; 18], degenerate: bool) -> Self {
        Self {
            perimeter: v[0],
            height: v[1],
            width: v[2],
            area: v[3],
            cspi: v[4] as u32,
            lobulation_index: v[5],
            ens: v[6] as u32,
            aspect_ratio: v[7],
            form_factor: v[8],
            roundness: v[9],
            solidity: v[10],
            major_axis: v[11],
            minor_axis: v[12],
            enc: v[13],
            ls_ratio: v[14],
            convexity: v[15],
            extent: v[16],
            tca_ratio: v[17],
            degenerate,
        }
    }

    /// The classifier's input row.
    pub fn model_input(&self) -> [f64; MODEL_INPUT_DIM] {
        let v = self.values();
        let mut out = [0.0; MODEL_INPUT_DIM];
        out.copy_from_slice(&v[..MODEL_INPUT_DIM]);
        out
    }

    /// The scale-free columns.
    pub fn dimensionless(&self) -> [(&'static str, f64); 9] {
        [
            ("form_factor", self.form_factor),
            ("roundness", self.roundness),
            ("solidity", self.solidity),
            ("enc", self.enc),
            ("ls_ratio", self.ls_ratio),
            ("convexity", self.convexity),
            ("extent", self.extent),
            ("tca_ratio", self.tca_ratio),
            ("aspect_ratio", self.aspect_ratio),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundnessDiameter {
    /// Major axis of the equivalent ellipse.
    #[default]
    EllipseMajor,
    /// Largest distance between two hull vertices.
    HullDiameter,
}

/// How far a run of same-kind curvature points may stretch before it counts
/// as two corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suppression {
    /// Runs break where consecutive points are more than `2k` steps apart.
    #[default]
    Windowed,
    /// Only a point of the other kind breaks a run.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Square side the mask is resampled to first; `None` keeps the raw grid.
    pub working_size: Option<usize>,
    pub k: usize,
    pub smooth_threshold: f64,
    pub connectivity: Connectivity,
    pub roundness: RoundnessDiameter,
    pub suppression: Suppression,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            working_size: Some(256),
            k: 5,
            smooth_threshold: 40.0,
            connectivity: Connectivity::Eight,
            roundness: RoundnessDiameter::EllipseMajor,
            suppression: Suppression::Windowed,
        }
    }
}

impl ExtractOptions {
    pub fn raw() -> Self {
        Self {
            working_size: None,
            ..Self::default()
        }
    }
}

/// Intermediate results kept for inspection and overlays.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub region_pixels: usize,
    pub contour: Contour,
    pub outline_points: usize,
    /// Suppressed convex/concave points, indices into `contour`.
    pub curvature: Vec<CurvaturePoint>,
    pub lobes: Vec<Lobe>,
    pub ellipse: Option<EllipseFit>,
    pub min_area_rect: Option<MinAreaRect>,
    /// Ellipse inscribed in the minimum-area rectangle.
    pub rect_ellipse: Option<EllipseFit>,
    pub bounding_rect: Option<BoundingRect>,
    pub hull_diameter: f64,
    pub notes: Vec<String>,
}

/// The grid features are measured on: `mask` resampled to the working size,
/// or `mask` itself when no working size is set or it already matches.
pub fn working_mask(mask: &MaskImage, opts: &ExtractOptions) -> MaskImage {
    match opts.working_size {
        Some(s) if s > 0 && (mask.width() != s || mask.height() != s) => {
            resize_nearest(mask, s, s).expect("non-zero size")
        }
        _ => mask.clone(),
    }
}

pub fn extract_features(mask: &MaskImage) -> FeatureVector {
    analyze(mask, &ExtractOptions::default()).0
}

pub fn extract_features_with(mask: &MaskImage, opts: &ExtractOptions) -> FeatureVector {
    analyze(mask, opts).0
}

/// Computes the features and the intermediate geometry. Never fails:
/// regions too small to have a boundary come back flagged and zeroed.
pub fn analyze(mask: &MaskImage, opts: &ExtractOptions) -> (FeatureVector, Diagnostics) {
    let mut diag = Diagnostics::default();
    let mask = working_mask(mask, opts);
    let region = fill_holes(&largest_component(&mask, opts.connectivity), opts.connectivity);
    diag.region_pixels = region.count();
    let Ok(contour) = trace_contour(&region) else {
        diag.notes.push("empty mask".into());
        return (FeatureVector::degenerate(), diag);
    };
    if contour.is_degenerate() {
        diag.notes.push(format!("boundary has {} points", contour.len()));
        diag.contour = contour;
        return (FeatureVector::degenerate(), diag);
    }
    let outline = trace_outline(&region).expect("region is non-empty").smoothed(1);
    diag.outline_points = outline.len();

    let area = polygon_area(&outline);
    let perimeter = polygon_perimeter(&outline);
    let hull = convex_hull(&outline);
    let hull_area = polygon_area(&hull);
    let hull_perimeter = polygon_perimeter(&hull);
    let br = bounding_rect(&contour);
    let (width, height) = (br.width as f64, br.height as f64);
    diag.bounding_rect = Some(br);
    diag.hull_diameter = diameter(&hull);
    let mar = min_area_rect(&outline);
    diag.min_area_rect = Some(mar);
    diag.rect_ellipse = Some(ellipse::inscribed_in_rect(&mar));

    let mut fv = FeatureVector {
        perimeter,
        height,
        width,
        area,
        aspect_ratio: height / width,
        form_factor: 4.0 * PI * area / (perimeter * perimeter),
        solidity: area / hull_area,
        tca_ratio: area / hull_area,
        convexity: hull_perimeter / perimeter,
        extent: area / (width * height),
        ..FeatureVector::default()
    };

    match curvature_points(&contour, opts.k, opts.smooth_threshold) {
        Ok(points) => {
            let kept = match opts.suppression {
                Suppression::Windowed => suppress_points_within(&points, contour.len(), 2 * opts.k),
                Suppression::Global => suppress_points(&points),
            };
            let concave: Vec<usize> = kept.iter().filter(|p| p.kind == PointKind::Concave).map(|p| p.index).collect();
            fv.cspi = cspi(&kept);
            diag.lobes = lobes::lobes(&contour, &concave);
            if diag.lobes.iter().any(|l| l.self_intersecting) {
                diag.notes.push("lobe chord crosses the boundary".into());
            }
            fv.lobulation_index = lobes::index_from_lobes(&diag.lobes);
            diag.curvature = kept;
        }
        Err(e) => diag.notes.push(format!("curvature skipped: {e}")),
    }

    fv.ens = skeletonize(&region).expect("region is non-empty");

    match equivalent_ellipse(&region) {
        Ok(e) => {
            let max_diameter = match opts.roundness {
                RoundnessDiameter::EllipseMajor => 2.0 * e.semi_major,
                RoundnessDiameter::HullDiameter => diag.hull_diameter,
            };
            fv.major_axis = 2.0 * e.semi_major;
            fv.minor_axis = 2.0 * e.semi_minor;
            fv.ls_ratio = e.semi_major / e.semi_minor;
            fv.roundness = 4.0 * area / (PI * max_diameter * max_diameter);
            fv.enc = ellipse_perimeter(&e) / perimeter;
            diag.ellipse = Some(e);
        }
        Err(e) => {
            diag.notes.push(e.to_string());
            fv.degenerate = true;
        }
    }
    diag.contour = contour;
    (fv, diag)
}

fn diameter(hull: &Contour) -> f64 {
    let p = &hull.points;
    let mut best = 0.0f64;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            best = best.max(p[i].dist(p[j]));
        }
    }
    best
}

/// Region in dark gray with the suppressed convex points drawn gray and the
/// concave points white, each as a 5x5 dot, over the mask's own grid.
pub fn render_overlay(mask: &MaskImage, diag: &Diagnostics) -> Result<GrayImage, ImageError> {
    let (w, h) = (mask.width(), mask.height());
    let mut px: Vec<u8> = mask.pixels().iter().map(|&p| p * 60).collect();
    for p in &diag.contour.points {
        let (x, y) = (p.x as usize, p.y as usize);
        if x < w && y < h {
            px[y * w + x] = 90;
        }
    }
    for cp in &diag.curvature {
        let Some(p) = diag.contour.points.get(cp.index) else { continue };
        let shade = match cp.kind {
            PointKind::Convex => 150,
            PointKind::Concave => 255,
            PointKind::Smooth => continue,
        };
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let (x, y) = (p.x as i64 + dx, p.y as i64 + dy);
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    px[y as usize * w + x as usize] = shade;
                }
            }
        }
    }
    GrayImage::new(w, h, px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::{oracles, render, ShapeKind, ShapeSpec};

    fn raw(kind: ShapeKind, canvas: usize) -> FeatureVector {
        extract_features_with(&render(&ShapeSpec::new(kind, canvas)).unwrap(), &ExtractOptions::raw())
    }

    #[test]
    fn disk_targets() {
        let f = raw(ShapeKind::Disk { radius: 50.0 }, 128);
        assert!(!f.degenerate);
        assert!((0.95..=1.01).contains(&f.form_factor), "ff {}", f.form_factor);
        assert!((0.95..=1.05).contains(&f.roundness), "roundness {}", f.roundness);
        assert!(f.solidity >= 0.99, "solidity {}", f.solidity);
        assert!(f.convexity >= 0.99, "convexity {}", f.convexity);
        assert!((0.97..=1.03).contains(&f.enc), "enc {}", f.enc);
        assert!((0.76..=0.80).contains(&f.extent), "extent {}", f.extent);
        assert_eq!(f.cspi, 0);
        assert_eq!(f.lobulation_index, 0.0);
    }

    #[test]
    fn square_targets() {
        let f = raw(ShapeKind::Rect { width: 80.0, height: 80.0 }, 128);
        assert!(f.extent >= 0.99, "extent {}", f.extent);
        assert!((f.form_factor - PI / 4.0).abs() <= 0.02, "ff {}", f.form_factor);
        assert_eq!((f.width, f.height), (80.0, 80.0));
    }

    #[test]
    fn star_against_its_hull() {
        let spec = ShapeSpec::new(ShapeKind::Star { radius: 50.0, lobes: 5, depth: 0.5 }, 128);
        let star = render(&spec).unwrap();
        let hull = spec.boundary_polygon(8);
        let hull = convex_hull(&hull);
        let filled = MaskImage::from_fn(128, 128, |x, y| inside_convex(&hull, x as f64, y as f64)).unwrap();
        let (a, b) = (extract_features_with(&star, &ExtractOptions::raw()), extract_features_with(&filled, &ExtractOptions::raw()));
        assert!(a.solidity < b.solidity);
        assert!(a.convexity < b.convexity);
        assert!(a.form_factor < b.form_factor);
        assert!(a.cspi > b.cspi);
        assert!(a.ens > b.ens);
        assert_eq!(a.cspi, 10);
    }

    fn inside_convex(h: &Contour, x: f64, y: f64) -> bool {
        let n = h.len();
        (0..n).all(|i| {
            let (a, b) = (h.points[i], h.points[(i + 1) % n]);
            (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x) >= 0.0
        })
    }

    #[test]
    fn identities_hold() {
        for kind in [
            ShapeKind::Ellipse { semi_major: 50.0, semi_minor: 20.0 },
            ShapeKind::Rosette { radius: 55.0, lobes: 6, depth: 0.4 },
        ] {
            let f = raw(kind, 128);
            assert_eq!(f.solidity, f.tca_ratio);
            assert!((f.ls_ratio - f.major_axis / f.minor_axis).abs() < 1e-9);
            assert!(f.ls_ratio >= 1.0);
            assert_eq!(f.cspi % 2, 0);
            assert!(f.lobulation_index >= 0.0);
            for v in [f.convexity, f.solidity, f.extent] {
                assert!(v > 0.0 && v <= 1.0);
            }
        }
    }

    #[test]
    fn tiny_masks_are_flagged_not_fatal() {
        let empty = MaskImage::empty(16, 16).unwrap();
        assert_eq!(extract_features(&empty), FeatureVector::degenerate());
        let dot = MaskImage::from_fn(16, 16, |x, y| x == 5 && y == 5).unwrap();
        assert!(extract_features_with(&dot, &ExtractOptions::raw()).degenerate);
        let line = MaskImage::from_fn(16, 16, |x, y| y == 5 && (2..12).contains(&x)).unwrap();
        let f = extract_features_with(&line, &ExtractOptions::raw());
        assert!(f.degenerate);
        assert_eq!(f.major_axis, 0.0);
    }

    #[test]
    fn area_tracks_pixel_count() {
        for kind in [
            ShapeKind::Disk { radius: 30.0 },
            ShapeKind::Star { radius: 50.0, lobes: 7, depth: 0.45 },
            ShapeKind::Plus { span: 90.0, arm: 24.0 },
        ] {
            let m = render(&ShapeSpec::new(kind, 128).rotated(13.0)).unwrap();
            let f = extract_features_with(&m, &ExtractOptions::raw());
            let n = oracles::pixel_area(&m) as f64;
            assert!((f.area - n).abs() / n < 0.05, "{kind:?}: {} vs {n}", f.area);
        }
    }

    #[test]
    fn hull_diameter_roundness_option() {
        let m = render(&ShapeSpec::new(ShapeKind::Disk { radius: 40.0 }, 128)).unwrap();
        let opts = ExtractOptions {
            roundness: RoundnessDiameter::HullDiameter,
            ..ExtractOptions::raw()
        };
        let f = extract_features_with(&m, &opts);
        assert!((f.roundness - 1.0).abs() < 0.05, "{}", f.roundness);
    }

    #[test]
    fn working_size_resamples() {
        let m = render(&ShapeSpec::new(ShapeKind::Disk { radius: 30.0 }, 128)).unwrap();
        let (f, d) = analyze(&m, &ExtractOptions::default());
        assert!((f.area / (PI * 60.0 * 60.0) - 1.0).abs() < 0.03);
        assert!(d.ellipse.is_some());
        let overlay = render_overlay(&resize_nearest(&m, 256, 256).unwrap(), &d).unwrap();
        assert_eq!(overlay.width(), 256);
    }

    #[test]
    fn overlay_marks_points() {
        let m = render(&ShapeSpec::new(ShapeKind::Plus { span: 60.0, arm: 20.0 }, 96)).unwrap();
        let (_, d) = analyze(&m, &ExtractOptions::raw());
        let img = render_overlay(&m, &d).unwrap();
        assert!(img.pixels().contains(&255));
        assert!(img.pixels().contains(&150));
    }
}
