//! Equivalent ellipse from second-order moments.

use serde::{Deserialize, Serialize};

use super::MorphError;
use crate::contour::{MinAreaRect, Point};
use crate::imgproc::MaskImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit {
    pub center: Point,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis direction in degrees, image coordinates (y down), in (-90, 90].
    pub angle: f64,
}

/// Ellipse with the region's pixel area, centroid and principal-axis
/// orientation; the axis ratio is the square root of the covariance
/// eigenvalue ratio.
pub fn equivalent_ellipse(mask: &MaskImage) -> Result<EllipseFit, MorphError> {
    // integer sums keep the moments exact, so a 90-degree rotation of the
    // mask swaps mu20 and mu02 bit for bit
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128, 0i128, 0i128, 0i128);
    for (x, y) in mask.foreground() {
        let (x, y) = (x as i128, y as i128);
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    if n < 3 {
        return Err(MorphError::DegenerateRegion);
    }
    // n^2 times the central second moments
    let m20 = (n * sxx - sx * sx) as f64;
    let m02 = (n * syy - sy * sy) as f64;
    let m11 = (n * sxy - sx * sy) as f64;
    let n2 = (n * n) as f64;
    let (mu20, mu02, mu11) = (m20 / n2, m02 / n2, m11 / n2);
    let mean = (mu20 + mu02) / 2.0;
    let spread = ((mu20 - mu02) / 2.0).hypot(mu11);
    let (l1, l2) = (mean + spread, mean - spread);
    // collinear pixels have exactly one zero eigenvalue; the exact test is
    // on the integer determinant of the covariance
    let det = (n * sxx - sx * sx) * (n * syy - sy * sy) - (n * sxy - sx * sy) * (n * sxy - sx * sy);
    if det == 0 || l2 <= 0.0 {
        return Err(MorphError::DegenerateRegion);
    }
    let area = n as f64;
    let ratio = (l1 / l2).sqrt();
    let semi_major = (area * ratio / std::f64::consts::PI).sqrt();
    let semi_minor = (area / (ratio * std::f64::consts::PI)).sqrt();
    let angle = 0.5 * (2.0 * mu11).atan2(mu20 - mu02).to_degrees();
    Ok(EllipseFit {
        center: Point::new(sx as f64 / area, sy as f64 / area),
        semi_major,
        semi_minor,
        angle,
    })
}

/// Ramanujan's second approximation.
pub fn ellipse_perimeter(e: &EllipseFit) -> f64 {
    ramanujan(e.semi_major, e.semi_minor)
}

pub fn ramanujan(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        return 0.0;
    }
    let h = ((a - b) / (a + b)).powi(2);
    std::f64::consts::PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}

/// Ellipse inscribed in a rotated rectangle (touching all four sides).
pub fn inscribed_in_rect(r: &MinAreaRect) -> EllipseFit {
    let (a, b, angle) = if r.width >= r.height {
        (r.width / 2.0, r.height / 2.0, r.angle)
    } else {
        (r.height / 2.0, r.width / 2.0, r.angle - 90.0)
    };
    EllipseFit {
        center: r.center,
        semi_major: a,
        semi_minor: b,
        angle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthkit::{render, ShapeKind, ShapeSpec};
    use std::f64::consts::PI;

    /// Arc length by composite Simpson on the parametric form.
    fn quadrature_perimeter(a: f64, b: f64) -> f64 {
        let steps = 200_000;
        let f = |t: f64| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
        let hgt = 2.0 * PI / steps as f64;
        let mut s = f(0.0) + f(2.0 * PI);
        for i in 1..steps {
            s += f(i as f64 * hgt) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * hgt / 3.0
    }

    #[test]
    fn perimeter_examples() {
        assert!((ramanujan(7.0, 7.0) - 2.0 * PI * 7.0).abs() < 1e-9);
        assert!((ramanujan(5.0, 3.0) - 25.527).abs() < 1e-3);
        assert!((quadrature_perimeter(5.0, 3.0) - 25.527).abs() < 1e-3);
        let q = quadrature_perimeter(10.0, 1.0);
        assert!((ramanujan(10.0, 1.0) - q).abs() / q < 0.005);
    }

    #[test]
    fn disk_is_isotropic() {
        let m = render(&ShapeSpec::new(ShapeKind::Disk { radius: 20.0 }, 64)).unwrap();
        let e = equivalent_ellipse(&m).unwrap();
        assert!((e.semi_major / e.semi_minor - 1.0).abs() < 0.02);
        assert!((PI * e.semi_major * e.semi_minor - m.count() as f64).abs() / (m.count() as f64) < 1e-6);
        assert!((e.center.x - 31.5).abs() < 1e-9 && (e.center.y - 31.5).abs() < 1e-9);
    }

    #[test]
    fn rectangle_axis_ratio_and_rotation() {
        let spec = ShapeSpec::new(ShapeKind::Rect { width: 40.0, height: 10.0 }, 128);
        let e = equivalent_ellipse(&render(&spec).unwrap()).unwrap();
        assert!(e.angle.abs() < 1e-9);
        assert!((e.semi_major / e.semi_minor - 4.0).abs() / 4.0 < 0.05);
        let e30 = equivalent_ellipse(&render(&spec.rotated(30.0)).unwrap()).unwrap();
        assert!((e30.angle - 30.0).abs() < 1.0, "{}", e30.angle);
        assert!(e30.semi_major >= e30.semi_minor);
    }

    #[test]
    fn degenerate_regions() {
        let line = MaskImage::from_fn(20, 20, |x, y| x == y).unwrap();
        assert!(matches!(equivalent_ellipse(&line), Err(MorphError::DegenerateRegion)));
        let dot = MaskImage::from_fn(5, 5, |x, y| x == 2 && y == 2).unwrap();
        assert!(matches!(equivalent_ellipse(&dot), Err(MorphError::DegenerateRegion)));
        let ell = MaskImage::from_fn(5, 5, |x, y| (x == 1 && y < 3) || (y == 2 && x < 3)).unwrap();
        assert!(equivalent_ellipse(&ell).is_ok());
    }

    #[test]
    fn inscribed_ellipse_orders_axes() {
        let r = MinAreaRect {
            center: Point::new(1.0, 2.0),
            width: 4.0,
            height: 10.0,
            angle: 30.0,
        };
        let e = inscribed_in_rect(&r);
        assert_eq!((e.semi_major, e.semi_minor), (5.0, 2.0));
        assert_eq!(e.angle, -60.0);
    }
}
