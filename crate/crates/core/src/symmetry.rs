//! Symmetry-axis estimation and mask-to-box conversion.
//!
//! For a pixel set mirrored about some axis through its center of mass, the
//! centered scatter matrix `PᵀP` is diagonalized by the rotation that maps
//! the axis onto +x, so the axis is one of its eigenvectors. We take the
//! eigenvector of the larger eigenvalue, which for elongated symmetric
//! objects (aircraft, vehicles) is the symmetry axis itself.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_area_rect, normalize_angle, AxisAlignedBox, OrientedBox, Point2};
use crate::mask::{centroid, pixel_points, BinaryMask};

/// Eigenvalue-ratio margin below which moments are treated as isotropic.
pub const ISOTROPY_EPS: f64 = 0.05;

/// Categories whose boxes are annotated along their symmetry axis in the
/// default per-category configuration.
pub const SYMMETRIC_CATEGORIES: [&str; 2] = ["plane", "helicopter"];

/// Centered second moments of a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moment2x2 {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl Moment2x2 {
    /// Eigenvalues as `(larger, smaller)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.sxx + self.syy);
        let radius = (0.5 * (self.sxx - self.syy)).hypot(self.sxy);
        (mean + radius, (mean - radius).max(0.0))
    }

    /// `λ_max / λ_min`; infinite for point sets on a line.
    pub fn anisotropy(&self) -> f64 {
        let (hi, lo) = self.eigenvalues();
        if lo <= 0.0 {
            if hi > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        } else {
            hi / lo
        }
    }

    /// Direction of the eigenvector with the larger eigenvalue.
    pub fn principal_angle(&self) -> f64 {
        normalize_angle(0.5 * (2.0 * self.sxy).atan2(self.sxx - self.syy))
    }
}

pub fn second_moments(points: &[Point2], center: Point2) -> Result<Moment2x2> {
    if points.len() < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "second moments need at least 2 points, got {}",
            points.len()
        )));
    }
    let mut m = Moment2x2 {
        sxx: 0.0,
        sxy: 0.0,
        syy: 0.0,
    };
    for p in points {
        let dx = p.x - center.x;
        let dy = p.y - center.y;
        m.sxx += dx * dx;
        m.sxy += dx * dy;
        m.syy += dy * dy;
    }
    Ok(m)
}

/// Principal-axis orientation of the mask's pixel centers, in `[-π/2, π/2)`.
///
/// Fails with [`Error::Isotropic`] when `λ_max/λ_min ≤ 1 + ISOTROPY_EPS`.
pub fn symmetry_axis(m: &BinaryMask) -> Result<f64> {
    let points = pixel_points(m)?;
    let center = centroid(m)?;
    let moments = second_moments(&points, center)?;
    let ratio = moments.anisotropy();
    if ratio <= 1.0 + ISOTROPY_EPS {
        return Err(Error::Isotropic { ratio });
    }
    Ok(moments.principal_angle())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxFit {
    MinimumOnly,
    SymmetryAxis,
}

impl std::str::FromStr for BoxFit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimum-only" => Ok(BoxFit::MinimumOnly),
            "symmetry-axis" => Ok(BoxFit::SymmetryAxis),
            other => Err(Error::invalid(format!(
                "unknown box fit `{other}` (expected minimum-only or symmetry-axis)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConversionMode {
    MinimumOnly,
    SymmetryAxis,
    PerCategory(BTreeMap<String, BoxFit>),
}

impl ConversionMode {
    /// Symmetry axis for the categories in [`SYMMETRIC_CATEGORIES`], minimum
    /// rectangle for everything else.
    pub fn per_category_default<S: AsRef<str>>(categories: &[S]) -> ConversionMode {
        let map = categories
            .iter()
            .map(|c| {
                let c = c.as_ref();
                let fit = if SYMMETRIC_CATEGORIES.contains(&c) {
                    BoxFit::SymmetryAxis
                } else {
                    BoxFit::MinimumOnly
                };
                (c.to_string(), fit)
            })
            .collect();
        ConversionMode::PerCategory(map)
    }

    pub fn resolve(&self, category: &str) -> Result<BoxFit> {
        match self {
            ConversionMode::MinimumOnly => Ok(BoxFit::MinimumOnly),
            ConversionMode::SymmetryAxis => Ok(BoxFit::SymmetryAxis),
            ConversionMode::PerCategory(map) => map.get(category).copied().ok_or_else(|| {
                Error::invalid(format!("category `{category}` missing from per-category conversion map"))
            }),
        }
    }

    /// Checks that a per-category map covers every category in the table.
    pub fn check_total<S: AsRef<str>>(&self, categories: &[S]) -> Result<()> {
        if let ConversionMode::PerCategory(map) = self {
            for c in categories {
                if !map.contains_key(c.as_ref()) {
                    return Err(Error::Config(format!(
                        "per-category conversion map has no entry for `{}`",
                        c.as_ref()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A converted box and how it was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaskBox {
    pub obb: OrientedBox,
    pub fit: BoxFit,
    /// Symmetry-axis fitting was requested but the mask was near-isotropic,
    /// so the minimum rectangle was used instead.
    pub isotropic_fallback: bool,
}

/// Converts a mask to an oriented box enclosing the unit squares of all set
/// pixels (and therefore every pixel center).
pub fn obb_from_mask(m: &BinaryMask, mode: &ConversionMode, category: &str) -> Result<MaskBox> {
    match mode.resolve(category)? {
        BoxFit::MinimumOnly => Ok(MaskBox {
            obb: min_rect_box(m)?,
            fit: BoxFit::MinimumOnly,
            isotropic_fallback: false,
        }),
        BoxFit::SymmetryAxis => match symmetry_axis(m) {
            Ok(angle) => Ok(MaskBox {
                obb: box_at_angle(m, angle)?,
                fit: BoxFit::SymmetryAxis,
                isotropic_fallback: false,
            }),
            Err(Error::Isotropic { .. }) => Ok(MaskBox {
                obb: min_rect_box(m)?,
                fit: BoxFit::MinimumOnly,
                isotropic_fallback: true,
            }),
            Err(e) => Err(e),
        },
    }
}

fn min_rect_box(m: &BinaryMask) -> Result<OrientedBox> {
    min_area_rect(&m.footprint_extremes()?)
}

/// Circumscribed box of the mask footprint with its `w` side along `angle`.
pub fn box_at_angle(m: &BinaryMask, angle: f64) -> Result<OrientedBox> {
    let pts = m.footprint_extremes()?;
    let rotated: Vec<Point2> = pts.iter().map(|p| p.rotate(-angle)).collect();
    let bounds = AxisAlignedBox::from_points(&rotated)?;
    let center = bounds.center().rotate(angle);
    OrientedBox::new(center.x, center.y, bounds.width(), bounds.height(), angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmbiguityReport {
    pub w: f64,
    pub h: f64,
    pub alpha_ratio: f64,
    pub diagonal_d: f64,
    /// `d² − 2wh`; non-positive when a diagonal square can be no larger than
    /// the symmetry-aligned box.
    pub margin: f64,
    pub min_rect_may_differ: bool,
}

/// For a symmetric object with symmetry-aligned box `w × h`, a square whose
/// diagonal lies on the axis has diagonal `d = w + α·h`; it can undercut the
/// aligned box when `d² ≤ 2wh`.
pub fn ambiguity_analysis(w: f64, h: f64, alpha_ratio: f64) -> Result<AmbiguityReport> {
    if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
        return Err(Error::invalid(format!("dimensions must be positive, got w={w} h={h}")));
    }
    if !(0.0..=1.0).contains(&alpha_ratio) {
        return Err(Error::invalid(format!("alpha ratio must lie in [0, 1], got {alpha_ratio}")));
    }
    let d = w + alpha_ratio * h;
    let margin = d * d - 2.0 * w * h;
    Ok(AmbiguityReport {
        w,
        h,
        alpha_ratio,
        diagonal_d: d,
        margin,
        min_rect_may_differ: d * d <= 2.0 * w * h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_diff_mod;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rect_mask(w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w + 10, h + 10, |c, r| c >= 5 && c < w + 5 && r >= 5 && r < h + 5).unwrap()
    }

    #[test]
    fn mirror_symmetry_kills_cross_term() {
        let pts = [
            Point2::new(-1.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(-2.0, 3.0),
            Point2::new(2.0, 3.0),
        ];
        let m = second_moments(&pts, Point2::new(0.0, 1.5)).unwrap();
        assert_eq!(m.sxy, 0.0);
    }

    #[test]
    fn unit_square_corners() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let m = second_moments(&pts, Point2::new(0.5, 0.5)).unwrap();
        assert_eq!((m.sxx, m.sxy, m.syy), (1.0, 0.0, 1.0));
        assert!(second_moments(&pts[..1], Point2::default()).is_err());
    }

    #[test]
    fn axis_of_axis_aligned_rectangle() {
        let m = rect_mask(201, 101);
        assert!(symmetry_axis(&m).unwrap().abs() < 1e-12);
        let tall = rect_mask(21, 61);
        assert!((symmetry_axis(&tall).unwrap() + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn disk_is_isotropic() {
        let disk = BinaryMask::rasterize(101, 101, |p| {
            (p.x - 50.5).hypot(p.y - 50.5) <= 40.0
        })
        .unwrap();
        assert!(matches!(symmetry_axis(&disk), Err(Error::Isotropic { .. })));
        let mb = obb_from_mask(&disk, &ConversionMode::SymmetryAxis, "x").unwrap();
        assert!(mb.isotropic_fallback);
        assert_eq!(mb.fit, BoxFit::MinimumOnly);
    }

    #[test]
    fn rectangle_converts_to_itself() {
        let m = rect_mask(40, 20);
        for mode in [ConversionMode::MinimumOnly, ConversionMode::SymmetryAxis] {
            let b = obb_from_mask(&m, &mode, "any").unwrap().obb;
            assert!((b.area() - 800.0).abs() < 1e-6, "{mode:?}: {b:?}");
            assert!((b.cx() - 25.0).abs() < 1e-9 && (b.cy() - 15.0).abs() < 1e-9);
        }
    }

    #[test]
    fn per_category_dispatch() {
        let cats = ["plane", "ship", "helicopter"];
        let mode = ConversionMode::per_category_default(&cats);
        assert_eq!(mode.resolve("plane").unwrap(), BoxFit::SymmetryAxis);
        assert_eq!(mode.resolve("ship").unwrap(), BoxFit::MinimumOnly);
        assert!(mode.resolve("bridge").is_err());
        assert!(mode.check_total(&["plane", "bridge"]).is_err());
        assert!(mode.check_total(&cats).is_ok());
    }

    #[test]
    fn ambiguity_examples() {
        let r = ambiguity_analysis(1.0, 1.0, 2f64.sqrt() - 1.0).unwrap();
        assert!(r.margin.abs() < 1e-9);
        assert!(ambiguity_analysis(1.0, 1.0, 0.2).unwrap().min_rect_may_differ);
        assert!(!ambiguity_analysis(1.0, 1.0, 0.9).unwrap().min_rect_may_differ);
        assert!(ambiguity_analysis(0.0, 1.0, 0.2).is_err());
        assert!(ambiguity_analysis(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn box_at_angle_matches_rotation() {
        let m = rect_mask(30, 10);
        let b = box_at_angle(&m, PI / 2.0).unwrap();
        assert!((b.w() - 10.0).abs() < 1e-9 && (b.h() - 30.0).abs() < 1e-9);
        assert!(angle_diff_mod(b.angle(), FRAC_PI_2, PI) < 1e-12);
    }
}
