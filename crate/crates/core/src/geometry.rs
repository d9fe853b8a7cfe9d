//! Planar primitives: oriented and axis-aligned boxes, convex hulls, the
//! minimum-area enclosing rectangle and exact rotated-box IoU.
//!
//! Coordinates are image pixels with `y` pointing down and pixel centers at
//! `integer + 0.5`. Angles are radians measured from the +x axis towards +y,
//! normalized to `[-π/2, π/2)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-edge tolerance for polygon clipping.
const CLIP_EPS: f64 = 1e-9;

/// Relative tolerance under which two calipers candidates count as equal area.
const AREA_TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotates about the origin by `angle` radians.
    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Maps an angle onto `[-π/2, π/2)`.
pub fn normalize_angle(angle: f64) -> f64 {
    wrap_half_open(angle, PI)
}

/// Maps `angle` onto `[-period/2, period/2)`.
fn wrap_half_open(angle: f64, period: f64) -> f64 {
    let mut a = angle.rem_euclid(period);
    if a >= period / 2.0 {
        a -= period;
    }
    if a < -period / 2.0 {
        a += period;
    }
    a
}

/// Smallest absolute difference between two orientations taken modulo `period`.
pub fn angle_diff_mod(a: f64, b: f64, period: f64) -> f64 {
    wrap_half_open(a - b, period).abs()
}

/// Rotated rectangle `(cx, cy, w, h, angle)`. `w` is the extent along the
/// direction `angle`, `h` the extent along the perpendicular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrientedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    angle: f64,
}

impl OrientedBox {
    /// Validates the fields and normalizes the angle. Squares get their angle
    /// reduced further to `[-π/4, π/4)` since every quarter turn is the same box.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<Self> {
        if ![cx, cy, w, h, angle].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite box field in ({cx}, {cy}, {w}, {h}, {angle})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid(format!(
                "box extents must be positive, got w={w} h={h}"
            )));
        }
        let angle = if (w - h).abs() <= 1e-12 * w.max(h) {
            wrap_half_open(angle, FRAC_PI_2)
        } else {
            normalize_angle(angle)
        };
        Ok(OrientedBox {
            cx,
            cy,
            w,
            h,
            angle,
        })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// The same rectangle expressed with its angle in `[-π/4, π/4)`, swapping
    /// `w` and `h` when needed.
    pub fn with_small_angle(&self) -> OrientedBox {
        if self.angle >= -FRAC_PI_4 && self.angle < FRAC_PI_4 {
            return *self;
        }
        let angle = wrap_half_open(self.angle, FRAC_PI_2);
        OrientedBox {
            w: self.h,
            h: self.w,
            angle,
            ..*self
        }
    }

    /// Maps a point into the box frame: the box center at the origin, `w`
    /// along +x.
    pub fn to_local(&self, p: Point2) -> Point2 {
        (p - self.center()).rotate(-self.angle)
    }

    /// True when `p` lies inside or within `tol` of the boundary.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        let q = self.to_local(p);
        q.x.abs() <= self.w / 2.0 + tol && q.y.abs() <= self.h / 2.0 + tol
    }

    pub fn polygon(&self) -> ConvexPolygon {
        ConvexPolygon {
            vertices: obb_corners(self, 1.0).to_vec(),
        }
    }

    /// Radius of the circle through the corners.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.w.hypot(self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAlignedBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl AxisAlignedBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) || x1 > x2 || y1 > y2 {
            return Err(Error::invalid(format!(
                "invalid axis-aligned box ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(AxisAlignedBox { x1, y1, x2, y2 })
    }

    /// Tight bounds of a non-empty point set.
    pub fn from_points(points: &[Point2]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("bounds of an empty point set"))?;
        let mut b = AxisAlignedBox {
            x1: first.x,
            y1: first.y,
            x2: first.x,
            y2: first.y,
        };
        for p in &points[1..] {
            b.x1 = b.x1.min(p.x);
            b.y1 = b.y1.min(p.y);
            b.x2 = b.x2.max(p.x);
            b.y2 = b.y2.max(p.y);
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x1 && p.x <= self.x2 && p.y >= self.y1 && p.y <= self.y2
    }
}

/// Convex polygon with vertices in counterclockwise order (positive shoelace
/// area).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        shoelace_area(&self.vertices)
    }

    pub fn into_vertices(self) -> Vec<Point2> {
        self.vertices
    }
}

/// Signed polygon area; positive for counterclockwise vertex order.
pub fn shoelace_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum();
    0.5 * twice
}

/// Corners of `bx` with both extents multiplied by `scale`, counterclockwise,
/// starting at the `(+w/2, +h/2)` corner.
pub fn obb_corners(bx: &OrientedBox, scale: f64) -> [Point2; 4] {
    [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .map(|(i, j)| box_point(bx, scale, i, j))
}

/// `center + i·(scale·w/2)·u + j·(scale·h/2)·v` where `u` is the box
/// direction and `v` its perpendicular.
pub(crate) fn box_point(bx: &OrientedBox, scale: f64, i: f64, j: f64) -> Point2 {
    let (s, c) = bx.angle.sin_cos();
    let hw = 0.5 * scale * bx.w;
    let hh = 0.5 * scale * bx.h;
    Point2::new(
        bx.cx + hw * c * i - hh * s * j,
        bx.cy + hw * s * i + hh * c * j,
    )
}

/// Validated wrapper around [`obb_corners`].
pub fn try_obb_corners(bx: &OrientedBox, scale: f64) -> Result<[Point2; 4]> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("corner scale must be positive, got {scale}")));
    }
    Ok(obb_corners(bx, scale))
}

/// Andrew's monotone chain. Collinear and duplicate points are dropped.
pub fn convex_hull(points: &[Point2]) -> Result<ConvexPolygon> {
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("non-finite point ({}, {})", p.x, p.y)));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "convex hull needs 3 distinct points, got {}",
            pts.len()
        )));
    }

    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    let push_chain = |hull: &mut Vec<Point2>, p: Point2, floor: usize| {
        while hull.len() >= floor + 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if (b - a).cross(p - a) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    };
    for &p in &pts {
        push_chain(&mut hull, p, 0);
    }
    // Upper chain; never pops into the finished lower chain.
    let lower_len = hull.len() - 1;
    for &p in pts.iter().rev().skip(1) {
        push_chain(&mut hull, p, lower_len);
    }
    hull.pop();

    if hull.len() < 3 {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }
    Ok(ConvexPolygon { vertices: hull })
}

/// Minimum-area rectangle enclosing `points`, by rotating calipers over the
/// convex hull. Among equal-area candidates the one with the smallest
/// `|angle|` wins, so the result always has its angle in `[-π/4, π/4]`.
pub fn min_area_rect(points: &[Point2]) -> Result<OrientedBox> {
    let hull = convex_hull(points)?;
    min_area_rect_of_hull(&hull)
}

pub fn min_area_rect_of_hull(hull: &ConvexPolygon) -> Result<OrientedBox> {
    let h = hull.vertices();
    let n = h.len();
    let next = |i: usize| (i + 1) % n;

    let edge_frame = |i: usize| {
        let d = h[next(i)] - h[i];
        let u = d * (1.0 / d.norm());
        (u, Point2::new(-u.y, u.x))
    };

    let (u0, v0) = edge_frame(0);
    let argbest = |key: &dyn Fn(Point2) -> f64| {
        (0..n)
            .max_by(|&a, &b| key(h[a]).total_cmp(&key(h[b])))
            .unwrap_or(0)
    };
    let mut right = argbest(&|p| p.dot(u0));
    let mut top = argbest(&|p| p.dot(v0));
    let mut left = argbest(&|p| -p.dot(u0));

    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..n {
        let (u, v) = edge_frame(i);
        let origin = h[i];
        let advance = |mut idx: usize, key: &dyn Fn(Point2) -> f64| {
            for _ in 0..n {
                if key(h[next(idx)]) > key(h[idx]) {
                    idx = next(idx);
                } else {
                    break;
                }
            }
            idx
        };
        right = advance(right, &|p| (p - origin).dot(u));
        top = advance(top, &|p| (p - origin).dot(v));
        left = advance(left, &|p| -(p - origin).dot(u));

        let umax = (h[right] - origin).dot(u);
        let umin = (h[left] - origin).dot(u);
        let vmax = (h[top] - origin).dot(v);
        let width = umax - umin;
        if width <= 0.0 || vmax <= 0.0 {
            continue;
        }
        let center = origin + u * (0.5 * (umin + umax)) + v * (0.5 * vmax);
        let candidate =
            OrientedBox::new(center.x, center.y, width, vmax, u.y.atan2(u.x))?.with_small_angle();
        let area = width * vmax;

        best = match best {
            None => Some((area, candidate)),
            Some((best_area, incumbent)) => {
                let tie = (area - best_area).abs() <= AREA_TIE_RTOL * best_area;
                let better = if tie {
                    angle_key(&candidate) < angle_key(&incumbent)
                } else {
                    area < best_area
                };
                if better {
                    Some((area.min(best_area), candidate))
                } else {
                    Some((best_area, incumbent))
                }
            }
        };
    }
    best.map(|(_, b)| b)
        .ok_or_else(|| Error::DegenerateGeometry("no valid calipers candidate".into()))
}

fn angle_key(b: &OrientedBox) -> (f64, f64) {
    // Round away float noise so that nearly-equal angles compare as equal.
    let q = |a: f64| (a * 1e9).round() / 1e9;
    (q(b.angle.abs()), q(b.angle))
}

/// Clips `subject` against the convex, counterclockwise `clip` polygon.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for k in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[k];
        let b = clip[(k + 1) % m];
        let edge = b - a;
        let scale = edge.norm().max(1.0);
        let inside = |p: Point2| edge.cross(p - a) >= -CLIP_EPS * scale;

        let input = std::mem::take(&mut output);
        let len = input.len();
        for idx in 0..len {
            let cur = input[idx];
            let prev = input[(idx + len - 1) % len];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Intersection of segment `p→q` with the infinite line through `a`, `b`.
fn line_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let edge = b - a;
    let dp = edge.cross(p - a);
    let dq = edge.cross(q - a);
    let denom = dp - dq;
    if denom.abs() < f64::MIN_POSITIVE {
        return p;
    }
    let t = dp / denom;
    p + (q - p) * t
}

/// Intersection over union of two rotated rectangles.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> Result<f64> {
    let area_a = a.area();
    let area_b = b.area();
    if !(area_a > 0.0 && area_a.is_finite() && area_b > 0.0 && area_b.is_finite()) {
        return Err(Error::invalid("rotated IoU of a zero-area box"));
    }
    if (a.center() - b.center()).norm() > a.circumradius() + b.circumradius() {
        return Ok(0.0);
    }
    let inter = shoelace_area(&clip_convex(&obb_corners(a, 1.0), &obb_corners(b, 1.0))).max(0.0);
    let union = area_a + area_b - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_6;

    fn bx(cx: f64, cy: f64, w: f64, h: f64, a: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, w, h, a).unwrap()
    }

    fn same_set(a: &[Point2], b: &[Point2], tol: f64) -> bool {
        a.len() == b.len()
            && a.iter()
                .all(|p| b.iter().any(|q| (*p - *q).norm() <= tol))
    }

    #[test]
    fn corners_axis_aligned() {
        let c = obb_corners(&bx(0.0, 0.0, 2.0, 2.0, 0.0), 1.0);
        let want = [
            Point2::new(1.0, 1.0),
            Point2::new(-1.0, 1.0),
            Point2::new(-1.0, -1.0),
            Point2::new(1.0, -1.0),
        ];
        assert!(same_set(&c, &want, 1e-12));
        assert!(shoelace_area(&c) > 0.0);
    }

    #[test]
    fn corners_square_quarter_turn() {
        let a = obb_corners(&bx(0.0, 0.0, 2.0, 2.0, 0.0), 1.0);
        let b = obb_corners(&bx(0.0, 0.0, 2.0, 2.0, FRAC_PI_2), 1.0);
        assert!(same_set(&a, &b, 1e-12));
    }

    #[test]
    fn corners_scaled_rotated() {
        // Evaluated by hand: half extents 2.1 and 1.05, cos30 = √3/2, sin30 = 1/2.
        let c = obb_corners(&bx(5.0, 5.0, 4.0, 2.0, FRAC_PI_6), 1.05);
        let (hw, hh) = (2.1, 1.05);
        let (cs, sn) = (3f64.sqrt() / 2.0, 0.5);
        let want: Vec<Point2> = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|&(i, j)| {
                Point2::new(5.0 + hw * cs * i - hh * sn * j, 5.0 + hw * sn * i + hh * cs * j)
            })
            .collect();
        assert!(same_set(&c, &want, 1e-12));
        assert_eq!(c[0], want[0]);
    }

    #[test]
    fn corners_reject_bad_scale() {
        assert!(try_obb_corners(&bx(0.0, 0.0, 1.0, 1.0, 0.0), 0.0).is_err());
        assert!(OrientedBox::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(OrientedBox::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn angle_normalization() {
        let b = bx(0.0, 0.0, 4.0, 2.0, PI / 2.0);
        assert!((b.angle() + FRAC_PI_2).abs() < 1e-12);
        let b = bx(0.0, 0.0, 4.0, 2.0, 3.0 * PI / 4.0);
        assert!((b.angle() + FRAC_PI_4).abs() < 1e-12);
        let sq = bx(0.0, 0.0, 3.0, 3.0, 0.3 + FRAC_PI_2);
        assert!((sq.angle() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn hull_drops_interior_point() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.5, 0.5),
        ];
        let hull = convex_hull(&pts).unwrap();
        assert!(same_set(hull.vertices(), &pts[..4], 0.0));
        assert!((hull.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hull_keeps_hexagon() {
        let hex: Vec<Point2> = (0..6)
            .map(|k| Point2::new(1.0, 0.0).rotate(k as f64 * PI / 3.0))
            .collect();
        let hull = convex_hull(&hex).unwrap();
        assert!(same_set(hull.vertices(), &hex, 1e-12));
    }

    #[test]
    fn hull_rejects_collinear() {
        let pts: Vec<Point2> = (0..5).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(convex_hull(&pts), Err(Error::DegenerateGeometry(_))));
        assert!(convex_hull(&pts[..2]).is_err());
    }

    #[test]
    fn min_rect_of_rectangle() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 2.0),
            Point2::new(0.0, 2.0),
        ];
        let r = min_area_rect(&pts).unwrap();
        assert!((r.w() - 4.0).abs() < 1e-9 && (r.h() - 2.0).abs() < 1e-9);
        assert!(r.angle().abs() < 1e-12);
        assert!((r.cx() - 2.0).abs() < 1e-12 && (r.cy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_rect_of_rotated_rectangle() {
        let src = bx(10.0, -3.0, 4.0, 2.0, FRAC_PI_6);
        let r = min_area_rect(&obb_corners(&src, 1.0)).unwrap();
        assert!((r.area() - 8.0).abs() < 1e-6);
        assert!(angle_diff_mod(r.angle(), FRAC_PI_6, FRAC_PI_2) < 1e-6);
    }

    #[test]
    fn iou_basic_cases() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((rotated_iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = bx(0.5, 0.0, 1.0, 1.0, 0.0);
        assert!((rotated_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let far = bx(10.0, 10.0, 1.0, 1.0, 0.4);
        assert_eq!(rotated_iou(&a, &far).unwrap(), 0.0);
    }

    #[test]
    fn iou_rotated_square_in_square() {
        // A square rotated 45° inscribed in a 2×2 square has area 2.
        let outer = bx(0.0, 0.0, 2.0, 2.0, 0.0);
        let inner = bx(0.0, 0.0, 2f64.sqrt(), 2f64.sqrt(), FRAC_PI_4);
        assert!((rotated_iou(&outer, &inner).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_have_zero_iou() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = bx(1.0, 0.0, 1.0, 1.0, 0.0);
        assert!(rotated_iou(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn small_angle_form_is_same_rectangle() {
        let b = bx(1.0, 2.0, 5.0, 3.0, 1.2);
        let s = b.with_small_angle();
        assert!(s.angle() >= -FRAC_PI_4 && s.angle() < FRAC_PI_4);
        assert!(same_set(&obb_corners(&b, 1.0), &obb_corners(&s, 1.0), 1e-9));
    }
}
