//! Slow, obviously-correct reference implementations used to check the
//! library.
#![allow(dead_code)]

pub mod schema;

use obblabel::geometry::{OrientedBox, Point2};
use obblabel::mask::BinaryMask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Hull vertices by brute force: `p` is extreme when some edge through `p`
/// has every other point strictly on one side or on the segment.
pub fn brute_hull(points: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::new();
    let n = points.len();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (points[i], points[j]);
            if a == b {
                continue;
            }
            let all_left = points.iter().all(|&p| {
                let c = (b - a).cross(p - a);
                if c.abs() <= 1e-9 * (b - a).norm() {
                    // Collinear points must lie within the segment.
                    let t = (p - a).dot(b - a) / (b - a).dot(b - a);
                    (-1e-12..=1.0 + 1e-12).contains(&t)
                } else {
                    c > 0.0
                }
            });
            if all_left {
                for q in [a, b] {
                    if !out.contains(&q) {
                        out.push(q);
                    }
                }
            }
        }
    }
    out
}

/// Smallest bounding-rectangle area over orientations sampled every `step`
/// degrees in `[0°, 90°)`.
pub fn sweep_min_rect_area(points: &[Point2], step_deg: f64) -> f64 {
    let steps = (90.0 / step_deg).round() as usize;
    (0..steps)
        .map(|k| {
            let t = (k as f64 * step_deg).to_radians();
            let (u, v) = (Point2::new(t.cos(), t.sin()), Point2::new(-t.sin(), t.cos()));
            let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in points {
                lo_u = lo_u.min(p.dot(u));
                hi_u = hi_u.max(p.dot(u));
                lo_v = lo_v.min(p.dot(v));
                hi_v = hi_v.max(p.dot(v));
            }
            (hi_u - lo_u) * (hi_v - lo_v)
        })
        .fold(f64::INFINITY, f64::min)
}

fn inside(b: &OrientedBox, p: Point2) -> bool {
    let (s, c) = b.angle().sin_cos();
    let (dx, dy) = (p.x - b.cx(), p.y - b.cy());
    let u = c * dx + s * dy;
    let v = -s * dx + c * dy;
    u.abs() <= b.w() / 2.0 && v.abs() <= b.h() / 2.0
}

/// IoU by sampling an `n × n` grid over the joint bounding square.
pub fn raster_iou(a: &OrientedBox, b: &OrientedBox, n: usize) -> f64 {
    let ra = 0.5 * a.w().hypot(a.h());
    let rb = 0.5 * b.w().hypot(b.h());
    let x0 = (a.cx() - ra).min(b.cx() - rb);
    let x1 = (a.cx() + ra).max(b.cx() + rb);
    let y0 = (a.cy() - ra).min(b.cy() - rb);
    let y1 = (a.cy() + ra).max(b.cy() + rb);
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let p = Point2::new(x0 + (i as f64 + 0.5) * dx, y0 + (j as f64 + 0.5) * dy);
            let (ia, ib) = (inside(a, p), inside(b, p));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Direction in `[0°, 180°)` maximizing the variance of the projected pixel
/// centers, sampled every `step` degrees.
pub fn sweep_symmetry_axis_deg(m: &BinaryMask, step_deg: f64) -> f64 {
    let pts: Vec<Point2> = m
        .set_pixels()
        .map(|(c, r)| Point2::new(c as f64 + 0.5, r as f64 + 0.5))
        .collect();
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Point2::new(0.0, 0.0), |acc, p| acc + *p) * (1.0 / n);
    let steps = (180.0 / step_deg).round() as usize;
    let mut best = (f64::MIN, 0.0);
    for k in 0..steps {
        let deg = k as f64 * step_deg;
        let t = deg.to_radians();
        let u = Point2::new(t.cos(), t.sin());
        let var: f64 = pts.iter().map(|p| (*p - mean).dot(u).powi(2)).sum();
        if var > best.0 {
            best = (var, deg);
        }
    }
    best.1
}

/// `|a − b|` in degrees modulo `period` degrees.
pub fn deg_diff_mod(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Random box with center in `[0, 20)²` and sides in `[0.5, 10)`.
pub fn random_box(rng: &mut ChaCha8Rng) -> OrientedBox {
    OrientedBox::new(
        rng.gen_range(0.0..20.0),
        rng.gen_range(0.0..20.0),
        rng.gen_range(0.5..10.0),
        rng.gen_range(0.5..10.0),
        rng.gen_range(-3.2..3.2),
    )
    .unwrap()
}

/// A random anisotropic blob: a rotated ellipse with a few bumps attached.
pub fn random_blob(rng: &mut ChaCha8Rng, size: usize) -> BinaryMask {
    let c = size as f64 / 2.0;
    let a = rng.gen_range(15.0..35.0);
    let b = a / rng.gen_range(1.4..3.0);
    let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let bumps: Vec<(Point2, f64)> = (0..rng.gen_range(1..4))
        .map(|_| {
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = rng.gen_range(0.5..0.9);
            let p = Point2::new(c + r * a * (phi.cos() * t.cos()) - r * b * (phi.sin() * t.sin()), c + r * a * (phi.cos() * t.sin()) + r * b * (phi.sin() * t.cos()));
            (p, rng.gen_range(3.0..8.0))
        })
        .collect();
    BinaryMask::rasterize(size, size, |p| {
        let d = Point2::new(p.x - c, p.y - c).rotate(-t);
        (d.x / a).powi(2) + (d.y / b).powi(2) <= 1.0 || bumps.iter().any(|(q, r)| (p - *q).norm() <= *r)
    })
    .unwrap()
}
