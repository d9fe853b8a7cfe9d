//! Dense binary masks and their run-length wire encoding.
//!
//! The RLE layout is row-major: `counts` alternates background and
//! foreground run lengths, always starting with a (possibly zero-length)
//! background run. The encoding is canonical: no run other than the first may
//! be empty, so every mask has exactly one encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisAlignedBox, Point2};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    /// Sets pixel `(col, row)` whenever `f(col, row)` is true.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(col, row));
            }
        }
        Self::new(width, height, bits)
    }

    /// Sets every pixel whose center satisfies `inside`.
    pub fn rasterize(width: usize, height: usize, inside: impl Fn(Point2) -> bool) -> Result<Self> {
        Self::from_fn(width, height, |c, r| inside(pixel_center(c, r)))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height && self.bits[row * self.width + col]
    }

    /// Like [`get`](Self::get) but accepts out-of-image coordinates.
    fn get_signed(&self, col: isize, row: isize) -> bool {
        col >= 0 && row >= 0 && self.get(col as usize, row as usize)
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        if col < self.width && row < self.height {
            self.bits[row * self.width + col] = value;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// True when `p` falls in a set pixel.
    pub fn contains(&self, p: Point2) -> bool {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return false;
        }
        self.get(p.x.floor() as usize, p.y.floor() as usize)
    }

    fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyMask)
        } else {
            Ok(())
        }
    }

    /// Set pixels as `(col, row)` in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// Pixel-level IoU; 0 when both masks are empty.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::invalid("mask IoU of differently sized masks"));
        }
        let inter = self.intersection_count(other);
        let union = self.count() + other.count() - inter;
        Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
    }

    /// Convex-hull support points of the union of the set pixels' unit
    /// squares: the outer corners of the leftmost and rightmost set pixel of
    /// every row.
    pub fn footprint_extremes(&self) -> Result<Vec<Point2>> {
        self.ensure_non_empty()?;
        let mut out = Vec::new();
        for row in 0..self.height {
            let line = &self.bits[row * self.width..(row + 1) * self.width];
            let (Some(first), Some(last)) = (line.iter().position(|&b| b), line.iter().rposition(|&b| b)) else {
                continue;
            };
            let (top, bottom) = (row as f64, row as f64 + 1.0);
            let (left, right) = (first as f64, last as f64 + 1.0);
            out.extend([
                Point2::new(left, top),
                Point2::new(left, bottom),
                Point2::new(right, top),
                Point2::new(right, bottom),
            ]);
        }
        Ok(out)
    }
}

pub fn pixel_center(col: usize, row: usize) -> Point2 {
    Point2::new(col as f64 + 0.5, row as f64 + 0.5)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
}

pub fn rle_encode(m: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for &b in &m.bits {
        if b == current {
            run += 1;
        } else {
            counts.push(run);
            current = b;
            run = 1;
        }
    }
    counts.push(run);
    RleMask {
        width: m.width,
        height: m.height,
        counts,
    }
}

pub fn rle_decode(r: &RleMask) -> Result<BinaryMask> {
    let ctx = "rle";
    let total = (r.width as u64)
        .checked_mul(r.height as u64)
        .ok_or_else(|| Error::format(ctx, "mask dimensions overflow"))?;
    if r.counts.is_empty() {
        return Err(Error::format(ctx, "counts must not be empty"));
    }
    if let Some(i) = r.counts.iter().skip(1).position(|&c| c == 0) {
        return Err(Error::format(ctx, format!("zero-length run at counts[{}]", i + 1)));
    }
    let sum = r
        .counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .ok_or_else(|| Error::format(ctx, "counts overflow"))?;
    if sum != total {
        return Err(Error::format(
            ctx,
            format!("counts sum to {sum}, expected width*height = {total}"),
        ));
    }
    let mut bits = Vec::with_capacity(total as usize);
    for (i, &c) in r.counts.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    BinaryMask::new(r.width, r.height, bits).map_err(|e| Error::format(ctx, e.to_string()))
}

/// Tight box over the set pixel centers.
pub fn mask_aabb(m: &BinaryMask) -> Result<AxisAlignedBox> {
    m.ensure_non_empty()?;
    let (mut c0, mut r0, mut c1, mut r1) = (usize::MAX, usize::MAX, 0, 0);
    for (c, r) in m.set_pixels() {
        c0 = c0.min(c);
        c1 = c1.max(c);
        r0 = r0.min(r);
        r1 = r1.max(r);
    }
    AxisAlignedBox::new(
        c0 as f64 + 0.5,
        r0 as f64 + 0.5,
        c1 as f64 + 0.5,
        r1 as f64 + 0.5,
    )
}

/// Set pixels within Chebyshev distance `width_px` of a background pixel,
/// where everything outside the image counts as background.
pub fn inner_margin(m: &BinaryMask, width_px: usize) -> Result<BinaryMask> {
    if width_px == 0 {
        return Err(Error::invalid("margin width must be at least 1 pixel"));
    }
    m.ensure_non_empty()?;
    let dist = chessboard_distance(m);
    let bits = m
        .bits
        .iter()
        .zip(&dist)
        .map(|(&b, &d)| b && d <= width_px)
        .collect();
    BinaryMask::new(m.width, m.height, bits)
}

/// Chessboard distance from each set pixel to the nearest background pixel
/// (0 for background). Two-pass chamfer with unit weights on all 8 neighbours.
fn chessboard_distance(m: &BinaryMask) -> Vec<usize> {
    let (w, h) = (m.width as isize, m.height as isize);
    let idx = |c: isize, r: isize| (r * w + c) as usize;
    let mut d = vec![0usize; m.bits.len()];
    for r in 0..h {
        for c in 0..w {
            if m.get_signed(c, r) {
                // Distance to the nearest out-of-image pixel.
                let border = (c + 1).min(r + 1).min(w - c).min(h - r);
                d[idx(c, r)] = border as usize;
            }
        }
    }
    let forward = [(-1, -1), (0, -1), (1, -1), (-1, 0)];
    for r in 0..h {
        for c in 0..w {
            let i = idx(c, r);
            if d[i] == 0 {
                continue;
            }
            for (dc, dr) in forward {
                let (nc, nr) = (c + dc, r + dr);
                if nc >= 0 && nr >= 0 && nc < w {
                    d[i] = d[i].min(d[idx(nc, nr)] + 1);
                }
            }
        }
    }
    for r in (0..h).rev() {
        for c in (0..w).rev() {
            let i = idx(c, r);
            if d[i] == 0 {
                continue;
            }
            for (dc, dr) in forward {
                let (nc, nr) = (c - dc, r - dr);
                if nc >= 0 && nc < w && nr < h {
                    d[i] = d[i].min(d[idx(nc, nr)] + 1);
                }
            }
        }
    }
    d
}

/// Pixel centers of the set bits in row-major order.
pub fn pixel_points(m: &BinaryMask) -> Result<Vec<Point2>> {
    m.ensure_non_empty()?;
    Ok(m.set_pixels().map(|(c, r)| pixel_center(c, r)).collect())
}

pub fn centroid(m: &BinaryMask) -> Result<Point2> {
    m.ensure_non_empty()?;
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (c, r) in m.set_pixels() {
        let p = pixel_center(c, r);
        sx += p.x;
        sy += p.y;
        n += 1;
    }
    Ok(Point2::new(sx / n as f64, sy / n as f64))
}
