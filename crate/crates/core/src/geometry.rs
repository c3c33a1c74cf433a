//! Extreme points, bounding boxes, octagons, masks, and IoU primitives.
//!
//! Coordinates are y-down (image convention). Boxes and points carry a
//! [`Frame`] tag so pixel-space annotations and normalized layout-space
//! predictions cannot be mixed up silently.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Coordinate frame a box or point set lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Pixel coordinates of some image.
    Pixel,
    /// Unit-square coordinates in [0, 1].
    Normalized,
}

/// Axis-aligned box, `left < right` and `top < bottom` when valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    pub frame: Frame,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64, frame: Frame) -> Self {
        Self { left, top, right, bottom, frame }
    }

    pub fn pixel(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self::new(left, top, right, bottom, Frame::Pixel)
    }

    pub fn normalized(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self::new(left, top, right, bottom, Frame::Normalized)
    }

    pub fn is_valid(&self) -> bool {
        self.left < self.right && self.top < self.bottom
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }

    /// Intersection area with `other`; 0 when disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.right.min(other.right) - self.left.max(other.left)).max(0.0);
        let h = (self.bottom.min(other.bottom) - self.top.max(other.top)).max(0.0);
        w * h
    }

    /// True when `self` lies strictly inside `other` (no shared edges).
    pub fn strictly_inside(&self, other: &BoundingBox) -> bool {
        self.left > other.left
            && self.top > other.top
            && self.right < other.right
            && self.bottom < other.bottom
    }
}

/// The four extreme points plus the center of an object: ten scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremePoints {
    pub left_pt: (f64, f64),
    pub top_pt: (f64, f64),
    pub right_pt: (f64, f64),
    pub bottom_pt: (f64, f64),
    pub center: (f64, f64),
    pub frame: Frame,
}

impl ExtremePoints {
    /// Flattens to `[lx, ly, tx, ty, rx, ry, bx, by, cx, cy]`.
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.left_pt.0,
            self.left_pt.1,
            self.top_pt.0,
            self.top_pt.1,
            self.right_pt.0,
            self.right_pt.1,
            self.bottom_pt.0,
            self.bottom_pt.1,
            self.center.0,
            self.center.1,
        ]
    }

    pub fn from_array(v: &[f64; 10], frame: Frame) -> Self {
        Self {
            left_pt: (v[0], v[1]),
            top_pt: (v[2], v[3]),
            right_pt: (v[4], v[5]),
            bottom_pt: (v[6], v[7]),
            center: (v[8], v[9]),
            frame,
        }
    }
}

/// Eight-vertex polygon built from extreme points, clockwise in a y-down frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Octagon {
    pub vertices: [(f64, f64); 8],
}

/// Dense 2-D grid; ground-truth masks hold {0,1}, predictions [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Mask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0.0; width * height] }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "mask values {} != {}x{}",
                values.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, values })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Binary interpretation: a pixel is set when its value is >= 0.5.
    #[inline]
    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.get(x, y) >= 0.5
    }

    pub fn set_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    /// Tight bounds of the set pixels as inclusive pixel indices.
    pub fn tight_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut min_x, mut min_y) = (usize::MAX, usize::MAX);
        let (mut max_x, mut max_y) = (0usize, 0usize);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_set(x, y) {
                    any = true;
                    min_x = min_x.min(x);
                    min_y = min_y.min(y);
                    max_x = max_x.max(x);
                    max_y = max_y.max(y);
                }
            }
        }
        any.then_some((min_x, min_y, max_x, max_y))
    }

    /// Copies the rectangle of pixels with indices in `[x0, x1] x [y0, y1]`.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        let w = x1 - x0 + 1;
        let h = y1 - y0 + 1;
        let mut out = Mask::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                out.set(x, y, self.get(x0 + x, y0 + y));
            }
        }
        out
    }

    /// Nearest-neighbor resample to `w x h`, then threshold at 0.5.
    pub fn resize_nearest_binary(&self, w: usize, h: usize) -> Mask {
        let mut out = Mask::zeros(w, h);
        for y in 0..h {
            // Sample the source pixel whose center is nearest the target
            // pixel's center.
            let sy = (((y as f64 + 0.5) * self.height as f64 / h as f64) as usize)
                .min(self.height - 1);
            for x in 0..w {
                let sx = (((x as f64 + 0.5) * self.width as f64 / w as f64) as usize)
                    .min(self.width - 1);
                out.set(x, y, if self.is_set(sx, sy) { 1.0 } else { 0.0 });
            }
        }
        out
    }
}

/// Extreme points normalized to the object's own bbox: the retrieval key.
///
/// Layout matches [`ExtremePoints::to_array`]; the left x, top y, right x and
/// bottom y components are exactly 0, 0, 1, 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeDescriptor(pub [f64; 10]);

impl ShapeDescriptor {
    pub fn squared_distance(&self, other: &ShapeDescriptor) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &ShapeDescriptor) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

/// Finds the extreme pixels of a binary mask.
///
/// Each point is a set pixel attaining the extremum along its cardinal
/// direction; ties are broken by taking the lower median of the attaining
/// pixels' secondary coordinate. The center is the center of the tight
/// bounding box of the set pixels.
pub fn extract_extreme_points(mask: &Mask) -> Result<ExtremePoints> {
    let (min_x, min_y, max_x, max_y) = mask.tight_bounds().ok_or(Error::EmptyMask)?;

    let lower_median = |mut v: Vec<usize>| -> f64 {
        v.sort_unstable();
        v[(v.len() - 1) / 2] as f64
    };

    let mut left_ys = Vec::new();
    let mut right_ys = Vec::new();
    let mut top_xs = Vec::new();
    let mut bottom_xs = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if !mask.is_set(x, y) {
                continue;
            }
            if x == min_x {
                left_ys.push(y);
            }
            if x == max_x {
                right_ys.push(y);
            }
            if y == min_y {
                top_xs.push(x);
            }
            if y == max_y {
                bottom_xs.push(x);
            }
        }
    }

    Ok(ExtremePoints {
        left_pt: (min_x as f64, lower_median(left_ys)),
        top_pt: (lower_median(top_xs), min_y as f64),
        right_pt: (max_x as f64, lower_median(right_ys)),
        bottom_pt: (lower_median(bottom_xs), max_y as f64),
        center: ((min_x + max_x) as f64 / 2.0, (min_y + max_y) as f64 / 2.0),
        frame: Frame::Pixel,
    })
}

/// Extreme points of a bare box: edge midpoints plus the box center.
pub fn trivial_extreme_points(bbox: &BoundingBox) -> ExtremePoints {
    let cx = (bbox.left + bbox.right) / 2.0;
    let cy = (bbox.top + bbox.bottom) / 2.0;
    ExtremePoints {
        left_pt: (bbox.left, cy),
        top_pt: (cx, bbox.top),
        right_pt: (bbox.right, cy),
        bottom_pt: (cx, bbox.bottom),
        center: (cx, cy),
        frame: bbox.frame,
    }
}

/// Box recovered from extreme points, with a sanitization flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveredBox {
    pub bbox: BoundingBox,
    /// True when the raw coordinates were inverted or too small and had to
    /// be repaired.
    pub sanitized: bool,
}

/// Minimum box side after sanitization: 1 px, or 1/256 in normalized frame.
fn min_box_side(frame: Frame) -> f64 {
    match frame {
        Frame::Pixel => 1.0,
        Frame::Normalized => 1.0 / 256.0,
    }
}

/// Recovers `(left.x, top.y, right.x, bottom.y)` as a box.
///
/// Total on noisy inputs: inverted coordinates are swapped and boxes thinner
/// than the minimum side are padded symmetrically around their midpoint.
pub fn bbox_from_extreme_points(ep: &ExtremePoints) -> RecoveredBox {
    let min_side = min_box_side(ep.frame);
    let mut sanitized = false;

    let mut fix = |mut lo: f64, mut hi: f64| -> (f64, f64) {
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
            sanitized = true;
        }
        if hi - lo < min_side {
            let mid = (lo + hi) / 2.0;
            lo = mid - min_side / 2.0;
            hi = mid + min_side / 2.0;
            sanitized = true;
        }
        (lo, hi)
    };

    let (left, right) = fix(ep.left_pt.0, ep.right_pt.0);
    let (top, bottom) = fix(ep.top_pt.1, ep.bottom_pt.1);
    RecoveredBox {
        bbox: BoundingBox::new(left, top, right, bottom, ep.frame),
        sanitized,
    }
}

/// Builds the octagon around an object from its extreme points.
///
/// Each extreme point spawns two vertices shifted along its bbox edge by a
/// quarter of that edge's length, clamped to the bbox corners. Vertices come
/// out in clockwise order (y-down) starting from the top edge.
pub fn octagon_from_extreme_points(ep: &ExtremePoints) -> Octagon {
    let RecoveredBox { bbox, .. } = bbox_from_extreme_points(ep);
    let (l, t, r, b) = (bbox.left, bbox.top, bbox.right, bbox.bottom);
    let dx = bbox.width() / 4.0;
    let dy = bbox.height() / 4.0;
    let cx = |x: f64| x.clamp(l, r);
    let cy = |y: f64| y.clamp(t, b);

    let (tx, _) = ep.top_pt;
    let (_, ry) = ep.right_pt;
    let (bx, _) = ep.bottom_pt;
    let (_, ly) = ep.left_pt;

    Octagon {
        vertices: [
            (cx(tx - dx), t),
            (cx(tx + dx), t),
            (r, cy(ry - dy)),
            (r, cy(ry + dy)),
            (cx(bx + dx), b),
            (cx(bx - dx), b),
            (l, cy(ly + dy)),
            (l, cy(ly - dy)),
        ],
    }
}

/// Shoelace signed area; clockwise order in a y-down frame gives a negative
/// value.
pub fn polygon_signed_area(vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = vertices[i];
        let (x1, y1) = vertices[(i + 1) % n];
        acc += (x1 - x0) * (y1 + y0);
    }
    acc / 2.0
}

pub fn polygon_area(vertices: &[(f64, f64)]) -> f64 {
    polygon_signed_area(vertices).abs()
}

/// Normalizes extreme points to the unit square of their own bbox.
///
/// Scale- and translation-invariant; components are clamped to [0,1] so
/// noisy predicted centers cannot escape the unit square.
pub fn normalize_descriptor(ep: &ExtremePoints) -> Result<ShapeDescriptor> {
    let l = ep.left_pt.0;
    let t = ep.top_pt.1;
    let r = ep.right_pt.0;
    let b = ep.bottom_pt.1;
    if r - l <= 0.0 || b - t <= 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "descriptor needs a positive-size bbox, got {}x{}",
            r - l,
            b - t
        )));
    }
    let nx = |x: f64| ((x - l) / (r - l)).clamp(0.0, 1.0);
    let ny = |y: f64| ((y - t) / (b - t)).clamp(0.0, 1.0);
    Ok(ShapeDescriptor([
        nx(ep.left_pt.0),
        ny(ep.left_pt.1),
        nx(ep.top_pt.0),
        ny(ep.top_pt.1),
        nx(ep.right_pt.0),
        ny(ep.right_pt.1),
        nx(ep.bottom_pt.0),
        ny(ep.bottom_pt.1),
        nx(ep.center.0),
        ny(ep.center.1),
    ]))
}

/// Maps pixel-index coordinates into the unit square via pixel centers:
/// `(v + 0.5) / size`. The same convention normalizes training targets and
/// ground-truth boxes, so they stay comparable.
pub fn normalize_extreme_points(ep: &ExtremePoints, image_size: (u32, u32)) -> ExtremePoints {
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    let map = |(x, y): (f64, f64)| ((x + 0.5) / w, (y + 0.5) / h);
    ExtremePoints {
        left_pt: map(ep.left_pt),
        top_pt: map(ep.top_pt),
        right_pt: map(ep.right_pt),
        bottom_pt: map(ep.bottom_pt),
        center: map(ep.center),
        frame: Frame::Normalized,
    }
}

/// Pixel-center normalization of a pixel-index box (see
/// [`normalize_extreme_points`]).
pub fn normalize_pixel_bbox(b: &BoundingBox, image_size: (u32, u32)) -> BoundingBox {
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    BoundingBox::normalized(
        (b.left + 0.5) / w,
        (b.top + 0.5) / h,
        (b.right + 0.5) / w,
        (b.bottom + 0.5) / h,
    )
}

/// Intersection over union of two boxes; 0 when the union is empty.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area().max(0.0) + b.area().max(0.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Intersection over union of two same-size masks under the binary
/// interpretation; 0 when both are empty.
pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (va, vb) in a.values.iter().zip(b.values.iter()) {
        let sa = *va >= 0.5;
        let sb = *vb >= 0.5;
        if sa && sb {
            inter += 1;
        }
        if sa || sb {
            union += 1;
        }
    }
    if union == 0 {
        Ok(0.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Rasterizes a polygon with the even-odd rule: a pixel is set iff its
/// center lies inside.
pub fn rasterize_polygon(vertices: &[(f64, f64)], width: usize, height: usize) -> Result<Mask> {
    if vertices.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "polygon needs >= 3 vertices, got {}",
            vertices.len()
        )));
    }
    let mut mask = Mask::zeros(width, height);
    for y in 0..height {
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            if point_in_polygon_even_odd(px, py, vertices) {
                mask.set(x, y, 1.0);
            }
        }
    }
    Ok(mask)
}

/// Even-odd ray crossing test with half-open edge handling so a point never
/// counts a vertex twice.
pub fn point_in_polygon_even_odd(px: f64, py: f64, vertices: &[(f64, f64)]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > py) != (yj > py) {
            let x_cross = xi + (py - yi) * (xj - xi) / (yj - yi);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
