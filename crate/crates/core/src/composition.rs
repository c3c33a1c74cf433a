//! Scene-layout composition: warp per-object embeddings into their boxes,
//! sum them into a layout tensor, and render an inspectable image.

use crate::geometry::{octagon_from_extreme_points, BoundingBox, ExtremePoints, Mask};
use crate::metrics::LayoutPrediction;
use crate::nn::Tensor;
use crate::ppm::Image;
use crate::{Error, Result};

/// Fixed render palette: 26 visually distinct colors, indexed modulo its
/// length. Background pixels are black.
pub const PALETTE: [[u8; 3]; 26] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
    [255, 215, 180],
    [0, 0, 128],
    [128, 128, 128],
    [255, 255, 255],
    [100, 60, 30],
    [60, 100, 160],
    [160, 60, 100],
    [60, 160, 100],
    [200, 140, 70],
];

pub const BACKGROUND: [u8; 3] = [0, 0, 0];

/// Composed scene layout: the summed embedding canvas plus the boxes that
/// produced it.
#[derive(Debug, Clone)]
pub struct SceneLayout {
    /// `[d, h, w]`.
    pub tensor: Tensor,
    pub boxes: Vec<BoundingBox>,
}

/// Bilinear sample of a mask grid at half-pixel-centered continuous
/// coordinates with edge clamping. `u`/`v` live in `[-0.5, size - 0.5]`.
fn sample_mask_bilinear(mask: &Mask, u: f64, v: f64) -> f64 {
    let u = u.clamp(0.0, (mask.width - 1) as f64);
    let v = v.clamp(0.0, (mask.height - 1) as f64);
    let u0 = u.floor() as usize;
    let v0 = v.floor() as usize;
    let u1 = (u0 + 1).min(mask.width - 1);
    let v1 = (v0 + 1).min(mask.height - 1);
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let m00 = mask.get(u0, v0);
    let m01 = mask.get(u1, v0);
    let m10 = mask.get(u0, v1);
    let m11 = mask.get(u1, v1);
    m00 * (1.0 - fu) * (1.0 - fv) + m01 * fu * (1.0 - fv) + m10 * (1.0 - fu) * fv + m11 * fu * fv
}

/// Warps a soft mask into a normalized box on an `h x w` canvas. Pixels
/// whose centers fall outside the box are zero; inside, the mask is
/// bilinearly resampled from its own grid.
pub fn warp_mask(mask: &Mask, bbox: &BoundingBox, w: usize, h: usize) -> Mask {
    let mut out = Mask::zeros(w, h);
    let bw = bbox.width();
    let bh = bbox.height();
    if bw <= 0.0 || bh <= 0.0 {
        return out;
    }
    for y in 0..h {
        let py = (y as f64 + 0.5) / h as f64;
        if py < bbox.top || py >= bbox.bottom {
            continue;
        }
        let v = (py - bbox.top) / bh * mask.height as f64 - 0.5;
        for x in 0..w {
            let px = (x as f64 + 0.5) / w as f64;
            if px < bbox.left || px >= bbox.right {
                continue;
            }
            let u = (px - bbox.left) / bw * mask.width as f64 - 0.5;
            out.set(x, y, sample_mask_bilinear(mask, u, v));
        }
    }
    out
}

/// Expands an embedding to a mask-modulated `d x k x k` field and warps it
/// into the object's box: `out[c] = embedding[c] * warped_mask`.
pub fn warp_embedding(
    embedding: &[f64],
    mask: &Mask,
    bbox: &BoundingBox,
    w: usize,
    h: usize,
) -> Tensor {
    let d = embedding.len();
    let warped = warp_mask(mask, bbox, w, h);
    let mut out = Tensor::zeros(&[d, h, w]);
    for (i, &m) in warped.values.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for (c, &e) in embedding.iter().enumerate() {
            out.data[c * h * w + i] = e * m;
        }
    }
    out
}

/// Number of worker threads, from `SGL_THREADS` (default 1, fully
/// deterministic either way).
pub fn worker_threads() -> usize {
    std::env::var("SGL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Warps every object; results come back in object order regardless of the
/// thread count.
pub fn warp_all(
    embeddings: &[Vec<f64>],
    masks: &[Mask],
    boxes: &[BoundingBox],
    w: usize,
    h: usize,
) -> Result<Vec<Tensor>> {
    if embeddings.len() != masks.len() || masks.len() != boxes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings, {} masks, {} boxes",
            embeddings.len(),
            masks.len(),
            boxes.len()
        )));
    }
    let n = embeddings.len();
    let threads = worker_threads().min(n.max(1));
    if threads <= 1 || n <= 1 {
        return Ok((0..n)
            .map(|i| warp_embedding(&embeddings[i], &masks[i], &boxes[i], w, h))
            .collect());
    }
    let mut out: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, slot_chunk) in out.chunks_mut(chunk).enumerate() {
            let start = t * chunk;
            scope.spawn(move || {
                for (off, slot) in slot_chunk.iter_mut().enumerate() {
                    let i = start + off;
                    *slot = Some(warp_embedding(&embeddings[i], &masks[i], &boxes[i], w, h));
                }
            });
        }
    });
    Ok(out.into_iter().map(|t| t.unwrap()).collect())
}

/// Elementwise sum of per-object layouts, in the given (fixed) order.
pub fn compose_scene_layout(layouts: &[Tensor]) -> Result<Tensor> {
    let first = layouts.first().ok_or(Error::EmptyDataset)?;
    let mut sum = first.clone();
    for l in &layouts[1..] {
        if l.shape != sum.shape {
            return Err(Error::ShapeMismatch(format!(
                "layout shapes {:?} vs {:?}",
                l.shape, sum.shape
            )));
        }
        for (a, b) in sum.data.iter_mut().zip(l.data.iter()) {
            *a += b;
        }
    }
    Ok(sum)
}

/// Renders a layout: each pixel takes the color of the object whose warped
/// soft mask value is highest (ties go to the lower index); pixels where
/// every value is below 0.5 stay background. Optionally overlays octagon
/// outlines in white.
pub fn render_layout(
    pred: &LayoutPrediction,
    colors: &[[u8; 3]],
    w: usize,
    h: usize,
    octagons: bool,
) -> Result<Image> {
    let n = pred.masks.len();
    if colors.len() != n || pred.boxes.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} masks, {} boxes, {} colors",
            pred.boxes.len(),
            colors.len()
        )));
    }
    let warped: Vec<Mask> = (0..n)
        .map(|i| warp_mask(&pred.masks[i], &pred.boxes[i], w, h))
        .collect();
    let mut img = Image::filled(w, h, BACKGROUND);
    for y in 0..h {
        for x in 0..w {
            let mut best = -1.0;
            let mut who = None;
            for (i, wm) in warped.iter().enumerate() {
                let v = wm.get(x, y);
                if v > best {
                    best = v;
                    who = Some(i);
                }
            }
            if best >= 0.5 {
                img.set(x, y, colors[who.unwrap()]);
            }
        }
    }
    if octagons {
        for ep in &pred.extreme_points {
            draw_octagon(&mut img, ep);
        }
    }
    Ok(img)
}

fn draw_octagon(img: &mut Image, ep: &ExtremePoints) {
    let oct = octagon_from_extreme_points(ep);
    let (iw, ih) = (img.width as f64, img.height as f64);
    let scale = move |(x, y): (f64, f64)| (x * iw, y * ih);
    for i in 0..8 {
        let (x0, y0) = scale(oct.vertices[i]);
        let (x1, y1) = scale(oct.vertices[(i + 1) % 8]);
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize + 1;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = (x0 + (x1 - x0) * t).round() as isize;
            let y = (y0 + (y1 - y0) * t).round() as isize;
            if x >= 0 && y >= 0 && (x as usize) < img.width && (y as usize) < img.height {
                img.set(x as usize, y as usize, [255, 255, 255]);
            }
        }
    }
}
