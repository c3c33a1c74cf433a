//! Binary PPM (P6) reading and writing. The only image format the tool
//! emits, chosen to avoid codec dependencies.

use std::io::{Read, Write};

use crate::geometry::Mask;
use crate::{Error, Result};

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![color; width * height] }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, color: [u8; 3]) {
        self.pixels[y * self.width + x] = color;
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

pub fn write_ppm<W: Write>(mut w: W, image: &Image) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
    let mut bytes = Vec::with_capacity(image.pixels.len() * 3);
    for p in &image.pixels {
        bytes.extend_from_slice(p);
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_ppm<R: Read>(mut r: R) -> Result<Image> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0usize;

    let mut token = |buf: &[u8]| -> Result<String> {
        while pos < buf.len() {
            if buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            } else if buf[pos].is_ascii_whitespace() {
                pos += 1;
            } else {
                break;
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PPM header".into()));
        }
        Ok(String::from_utf8_lossy(&buf[start..pos]).into_owned())
    };

    let magic = token(&buf)?;
    if magic != "P6" {
        return Err(Error::Parse(format!("expected P6 magic, got {magic:?}")));
    }
    let width: usize =
        token(&buf)?.parse().map_err(|e| Error::Parse(format!("PPM width: {e}")))?;
    let height: usize =
        token(&buf)?.parse().map_err(|e| Error::Parse(format!("PPM height: {e}")))?;
    let maxval: usize =
        token(&buf)?.parse().map_err(|e| Error::Parse(format!("PPM maxval: {e}")))?;
    if maxval != 255 {
        return Err(Error::Parse(format!("only maxval 255 supported, got {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 3;
    if buf.len() < pos + need {
        return Err(Error::Parse(format!(
            "PPM pixel data truncated: need {need}, have {}",
            buf.len().saturating_sub(pos)
        )));
    }
    let pixels = buf[pos..pos + need]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(Image { width, height, pixels })
}

/// White-on-black rendering of a binary mask.
pub fn mask_to_image(mask: &Mask) -> Image {
    let mut img = Image::filled(mask.width, mask.height, [0, 0, 0]);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.is_set(x, y) {
                img.set(x, y, [255, 255, 255]);
            }
        }
    }
    img
}

/// Inverse of [`mask_to_image`]: luminance >= 128 counts as set.
pub fn image_to_mask(image: &Image) -> Mask {
    let mut mask = Mask::zeros(image.width, image.height);
    for y in 0..image.height {
        for x in 0..image.width {
            let [r, g, b] = image.get(x, y);
            let lum = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            if lum >= 128.0 {
                mask.set(x, y, 1.0);
            }
        }
    }
    mask
}
