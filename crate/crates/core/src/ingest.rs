//! COCO-style annotation ingestion: images, polygon segmentations, and
//! category kinds.

use serde::Deserialize;

use crate::geometry::{rasterize_polygon, BoundingBox, Mask};
use crate::scenegraph::{AnnotatedObject, Category, Kind};
use crate::{Error, Result};

/// One source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

/// One object annotation with corner-form box and polygon rings.
#[derive(Debug, Clone)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BoundingBox,
    pub polygons: Vec<Vec<(f64, f64)>>,
}

/// Parsed annotation file.
#[derive(Debug, Clone)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
    /// Crowd/RLE annotations are skipped; this counts them.
    pub skipped_rle: usize,
}

/// Which category ids count as stuff. COCO-stuff assigns ids 92..=183 to
/// stuff classes.
#[derive(Debug, Clone)]
pub struct IngestConfig {
    pub stuff_ids: Vec<u32>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { stuff_ids: (92..=183).collect() }
    }
}

#[derive(Deserialize)]
struct WireFile {
    images: Vec<WireImage>,
    annotations: Vec<WireAnnotation>,
    categories: Vec<WireCategory>,
}

#[derive(Deserialize)]
struct WireImage {
    id: u64,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct WireCategory {
    id: u32,
    name: String,
}

#[derive(Deserialize)]
struct WireAnnotation {
    #[serde(default)]
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    #[serde(default)]
    segmentation: Option<Segmentation>,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle {
        #[allow(dead_code)]
        counts: serde_json::Value,
        #[allow(dead_code)]
        size: [u32; 2],
    },
}

/// Parses a COCO-style annotation JSON. Crowd and RLE-coded entries are
/// skipped (with a count); kinds come from the configured stuff id list.
pub fn ingest_annotations(text: &str, cfg: &IngestConfig) -> Result<AnnotationSet> {
    let wire: WireFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("annotation JSON: {e}")))?;

    let categories: Vec<Category> = wire
        .categories
        .iter()
        .map(|c| Category {
            id: c.id,
            name: c.name.clone(),
            kind: if cfg.stuff_ids.contains(&c.id) { Kind::Stuff } else { Kind::Thing },
        })
        .collect();

    let images: Vec<ImageInfo> = wire
        .images
        .iter()
        .map(|i| ImageInfo { id: i.id, width: i.width, height: i.height })
        .collect();

    let mut annotations = Vec::new();
    let mut skipped_rle = 0usize;
    for (pos, a) in wire.annotations.into_iter().enumerate() {
        if !categories.iter().any(|c| c.id == a.category_id) {
            return Err(Error::UnknownVocab(format!(
                "annotation {pos}: category id {}",
                a.category_id
            )));
        }
        if !images.iter().any(|i| i.id == a.image_id) {
            return Err(Error::Parse(format!(
                "annotation {pos}: image id {} not in file",
                a.image_id
            )));
        }
        let [x, y, w, h] = a.bbox;
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::Parse(format!(
                "annotation {pos}: bbox [{x}, {y}, {w}, {h}] has non-positive size"
            )));
        }
        let polygons = match (a.iscrowd, a.segmentation) {
            (1, _) | (_, Some(Segmentation::Rle { .. })) => {
                skipped_rle += 1;
                continue;
            }
            (_, Some(Segmentation::Polygons(polys))) => {
                let mut rings = Vec::with_capacity(polys.len());
                for (ri, flat) in polys.iter().enumerate() {
                    if flat.len() < 6 || flat.len() % 2 != 0 {
                        return Err(Error::Parse(format!(
                            "annotation {pos}: polygon {ri} has {} coordinates",
                            flat.len()
                        )));
                    }
                    rings.push(flat.chunks_exact(2).map(|p| (p[0], p[1])).collect());
                }
                rings
            }
            (_, None) => Vec::new(),
        };
        annotations.push(Annotation {
            id: a.id,
            image_id: a.image_id,
            category_id: a.category_id,
            bbox: BoundingBox::pixel(x, y, x + w, y + h),
            polygons,
        });
    }

    Ok(AnnotationSet { images, annotations, categories, skipped_rle })
}

impl AnnotationSet {
    pub fn category(&self, id: u32) -> Result<&Category> {
        self.categories
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownVocab(format!("category id {id}")))
    }

    pub fn image(&self, id: u64) -> Result<&ImageInfo> {
        self.images
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| Error::Parse(format!("image id {id} not in set")))
    }

    /// Scene-graph builder inputs for one image: each annotation becomes an
    /// annotated object, with a mask rasterized from its polygon rings when
    /// present (union across rings).
    pub fn annotated_objects(&self, image_id: u64) -> Result<Vec<AnnotatedObject>> {
        let image = self.image(image_id)?;
        let mut out = Vec::new();
        for a in self.annotations.iter().filter(|a| a.image_id == image_id) {
            let category = self.category(a.category_id)?;
            let mask = if a.polygons.is_empty() {
                None
            } else {
                let mut union = Mask::zeros(image.width as usize, image.height as usize);
                for ring in &a.polygons {
                    let m = rasterize_polygon(ring, union.width, union.height)?;
                    for (u, v) in union.values.iter_mut().zip(m.values.iter()) {
                        if *v >= 0.5 {
                            *u = 1.0;
                        }
                    }
                }
                Some(union)
            };
            out.push(AnnotatedObject {
                category: category.name.clone(),
                kind: category.kind,
                bbox: a.bbox,
                mask,
            });
        }
        Ok(out)
    }
}
