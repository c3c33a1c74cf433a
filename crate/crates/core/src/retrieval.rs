//! Shape-aware patch retrieval: a per-category descriptor index, exact
//! top-k L2 queries, bounding-box and random baselines, and the retrieval
//! IoU evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    extract_extreme_points, mask_iou, normalize_descriptor, BoundingBox, Mask, ShapeDescriptor,
};
use crate::{Error, Result};

/// The 23 categories of the full-scale retrieval database.
pub const COCO_RETRIEVAL_CATEGORIES: [&str; 23] = [
    "bear",
    "bed",
    "bench",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "dining table",
    "dog",
    "elephant",
    "fire hydrant",
    "giraffe",
    "horse",
    "motorcycle",
    "stop sign",
    "surfboard",
    "train",
    "zebra",
];

/// One database entry: the descriptor is the retrieval key, the mask
/// reference is used at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub patch_id: u64,
    pub category: String,
    pub source_image: u64,
    /// Pixel-frame box in the source image.
    pub bbox: BoundingBox,
    /// Source image dimensions; the bbox baseline needs them to normalize.
    pub image_size: (u32, u32),
    pub descriptor: ShapeDescriptor,
    /// Relative path of the patch mask image.
    pub mask_ref: String,
}

impl PatchRecord {
    /// Image-normalized (width, height) feature for the bbox baseline.
    pub fn normalized_dims(&self) -> (f64, f64) {
        (
            self.bbox.width() / self.image_size.0 as f64,
            self.bbox.height() / self.image_size.1 as f64,
        )
    }
}

/// Builds a patch record from an object's full-image mask; the descriptor
/// comes from the mask's extreme points. The mask reference follows the
/// dataset convention `masks/p<id>.ppm`.
pub fn extract_patch(
    patch_id: u64,
    category: &str,
    source_image: u64,
    bbox: &BoundingBox,
    image_size: (u32, u32),
    mask: &Mask,
) -> Result<PatchRecord> {
    let ep = extract_extreme_points(mask)?;
    let descriptor = normalize_descriptor(&ep)?;
    Ok(PatchRecord {
        patch_id,
        category: category.into(),
        source_image,
        bbox: *bbox,
        image_size,
        descriptor,
        mask_ref: format!("masks/p{patch_id:06}.ppm"),
    })
}

/// Records of one category, sorted by patch id.
#[derive(Debug, Clone)]
pub struct CategoryShard {
    pub category: String,
    pub records: Vec<PatchRecord>,
}

/// Immutable per-category descriptor index.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    /// Sorted by category name.
    pub shards: Vec<CategoryShard>,
    pub checksum: u64,
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl RetrievalIndex {
    /// Groups records by category and sorts each group by patch id.
    pub fn build(records: &[PatchRecord]) -> Result<RetrievalIndex> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut groups: BTreeMap<String, Vec<PatchRecord>> = BTreeMap::new();
        for r in records {
            groups.entry(r.category.clone()).or_default().push(r.clone());
        }
        let mut shards = Vec::with_capacity(groups.len());
        let mut checksum = 0xcbf29ce484222325u64;
        for (category, mut recs) in groups {
            recs.sort_by_key(|r| r.patch_id);
            for r in &recs {
                checksum = fnv1a(&r.patch_id.to_le_bytes(), checksum);
                checksum = fnv1a(r.category.as_bytes(), checksum);
                for v in r.descriptor.0 {
                    checksum = fnv1a(&v.to_le_bytes(), checksum);
                }
            }
            shards.push(CategoryShard { category, records: recs });
        }
        Ok(RetrievalIndex { shards, checksum })
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        self.shards
            .iter()
            .map(|s| (s.category.clone(), s.records.len()))
            .collect()
    }

    pub fn shard(&self, category: &str) -> Result<&CategoryShard> {
        self.shards
            .iter()
            .find(|s| s.category == category)
            .ok_or_else(|| Error::UnknownVocab(format!("category {category:?} not in index")))
    }

    pub fn record(&self, category: &str, patch_id: u64) -> Result<&PatchRecord> {
        let shard = self.shard(category)?;
        shard
            .records
            .iter()
            .find(|r| r.patch_id == patch_id)
            .ok_or_else(|| Error::UnknownVocab(format!("patch {patch_id} not in {category:?}")))
    }
}

fn ranked_topk(mut scored: Vec<(u64, f64)>, k: usize) -> Vec<(u64, f64)> {
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Exact top-k by Euclidean distance between 10-d descriptors, ascending;
/// ties broken by patch id. Returns at most `min(k, n)` results.
pub fn query_topk(
    index: &RetrievalIndex,
    category: &str,
    query: &ShapeDescriptor,
    k: usize,
) -> Result<Vec<(u64, f64)>> {
    let shard = index.shard(category)?;
    let scored = shard
        .records
        .iter()
        .map(|r| (r.patch_id, query.distance(&r.descriptor)))
        .collect();
    Ok(ranked_topk(scored, k))
}

/// Baseline: L2 over image-normalized (width, height) of the boxes.
pub fn baseline_bbox_query(
    index: &RetrievalIndex,
    category: &str,
    query_dims: (f64, f64),
    k: usize,
) -> Result<Vec<(u64, f64)>> {
    let shard = index.shard(category)?;
    let scored = shard
        .records
        .iter()
        .map(|r| {
            let (w, h) = r.normalized_dims();
            let d = ((w - query_dims.0).powi(2) + (h - query_dims.1).powi(2)).sqrt();
            (r.patch_id, d)
        })
        .collect();
    Ok(ranked_topk(scored, k))
}

/// Baseline: uniform sample of `min(k, n)` patch ids without replacement.
pub fn baseline_random_query(
    index: &RetrievalIndex,
    category: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let shard = index.shard(category)?;
    let mut ids: Vec<u64> = shard.records.iter().map(|r| r.patch_id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.truncate(k);
    Ok(ids)
}

/// Resolves mask references to masks at evaluation time.
pub trait MaskStore {
    fn mask(&self, reference: &str) -> Result<Mask>;
}

/// Mask store backed by a map, for synthetic corpora and tests.
#[derive(Debug, Default)]
pub struct InMemoryMaskStore {
    pub masks: BTreeMap<String, Mask>,
}

impl MaskStore for InMemoryMaskStore {
    fn mask(&self, reference: &str) -> Result<Mask> {
        self.masks
            .get(reference)
            .cloned()
            .ok_or_else(|| Error::UnknownVocab(format!("mask {reference:?} not in store")))
    }
}

/// Retrieval method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMethod {
    ExtremePoints,
    BoundingBox,
    Random { seed: u64 },
}

/// One evaluation query: the ground-truth mask scores the retrieved
/// patches.
#[derive(Debug, Clone)]
pub struct RetrievalQuery {
    pub category: String,
    pub descriptor: ShapeDescriptor,
    /// Image-normalized (width, height), for the bbox baseline.
    pub bbox_dims: (f64, f64),
    pub gt_mask: Mask,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CategoryEval {
    pub top1_iou: f64,
    pub top5_iou: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalEval {
    pub per_category: BTreeMap<String, CategoryEval>,
    /// Unweighted means over categories.
    pub macro_top1: f64,
    pub macro_top5: f64,
}

/// Shape-frame canonicalization: crop to the tight bounds and resample to
/// 64x64, so the IoU measures shape and pose rather than position or scale.
pub fn canonical_shape_mask(mask: &Mask) -> Result<Mask> {
    let (x0, y0, x1, y1) = mask.tight_bounds().ok_or(Error::EmptyMask)?;
    Ok(mask.crop(x0, y0, x1, y1).resize_nearest_binary(64, 64))
}

/// Evaluates a retrieval method: per category, the mean IoU of the rank-1
/// patch (top-1) and the best IoU among the first five (top-5), then the
/// macro average across categories.
pub fn evaluate_retrieval(
    index: &RetrievalIndex,
    queries: &[RetrievalQuery],
    method: RetrievalMethod,
    store: &dyn MaskStore,
) -> Result<RetrievalEval> {
    if queries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = 5;
    let mut sums: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for (qi, q) in queries.iter().enumerate() {
        let ids: Vec<u64> = match method {
            RetrievalMethod::ExtremePoints => query_topk(index, &q.category, &q.descriptor, k)?
                .into_iter()
                .map(|(id, _)| id)
                .collect(),
            RetrievalMethod::BoundingBox => {
                baseline_bbox_query(index, &q.category, q.bbox_dims, k)?
                    .into_iter()
                    .map(|(id, _)| id)
                    .collect()
            }
            RetrievalMethod::Random { seed } => baseline_random_query(
                index,
                &q.category,
                k,
                seed ^ (qi as u64).wrapping_mul(0x9e3779b97f4a7c15),
            )?,
        };
        if ids.is_empty() {
            continue;
        }
        let gt = canonical_shape_mask(&q.gt_mask)?;
        let mut top1 = 0.0;
        let mut best = 0.0f64;
        for (rank, id) in ids.iter().enumerate() {
            let record = index.record(&q.category, *id)?;
            let candidate = canonical_shape_mask(&store.mask(&record.mask_ref)?)?;
            let iou = mask_iou(&gt, &candidate)?;
            if rank == 0 {
                top1 = iou;
            }
            best = best.max(iou);
        }
        let entry = sums.entry(q.category.clone()).or_insert((0.0, 0.0, 0));
        entry.0 += top1;
        entry.1 += best;
        entry.2 += 1;
    }

    let per_category: BTreeMap<String, CategoryEval> = sums
        .into_iter()
        .map(|(cat, (t1, t5, n))| {
            (
                cat,
                CategoryEval {
                    top1_iou: t1 / n as f64,
                    top5_iou: t5 / n as f64,
                    n_queries: n,
                },
            )
        })
        .collect();
    let nc = per_category.len() as f64;
    let macro_top1 = per_category.values().map(|c| c.top1_iou).sum::<f64>() / nc;
    let macro_top5 = per_category.values().map(|c| c.top5_iou).sum::<f64>() / nc;
    Ok(RetrievalEval { per_category, macro_top1, macro_top5 })
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    vocab: Vec<String>,
    counts: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct IndexLine {
    id: u64,
    cat: String,
    bbox: [f64; 4],
    desc: Vec<f64>,
    mask: String,
    img: [u32; 2],
    src: u64,
}

/// One record as a JSON line (the same schema the index file uses).
pub fn record_to_json(r: &PatchRecord) -> String {
    let line = IndexLine {
        id: r.patch_id,
        cat: r.category.clone(),
        bbox: [r.bbox.left, r.bbox.top, r.bbox.right, r.bbox.bottom],
        desc: r.descriptor.0.to_vec(),
        mask: r.mask_ref.clone(),
        img: [r.image_size.0, r.image_size.1],
        src: r.source_image,
    };
    serde_json::to_string(&line).expect("record serializes")
}

pub fn record_from_json(line: &str) -> Result<PatchRecord> {
    let rec: IndexLine =
        serde_json::from_str(line).map_err(|e| Error::Parse(format!("patch record: {e}")))?;
    if rec.desc.len() != 10 {
        return Err(Error::Parse(format!(
            "patch record {}: descriptor has {} values",
            rec.id,
            rec.desc.len()
        )));
    }
    let mut desc = [0.0; 10];
    desc.copy_from_slice(&rec.desc);
    Ok(PatchRecord {
        patch_id: rec.id,
        category: rec.cat,
        source_image: rec.src,
        bbox: BoundingBox::pixel(rec.bbox[0], rec.bbox[1], rec.bbox[2], rec.bbox[3]),
        image_size: (rec.img[0], rec.img[1]),
        descriptor: ShapeDescriptor(desc),
        mask_ref: rec.mask,
    })
}

/// Serializes an index as JSON lines: a header line, then one record per
/// line ordered by category and patch id. Byte-stable for a given index.
pub fn write_index(index: &RetrievalIndex) -> String {
    let header = IndexHeader {
        format: "sgl-index-v1".into(),
        vocab: index.shards.iter().map(|s| s.category.clone()).collect(),
        counts: index.counts(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for shard in &index.shards {
        for r in &shard.records {
            out.push_str(&record_to_json(r));
            out.push('\n');
        }
    }
    out
}

/// Parses the JSONL index format and rebuilds the index.
pub fn read_index(text: &str) -> Result<RetrievalIndex> {
    let mut lines = text.lines();
    let header_line = lines.next().ok_or_else(|| Error::Parse("empty index file".into()))?;
    let header: IndexHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::Parse(format!("index header: {e}")))?;
    if header.format != "sgl-index-v1" {
        return Err(Error::Parse(format!("unknown index format {:?}", header.format)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = record_from_json(line)
            .map_err(|e| Error::Parse(format!("index line {}: {e}", i + 2)))?;
        records.push(record);
    }
    let index = RetrievalIndex::build(&records)?;
    let counts = index.counts();
    if counts != header.counts {
        return Err(Error::Parse("index header counts disagree with records".into()));
    }
    Ok(index)
}
