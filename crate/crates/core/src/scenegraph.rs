//! Scene-graph data model, relation classification, synthetic graph
//! construction from annotated layouts, and heuristic relation augmentation.
//!
//! A scene graph is a list of object nodes plus directed predicate edges.
//! Six geometric predicates come from box geometry; four more (depth order
//! and support) are added by deterministic heuristics over overlapping
//! objects.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Mask};
use crate::{Error, Result};

/// Thing = countable object (car, sheep); Stuff = amorphous region (sky).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Thing,
    Stuff,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Thing => "thing",
            Kind::Stuff => "stuff",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        match s {
            "thing" => Some(Kind::Thing),
            "stuff" => Some(Kind::Stuff),
            _ => None,
        }
    }
}

/// Vocabulary entry: a category id, its display name, and its kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
    pub kind: Kind,
}

/// The ten relation predicates. The first six are geometric and partition
/// all non-degenerate box pairs; the last four are added by augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    LeftOf,
    RightOf,
    Above,
    Below,
    Inside,
    Surrounding,
    InFrontOf,
    Behind,
    On,
    Under,
}

impl Predicate {
    pub const ALL: [Predicate; 10] = [
        Predicate::LeftOf,
        Predicate::RightOf,
        Predicate::Above,
        Predicate::Below,
        Predicate::Inside,
        Predicate::Surrounding,
        Predicate::InFrontOf,
        Predicate::Behind,
        Predicate::On,
        Predicate::Under,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::LeftOf => "left of",
            Predicate::RightOf => "right of",
            Predicate::Above => "above",
            Predicate::Below => "below",
            Predicate::Inside => "inside",
            Predicate::Surrounding => "surrounding",
            Predicate::InFrontOf => "in front of",
            Predicate::Behind => "behind",
            Predicate::On => "on",
            Predicate::Under => "under",
        }
    }

    pub fn from_name(s: &str) -> Option<Predicate> {
        Predicate::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Index into [`Predicate::ALL`]; doubles as the embedding row.
    pub fn index(self) -> usize {
        Predicate::ALL.iter().position(|p| *p == self).unwrap()
    }

    pub fn is_geometric(self) -> bool {
        self.index() < 6
    }
}

/// One object in a scene graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectNode {
    pub index: usize,
    pub category: String,
    pub kind: Kind,
    pub bbox: Option<BoundingBox>,
    pub mask_ref: Option<String>,
}

/// Directed edge `subject --predicate--> object`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationEdge {
    pub subject: usize,
    pub predicate: Predicate,
    pub object: usize,
    pub augmented: bool,
}

/// Objects plus relations; the compact scene representation everything
/// downstream consumes. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub image_size: (u32, u32),
    pub objects: Vec<ObjectNode>,
    pub relations: Vec<RelationEdge>,
}

impl SceneGraph {
    pub fn node(&self, index: usize) -> &ObjectNode {
        &self.objects[index]
    }

    fn triple_set(&self) -> BTreeSet<(usize, usize, usize)> {
        self.relations
            .iter()
            .map(|e| (e.subject, e.predicate.index(), e.object))
            .collect()
    }
}

/// Assigns exactly one of the six geometric predicates to a box pair.
///
/// Strict containment wins (`Inside` when the subject sits strictly inside
/// the object, `Surrounding` for the converse); otherwise the subject-to-
/// object centroid direction is bucketed into four half-open 90-degree
/// wedges: left `[-45, 45)`, above `[45, 135)`, right `[135, 225)`, below
/// `[225, 315)`, measured y-down. The wedge test uses exact coordinate
/// comparisons, so boundary angles are deterministic.
pub fn classify_relation(subject: &BoundingBox, object: &BoundingBox) -> Result<Predicate> {
    if subject.strictly_inside(object) {
        return Ok(Predicate::Inside);
    }
    if object.strictly_inside(subject) {
        return Ok(Predicate::Surrounding);
    }
    let (sx, sy) = subject.centroid();
    let (ox, oy) = object.centroid();
    let dx = ox - sx;
    let dy = oy - sy;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::DegenerateGeometry(
            "identical centroids with no containment".into(),
        ));
    }
    // theta in [-45, 45): dy in [-dx, dx) with dx > 0, and rotations thereof.
    let p = if dx > 0.0 && dy >= -dx && dy < dx {
        Predicate::LeftOf
    } else if dy > 0.0 && dy >= dx && dy > -dx {
        Predicate::Above
    } else if dy < 0.0 && dy <= dx && dy < -dx {
        Predicate::Below
    } else {
        Predicate::RightOf
    };
    Ok(p)
}

/// Input to [`build_scene_graph`]: one annotated object of a source image.
#[derive(Debug, Clone)]
pub struct AnnotatedObject {
    pub category: String,
    pub kind: Kind,
    /// Pixel-frame box in the source image.
    pub bbox: BoundingBox,
    /// Full-image binary mask; optional for stuff regions.
    pub mask: Option<Mask>,
}

impl AnnotatedObject {
    /// Fraction of the image the object covers: mask pixels when a mask
    /// exists (the finer annotation), bbox area otherwise.
    pub fn area_fraction(&self, image_size: (u32, u32)) -> f64 {
        let image_area = image_size.0 as f64 * image_size.1 as f64;
        match &self.mask {
            Some(m) => m.set_count() as f64 / image_area,
            None => self.bbox.area() / image_area,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    /// Objects covering less than this fraction of the image are dropped.
    pub min_area_frac: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Outgoing sampled edges per surviving object.
    pub edges_per_object: usize,
    pub rng_seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            min_area_frac: 0.02,
            min_objects: 3,
            max_objects: 8,
            edges_per_object: 1,
            rng_seed: 0,
        }
    }
}

/// Builds a scene graph from annotated objects.
///
/// Small objects are filtered out, survivors are re-indexed densely, and
/// each survivor gets `edges_per_object` outgoing edges to distinct
/// uniformly sampled peers, labeled by [`classify_relation`]. Deterministic
/// given `cfg.rng_seed`. Returns the surviving indices into `objects`
/// alongside the graph so callers can align per-object data.
pub fn build_scene_graph(
    objects: &[AnnotatedObject],
    image_size: (u32, u32),
    cfg: &BuildConfig,
) -> Result<(SceneGraph, Vec<usize>)> {
    let survivors: Vec<usize> = (0..objects.len())
        .filter(|&i| objects[i].area_fraction(image_size) >= cfg.min_area_frac)
        .collect();
    let n = survivors.len();
    if n < cfg.min_objects || n > cfg.max_objects {
        return Err(Error::SceneRejected(n, cfg.min_objects, cfg.max_objects));
    }

    let nodes: Vec<ObjectNode> = survivors
        .iter()
        .enumerate()
        .map(|(new_idx, &src)| ObjectNode {
            index: new_idx,
            category: objects[src].category.clone(),
            kind: objects[src].kind,
            bbox: Some(objects[src].bbox),
            mask_ref: None,
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut relations = Vec::new();
    for subject in 0..n {
        let mut peers: Vec<usize> = (0..n).filter(|&j| j != subject).collect();
        peers.shuffle(&mut rng);
        let mut added = 0;
        for peer in peers {
            if added == cfg.edges_per_object {
                break;
            }
            let s_box = nodes[subject].bbox.as_ref().unwrap();
            let o_box = nodes[peer].bbox.as_ref().unwrap();
            match classify_relation(s_box, o_box) {
                Ok(predicate) => {
                    relations.push(RelationEdge {
                        subject,
                        predicate,
                        object: peer,
                        augmented: false,
                    });
                    added += 1;
                }
                // A degenerate peer (identical centroid, no containment)
                // cannot be labeled; sample the next one.
                Err(Error::DegenerateGeometry(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    Ok((SceneGraph { image_size, objects: nodes, relations }, survivors))
}

/// Adds heuristic depth-order and support relations to a graph.
///
/// For every pair with positive bbox overlap: two things (or two stuffs)
/// gain `in front of`/`behind` ordered by which bbox bottom edge is closer
/// to the image bottom (ties add nothing); a thing/stuff pair gains
/// `on`/`under` with the thing on top. Both directions are added, existing
/// edges are preserved, duplicates are suppressed, and the result is
/// idempotent under re-application.
pub fn augment_relations(graph: &SceneGraph) -> Result<SceneGraph> {
    let mut out = graph.clone();
    let mut seen = graph.triple_set();
    let n = graph.objects.len();

    let mut push = |out: &mut SceneGraph, s: usize, p: Predicate, o: usize| {
        if seen.insert((s, p.index(), o)) {
            out.relations.push(RelationEdge {
                subject: s,
                predicate: p,
                object: o,
                augmented: true,
            });
        }
    };

    for i in 0..n {
        let bi = graph.objects[i]
            .bbox
            .ok_or_else(|| Error::IncompleteNode(i, "missing bbox".into()))?;
        for j in (i + 1)..n {
            let bj = graph.objects[j]
                .bbox
                .ok_or_else(|| Error::IncompleteNode(j, "missing bbox".into()))?;
            if bi.intersection_area(&bj) <= 0.0 {
                continue;
            }
            let (ki, kj) = (graph.objects[i].kind, graph.objects[j].kind);
            match (ki, kj) {
                (Kind::Thing, Kind::Stuff) => {
                    push(&mut out, i, Predicate::On, j);
                    push(&mut out, j, Predicate::Under, i);
                }
                (Kind::Stuff, Kind::Thing) => {
                    push(&mut out, j, Predicate::On, i);
                    push(&mut out, i, Predicate::Under, j);
                }
                // Thing-thing and stuff-stuff both use the bottom-edge
                // depth heuristic.
                _ => {
                    let (front, back) = if bi.bottom > bj.bottom {
                        (i, j)
                    } else if bj.bottom > bi.bottom {
                        (j, i)
                    } else {
                        continue;
                    };
                    push(&mut out, front, Predicate::InFrontOf, back);
                    push(&mut out, back, Predicate::Behind, front);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct WireGraph {
    image_size: [u32; 2],
    objects: Vec<WireObject>,
    relations: Vec<WireRelation>,
}

#[derive(Serialize, Deserialize)]
struct WireObject {
    index: usize,
    category: String,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    bbox: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    mask_ref: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct WireRelation {
    s: usize,
    p: String,
    o: usize,
    aug: bool,
}

/// Parses the scene-graph JSON format, validating indices, predicates,
/// kinds, boxes, and triple uniqueness.
pub fn parse_scene_graph(text: &str) -> Result<SceneGraph> {
    let wire: WireGraph = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("scene graph JSON: {e}")))?;

    let n = wire.objects.len();
    if n == 0 {
        return Err(Error::Parse("scene graph has no objects".into()));
    }

    let mut objects: Vec<Option<ObjectNode>> = vec![None; n];
    for (pos, w) in wire.objects.into_iter().enumerate() {
        if w.index >= n {
            return Err(Error::Parse(format!(
                "object {pos}: index {} out of range for {n} objects",
                w.index
            )));
        }
        if objects[w.index].is_some() {
            return Err(Error::Parse(format!(
                "object {pos}: duplicate index {}",
                w.index
            )));
        }
        let kind = Kind::from_name(&w.kind)
            .ok_or_else(|| Error::Parse(format!("object {pos}: unknown kind {:?}", w.kind)))?;
        let bbox = match w.bbox {
            Some([l, t, r, b]) => {
                let bb = BoundingBox::pixel(l, t, r, b);
                if !bb.is_valid() {
                    return Err(Error::Parse(format!(
                        "object {pos}: invalid bbox [{l}, {t}, {r}, {b}]"
                    )));
                }
                Some(bb)
            }
            None => None,
        };
        objects[w.index] = Some(ObjectNode {
            index: w.index,
            category: w.category,
            kind,
            bbox,
            mask_ref: w.mask_ref,
        });
    }
    let objects: Vec<ObjectNode> = objects.into_iter().map(|o| o.unwrap()).collect();

    let mut relations = Vec::with_capacity(wire.relations.len());
    let mut seen = BTreeSet::new();
    for (pos, w) in wire.relations.into_iter().enumerate() {
        let predicate = Predicate::from_name(&w.p)
            .ok_or_else(|| Error::Parse(format!("relation {pos}: unknown predicate {:?}", w.p)))?;
        if w.s >= n || w.o >= n {
            return Err(Error::Parse(format!(
                "relation {pos}: dangling object index {}",
                if w.s >= n { w.s } else { w.o }
            )));
        }
        if w.s == w.o {
            return Err(Error::Parse(format!(
                "relation {pos}: subject equals object ({})",
                w.s
            )));
        }
        if !seen.insert((w.s, predicate.index(), w.o)) {
            return Err(Error::Parse(format!(
                "relation {pos}: duplicate triple ({}, {}, {})",
                w.s, w.p, w.o
            )));
        }
        relations.push(RelationEdge {
            subject: w.s,
            predicate,
            object: w.o,
            augmented: w.aug,
        });
    }

    Ok(SceneGraph { image_size: (wire.image_size[0], wire.image_size[1]), objects, relations })
}

/// Serializes a graph canonically: objects by index, relations ordered by
/// (subject, predicate, object), stable key order.
pub fn serialize_scene_graph(graph: &SceneGraph) -> String {
    let mut relations = graph.relations.clone();
    relations.sort_by_key(|e| (e.subject, e.predicate.index(), e.object));
    let wire = WireGraph {
        image_size: [graph.image_size.0, graph.image_size.1],
        objects: graph
            .objects
            .iter()
            .map(|o| WireObject {
                index: o.index,
                category: o.category.clone(),
                kind: o.kind.name().to_string(),
                bbox: o.bbox.map(|b| [b.left, b.top, b.right, b.bottom]),
                mask_ref: o.mask_ref.clone(),
            })
            .collect(),
        relations: relations
            .iter()
            .map(|e| WireRelation {
                s: e.subject,
                p: e.predicate.name().to_string(),
                o: e.object,
                aug: e.augmented,
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("scene graph serialization cannot fail")
}
