//! Relation-score and average-IoU evaluation of predicted layouts.
//!
//! IoU against ground truth misses relationship compliance in both
//! directions: a high-overlap prediction can invert a spatial relation, and
//! a zero-overlap prediction can still respect it. The relation score counts
//! the fraction of graph edges whose predicate actually holds for the
//! predicted boxes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{box_iou, BoundingBox, ExtremePoints, Mask};
use crate::scenegraph::{classify_relation, Kind, Predicate, SceneGraph};
use crate::{Error, Result};

/// Per-object model output aligned by index to a scene graph's objects.
#[derive(Debug, Clone)]
pub struct LayoutPrediction {
    /// Normalized-frame extreme points, one per object.
    pub extreme_points: Vec<ExtremePoints>,
    /// Normalized-frame boxes derived from the extreme points.
    pub boxes: Vec<BoundingBox>,
    /// K x K soft masks.
    pub masks: Vec<Mask>,
}

/// Satisfaction counts for one predicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateCount {
    pub satisfied: usize,
    pub total: usize,
}

/// Aggregated evaluation results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub relation_score: f64,
    pub avg_iou: f64,
    pub n_objects: usize,
    pub n_relations: usize,
    pub per_predicate: BTreeMap<String, PredicateCount>,
}

/// Does `predicate` hold for the subject/object boxes?
///
/// Geometric predicates are checked by re-classification, the same rule that
/// labeled the edges, so ground-truth boxes always satisfy their own graph.
/// `in front of`/`behind` compare bbox bottom edges (strictly, no overlap
/// required); `on`/`under` require the thing/stuff kind pattern plus any
/// positive overlap.
pub fn relation_satisfied(
    predicate: Predicate,
    subject_box: &BoundingBox,
    subject_kind: Kind,
    object_box: &BoundingBox,
    object_kind: Kind,
) -> bool {
    match predicate {
        p if p.is_geometric() => classify_relation(subject_box, object_box)
            .map(|got| got == p)
            .unwrap_or(false),
        Predicate::InFrontOf => subject_box.bottom > object_box.bottom,
        Predicate::Behind => subject_box.bottom < object_box.bottom,
        Predicate::On => {
            subject_kind == Kind::Thing
                && object_kind == Kind::Stuff
                && subject_box.intersection_area(object_box) > 0.0
        }
        Predicate::Under => {
            subject_kind == Kind::Stuff
                && object_kind == Kind::Thing
                && subject_box.intersection_area(object_box) > 0.0
        }
        _ => unreachable!("geometric predicates handled above"),
    }
}

/// Fraction of graph edges satisfied by the given per-object boxes.
pub fn relation_score(graph: &SceneGraph, boxes: &[BoundingBox]) -> Result<f64> {
    if graph.relations.is_empty() {
        return Err(Error::NoRelations);
    }
    if boxes.len() != graph.objects.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} boxes for {} objects",
            boxes.len(),
            graph.objects.len()
        )));
    }
    let satisfied = graph
        .relations
        .iter()
        .filter(|e| {
            relation_satisfied(
                e.predicate,
                &boxes[e.subject],
                graph.node(e.subject).kind,
                &boxes[e.object],
                graph.node(e.object).kind,
            )
        })
        .count();
    Ok(satisfied as f64 / graph.relations.len() as f64)
}

/// Mean box IoU over index-aligned predicted and ground-truth boxes.
pub fn avg_iou(pred_boxes: &[BoundingBox], gt_boxes: &[BoundingBox]) -> Result<f64> {
    if pred_boxes.len() != gt_boxes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predicted vs {} ground-truth boxes",
            pred_boxes.len(),
            gt_boxes.len()
        )));
    }
    if pred_boxes.is_empty() {
        return Err(Error::ShapeMismatch("no boxes to compare".into()));
    }
    let total: f64 = pred_boxes
        .iter()
        .zip(gt_boxes.iter())
        .map(|(p, g)| box_iou(p, g))
        .sum();
    Ok(total / pred_boxes.len() as f64)
}

/// Full report: relation score, average IoU, and per-predicate counts.
pub fn evaluate_layout(
    graph: &SceneGraph,
    pred_boxes: &[BoundingBox],
    gt_boxes: &[BoundingBox],
) -> Result<EvalReport> {
    let score = relation_score(graph, pred_boxes)?;
    let iou = avg_iou(pred_boxes, gt_boxes)?;
    let mut per_predicate: BTreeMap<String, PredicateCount> = BTreeMap::new();
    for e in &graph.relations {
        let entry = per_predicate.entry(e.predicate.name().to_string()).or_default();
        entry.total += 1;
        if relation_satisfied(
            e.predicate,
            &pred_boxes[e.subject],
            graph.node(e.subject).kind,
            &pred_boxes[e.object],
            graph.node(e.object).kind,
        ) {
            entry.satisfied += 1;
        }
    }
    Ok(EvalReport {
        relation_score: score,
        avg_iou: iou,
        n_objects: graph.objects.len(),
        n_relations: graph.relations.len(),
        per_predicate,
    })
}

/// Pools several per-scene evaluations into one report, weighting by edge
/// and object counts.
pub fn merge_reports(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_predicate: BTreeMap<String, PredicateCount> = BTreeMap::new();
    let mut n_objects = 0;
    let mut n_relations = 0;
    let mut iou_weighted = 0.0;
    for r in reports {
        n_objects += r.n_objects;
        n_relations += r.n_relations;
        iou_weighted += r.avg_iou * r.n_objects as f64;
        for (name, c) in &r.per_predicate {
            let entry = per_predicate.entry(name.clone()).or_default();
            entry.satisfied += c.satisfied;
            entry.total += c.total;
        }
    }
    let satisfied: usize = per_predicate.values().map(|c| c.satisfied).sum();
    Ok(EvalReport {
        relation_score: satisfied as f64 / n_relations as f64,
        avg_iou: iou_weighted / n_objects as f64,
        n_objects,
        n_relations,
        per_predicate,
    })
}
