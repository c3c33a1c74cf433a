//! Scene-graph layout generation and shape-aware patch retrieval.
//!
//! The pipeline: a scene graph (objects + pairwise spatial predicates) is
//! augmented with heuristic depth/support relations, embedded by a graph
//! convolutional network, decoded into per-object extreme points and soft
//! masks, and composed into a spatial layout. Normalized extreme-point
//! descriptors double as retrieval keys for shape-aware patch lookup, and the
//! relation-score metric checks how well a predicted layout complies with the
//! input graph.
//!
//! Modules follow the pipeline stages:
//!
//! - [`scenegraph`]: graph data model, relation classification, heuristic
//!   augmentation, and the JSON file format.
//! - [`geometry`]: extreme points, bounding boxes, octagons, masks, IoU.
//! - [`metrics`]: relation score and average-IoU evaluation.
//! - [`nn`]: dense f64 tensors, the layer zoo, Adam, gradient checking, and
//!   the checkpoint format.
//! - [`model`]: the three networks (GCN, extreme-point head, mask head).
//! - [`train`]: losses and the training loop.
//! - [`composition`]: embedding warping and layout rendering.
//! - [`retrieval`]: patch database, top-k queries, baselines, evaluation.
//! - [`ingest`]: COCO-style annotation loading.
//! - [`synth`]: seeded synthetic scenes used as the test corpus.
//! - [`ppm`]: binary PPM image I/O.

pub mod composition;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ppm;
pub mod retrieval;
pub mod scenegraph;
pub mod synth;
pub mod train;

use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Geometry that admits no answer (identical centroids with no
    /// containment, zero-size boxes, polygons with < 3 vertices).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// A mask with no set pixels where at least one is required.
    #[error("empty mask")]
    EmptyMask,
    /// Mismatched tensor/mask/list dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// Scene has too few or too many objects after area filtering.
    #[error("scene rejected: {0} objects survive filtering (need {1}..={2})")]
    SceneRejected(usize, usize, usize),
    /// A graph node is missing data a heuristic needs.
    #[error("incomplete node {0}: {1}")]
    IncompleteNode(usize, String),
    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),
    /// Category or predicate outside the configured vocabulary.
    #[error("unknown vocabulary entry: {0}")]
    UnknownVocab(String),
    /// Metric asked to score a graph without relations.
    #[error("graph has no relations")]
    NoRelations,
    /// Layer backward called without a cached forward pass.
    #[error("backward called before forward on {0}")]
    NoForwardCache(&'static str),
    /// Operation requires a non-empty dataset or record set.
    #[error("empty dataset")]
    EmptyDataset,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
