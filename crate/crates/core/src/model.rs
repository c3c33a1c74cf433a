//! The three layout networks and their composed forward pass.
//!
//! A scene graph enters as per-category node embeddings and per-predicate
//! edge embeddings. Five graph-convolution layers exchange messages along
//! edges; the final node vectors feed an extreme-point regression head and,
//! concatenated with the regressed points, a conditioned mask prediction
//! head. Everything is differentiable end to end through hand-derived
//! backward passes.

use serde::{Deserialize, Serialize};

use crate::geometry::{bbox_from_extreme_points, ExtremePoints, Frame, Mask, RecoveredBox};
use crate::nn::{
    backward_stack, forward_stack, BatchNorm2d, Conv2d, Layer, Linear, Mode, Param, ReLU, Sigmoid,
    Tensor, Upsample2x,
};
use crate::scenegraph::{Category, Predicate, SceneGraph};
use crate::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Network dimensions. The graph convolution keeps its input and output
/// widths equal so isolated nodes can pass through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width, GCN layer width, and mask-net channel count.
    pub d: usize,
    /// Hidden width of the GCN message MLP and the extreme-point head.
    pub hidden: usize,
    pub gcn_layers: usize,
    /// Output mask resolution; must equal 2^mask_blocks.
    pub mask_k: usize,
    pub mask_blocks: usize,
}

impl ModelConfig {
    /// Full-scale dimensions.
    pub fn paper() -> Self {
        Self { d: 128, hidden: 512, gcn_layers: 5, mask_k: 16, mask_blocks: 4 }
    }

    /// Reduced dimensions that train in minutes on one core.
    pub fn desk() -> Self {
        Self { d: 32, hidden: 64, gcn_layers: 5, mask_k: 16, mask_blocks: 4 }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden == 0 || self.gcn_layers == 0 {
            return Err(Error::ShapeMismatch("model dims must be positive".into()));
        }
        if self.mask_k != 1 << self.mask_blocks {
            return Err(Error::ShapeMismatch(format!(
                "mask_k {} != 2^{}",
                self.mask_k, self.mask_blocks
            )));
        }
        Ok(())
    }
}

/// Category vocabulary; a category's position is its embedding row.
#[derive(Debug, Clone)]
pub struct Vocab {
    pub categories: Vec<Category>,
}

impl Vocab {
    pub fn new(categories: Vec<Category>) -> Self {
        Self { categories }
    }

    pub fn category_index(&self, name: &str) -> Result<usize> {
        self.categories
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownVocab(format!("category {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// One graph-convolution layer.
///
/// Every edge (s, p, o) pushes [v_s; e_p; v_o] through a two-stage MLP that
/// emits a subject candidate, a new edge vector, and an object candidate.
/// Nodes mean-pool their incident candidates and pass through a node MLP;
/// nodes without edges keep their previous vector.
#[derive(Debug, Clone)]
struct GcnLayer {
    edge_in: Linear,  // 3d -> hidden
    relu: ReLU,
    edge_out: Linear, // hidden -> hidden + d + hidden
    node: Linear,     // hidden -> d
    d: usize,
    hidden: usize,
    cache: Option<GcnLayerCache>,
}

#[derive(Debug, Clone)]
struct GcnLayerCache {
    triples: Vec<(usize, usize)>,
    counts: Vec<usize>,
    /// Row of each pooled node in the node-MLP input matrix; None for
    /// isolated nodes.
    node_rows: Vec<Option<usize>>,
}

impl GcnLayer {
    fn new(name: &str, d: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            edge_in: Linear::new(&format!("{name}.edge_in"), 3 * d, hidden, rng),
            relu: ReLU::new(),
            edge_out: Linear::new(&format!("{name}.edge_out"), hidden, 2 * hidden + d, rng),
            node: Linear::new(&format!("{name}.node"), hidden, d, rng),
            d,
            hidden,
            cache: None,
        }
    }

    fn forward(
        &mut self,
        nodes: &Tensor,
        edges: &Tensor,
        triples: &[(usize, usize)],
    ) -> Result<(Tensor, Tensor)> {
        let n = nodes.shape[0];
        let m = triples.len();
        let d = self.d;
        let h = self.hidden;

        let mut t = Tensor::zeros(&[m, 3 * d]);
        for (e, &(s, o)) in triples.iter().enumerate() {
            t.data[e * 3 * d..e * 3 * d + d].copy_from_slice(&nodes.data[s * d..(s + 1) * d]);
            t.data[e * 3 * d + d..e * 3 * d + 2 * d]
                .copy_from_slice(&edges.data[e * d..(e + 1) * d]);
            t.data[e * 3 * d + 2 * d..(e + 1) * 3 * d]
                .copy_from_slice(&nodes.data[o * d..(o + 1) * d]);
        }
        let h1 = self.relu.forward(&self.edge_in.forward(&t)?);
        let u = self.edge_out.forward(&h1)?;

        let mut new_edges = Tensor::zeros(&[m, d]);
        let mut pooled_sum = Tensor::zeros(&[n, h]);
        let mut counts = vec![0usize; n];
        for (e, &(s, o)) in triples.iter().enumerate() {
            let row = &u.data[e * (2 * h + d)..(e + 1) * (2 * h + d)];
            for j in 0..h {
                pooled_sum.data[s * h + j] += row[j];
            }
            new_edges.data[e * d..(e + 1) * d].copy_from_slice(&row[h..h + d]);
            for j in 0..h {
                pooled_sum.data[o * h + j] += row[h + d + j];
            }
            counts[s] += 1;
            counts[o] += 1;
        }

        let mut node_rows = vec![None; n];
        let mut pooled_rows = Vec::new();
        for v in 0..n {
            if counts[v] > 0 {
                node_rows[v] = Some(pooled_rows.len() / h);
                let c = counts[v] as f64;
                for j in 0..h {
                    pooled_rows.push(pooled_sum.data[v * h + j] / c);
                }
            }
        }
        let n_pooled = pooled_rows.len() / h;
        let pooled = Tensor::from_vec(&[n_pooled, h], pooled_rows)?;
        let node_out = self.node.forward(&pooled)?;

        let mut new_nodes = nodes.clone();
        for v in 0..n {
            if let Some(row) = node_rows[v] {
                new_nodes.data[v * d..(v + 1) * d]
                    .copy_from_slice(&node_out.data[row * d..(row + 1) * d]);
            }
        }
        self.cache = Some(GcnLayerCache { triples: triples.to_vec(), counts, node_rows });
        Ok((new_nodes, new_edges))
    }

    fn backward(&mut self, d_nodes: &Tensor, d_edges: &Tensor) -> Result<(Tensor, Tensor)> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::NoForwardCache("GcnLayer"))?
            .clone();
        let n = cache.counts.len();
        let m = cache.triples.len();
        let d = self.d;
        let h = self.hidden;

        // Node MLP backward for pooled nodes; isolated nodes pass gradients
        // straight through.
        let n_pooled = cache.node_rows.iter().flatten().count();
        let mut d_node_out = Tensor::zeros(&[n_pooled, d]);
        let mut d_in_nodes = Tensor::zeros(&[n, d]);
        for v in 0..n {
            match cache.node_rows[v] {
                Some(row) => d_node_out.data[row * d..(row + 1) * d]
                    .copy_from_slice(&d_nodes.data[v * d..(v + 1) * d]),
                None => d_in_nodes.data[v * d..(v + 1) * d]
                    .copy_from_slice(&d_nodes.data[v * d..(v + 1) * d]),
            }
        }
        let d_pooled = self.node.backward(&d_node_out)?;

        // Distribute pooled gradients back to edge candidates (mean pool).
        let mut d_u = Tensor::zeros(&[m, 2 * h + d]);
        for (e, &(s, o)) in cache.triples.iter().enumerate() {
            let row = &mut d_u.data[e * (2 * h + d)..(e + 1) * (2 * h + d)];
            if let Some(sr) = cache.node_rows[s] {
                let c = cache.counts[s] as f64;
                for j in 0..h {
                    row[j] = d_pooled.data[sr * h + j] / c;
                }
            }
            row[h..h + d].copy_from_slice(&d_edges.data[e * d..(e + 1) * d]);
            if let Some(or) = cache.node_rows[o] {
                let c = cache.counts[o] as f64;
                for j in 0..h {
                    row[h + d + j] = d_pooled.data[or * h + j] / c;
                }
            }
        }

        let d_h1 = self.edge_out.backward(&d_u)?;
        let d_t = self.edge_in.backward(&self.relu.backward(&d_h1)?)?;

        let mut d_in_edges = Tensor::zeros(&[m, d]);
        for (e, &(s, o)) in cache.triples.iter().enumerate() {
            let row = &d_t.data[e * 3 * d..(e + 1) * 3 * d];
            for j in 0..d {
                d_in_nodes.data[s * d + j] += row[j];
                d_in_edges.data[e * d + j] = row[d + j];
                d_in_nodes.data[o * d + j] += row[2 * d + j];
            }
        }
        Ok((d_in_nodes, d_in_edges))
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.edge_in.w,
            &mut self.edge_in.b,
            &mut self.edge_out.w,
            &mut self.edge_out.b,
            &mut self.node.w,
            &mut self.node.b,
        ]
    }
}

/// Raw tensors a forward pass produces, kept for loss computation.
#[derive(Debug, Clone)]
pub struct ModelForward {
    /// Final node embeddings, `[n, d]`.
    pub embeddings: Tensor,
    /// Unclamped extreme-point coordinates, `[n, 10]`.
    pub ep_raw: Tensor,
    /// Soft masks, `[n, 1, k, k]`.
    pub masks: Tensor,
}

/// Per-object inference output in the normalized layout frame.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub extreme_points: Vec<ExtremePoints>,
    pub boxes: Vec<RecoveredBox>,
    pub masks: Vec<Mask>,
}

#[derive(Debug, Clone)]
struct ModelCache {
    cat_rows: Vec<usize>,
    pred_rows: Vec<usize>,
}

/// The composed layout network.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    cat_embed: Param,
    pred_embed: Param,
    gcn: Vec<GcnLayer>,
    ep_fc1: Linear,
    ep_relu: ReLU,
    ep_fc2: Linear,
    mask_proj: Linear,
    mask_trunk: Vec<Layer>,
    cache: Option<ModelCache>,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::UnknownVocab("empty category vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d;
        let n_cat = vocab.len();
        let n_pred = Predicate::ALL.len();

        let cat_embed = Param::new(
            "embed.category",
            Tensor::glorot_uniform(&[n_cat, d], n_cat, d, &mut rng),
        );
        let pred_embed = Param::new(
            "embed.predicate",
            Tensor::glorot_uniform(&[n_pred, d], n_pred, d, &mut rng),
        );
        let gcn = (0..config.gcn_layers)
            .map(|i| GcnLayer::new(&format!("gcn.{i}"), d, config.hidden, &mut rng))
            .collect();
        let ep_fc1 = Linear::new("ep.fc1", d, config.hidden, &mut rng);
        let ep_fc2 = Linear::new("ep.fc2", config.hidden, 10, &mut rng);
        let mask_proj = Linear::new("mask.proj", d + 10, d, &mut rng);

        let mut mask_trunk = Vec::new();
        for i in 0..config.mask_blocks {
            mask_trunk.push(Layer::UpsampleNearest2x(Upsample2x::new()));
            mask_trunk.push(Layer::BatchNorm(BatchNorm2d::new(
                &format!("mask.block{i}.bn"),
                d,
            )));
            mask_trunk.push(Layer::Conv3x3(Conv2d::new(
                &format!("mask.block{i}.conv"),
                d,
                d,
                3,
                &mut rng,
            )));
            mask_trunk.push(Layer::ReLU(ReLU::new()));
        }
        mask_trunk.push(Layer::Conv1x1(Conv2d::new("mask.out", d, 1, 1, &mut rng)));
        mask_trunk.push(Layer::Sigmoid(Sigmoid::new()));

        Ok(Self {
            config,
            vocab,
            cat_embed,
            pred_embed,
            gcn,
            ep_fc1,
            ep_relu: ReLU::new(),
            ep_fc2,
            mask_proj,
            mask_trunk,
            cache: None,
        })
    }

    /// Embeds a graph and runs the GCN stack: the per-object embedding
    /// vectors everything downstream consumes.
    pub fn embed_graph(&mut self, graph: &SceneGraph) -> Result<Tensor> {
        let d = self.config.d;
        let n = graph.objects.len();
        let cat_rows: Vec<usize> = graph
            .objects
            .iter()
            .map(|o| self.vocab.category_index(&o.category))
            .collect::<Result<_>>()?;
        let pred_rows: Vec<usize> = graph.relations.iter().map(|e| e.predicate.index()).collect();
        let triples: Vec<(usize, usize)> =
            graph.relations.iter().map(|e| (e.subject, e.object)).collect();

        let mut nodes = Tensor::zeros(&[n, d]);
        for (v, &row) in cat_rows.iter().enumerate() {
            nodes.data[v * d..(v + 1) * d]
                .copy_from_slice(&self.cat_embed.value.data[row * d..(row + 1) * d]);
        }
        let mut edges = Tensor::zeros(&[triples.len(), d]);
        for (e, &row) in pred_rows.iter().enumerate() {
            edges.data[e * d..(e + 1) * d]
                .copy_from_slice(&self.pred_embed.value.data[row * d..(row + 1) * d]);
        }

        for layer in self.gcn.iter_mut() {
            let (new_nodes, new_edges) = layer.forward(&nodes, &edges, &triples)?;
            nodes = new_nodes;
            edges = new_edges;
        }
        self.cache = Some(ModelCache { cat_rows, pred_rows });
        Ok(nodes)
    }

    /// Two fully connected layers with a ReLU between; raw (unclamped)
    /// normalized coordinates.
    pub fn regress_extreme_points(&mut self, embeddings: &Tensor) -> Result<Tensor> {
        let h = self.ep_fc1.forward(embeddings)?;
        self.ep_fc2.forward(&self.ep_relu.forward(&h))
    }

    /// Mask head conditioned on the regressed points: the embedding and the
    /// ten coordinates are concatenated, projected back to `d`, reshaped to
    /// a 1x1 spatial seed, and upsampled through the conv blocks.
    pub fn predict_masks(&mut self, embeddings: &Tensor, ep_raw: &Tensor, mode: Mode) -> Result<Tensor> {
        let n = embeddings.shape[0];
        let d = self.config.d;
        if ep_raw.shape != [n, 10] {
            return Err(Error::ShapeMismatch(format!(
                "extreme-point input must be [{n}, 10], got {:?}",
                ep_raw.shape
            )));
        }
        let mut concat = Tensor::zeros(&[n, d + 10]);
        for i in 0..n {
            concat.data[i * (d + 10)..i * (d + 10) + d]
                .copy_from_slice(&embeddings.data[i * d..(i + 1) * d]);
            concat.data[i * (d + 10) + d..(i + 1) * (d + 10)]
                .copy_from_slice(&ep_raw.data[i * 10..(i + 1) * 10]);
        }
        let seed = self.mask_proj.forward(&concat)?.reshape(&[n, d, 1, 1])?;
        forward_stack(&mut self.mask_trunk, &seed, mode)
    }

    /// Full forward pass, caching activations for [`Model::backward`].
    pub fn forward(&mut self, graph: &SceneGraph, mode: Mode) -> Result<ModelForward> {
        let embeddings = self.embed_graph(graph)?;
        let ep_raw = self.regress_extreme_points(&embeddings)?;
        let masks = self.predict_masks(&embeddings, &ep_raw, mode)?;
        Ok(ModelForward { embeddings, ep_raw, masks })
    }

    /// Accumulates parameter gradients given upstream loss gradients on the
    /// raw extreme points and masks. Gradients reaching the mask head's
    /// point input flow back into the regression head as well.
    pub fn backward(&mut self, d_ep_raw: &Tensor, d_masks: &Tensor) -> Result<()> {
        let cache = self.cache.clone().ok_or(Error::NoForwardCache("Model"))?;
        let d = self.config.d;
        let n = d_ep_raw.shape[0];

        let d_seed = backward_stack(&mut self.mask_trunk, d_masks)?.reshape(&[n, d])?;
        let d_concat = self.mask_proj.backward(&d_seed)?;

        let mut d_emb_from_mask = Tensor::zeros(&[n, d]);
        let mut d_ep_total = d_ep_raw.clone();
        for i in 0..n {
            d_emb_from_mask.data[i * d..(i + 1) * d]
                .copy_from_slice(&d_concat.data[i * (d + 10)..i * (d + 10) + d]);
            for j in 0..10 {
                d_ep_total.data[i * 10 + j] += d_concat.data[i * (d + 10) + d + j];
            }
        }

        let d_h = self.ep_relu.backward(&self.ep_fc2.backward(&d_ep_total)?)?;
        let d_emb_from_ep = self.ep_fc1.backward(&d_h)?;

        let mut d_nodes = d_emb_from_mask;
        for (a, b) in d_nodes.data.iter_mut().zip(d_emb_from_ep.data.iter()) {
            *a += b;
        }
        let mut d_edges = Tensor::zeros(&[cache.pred_rows.len(), d]);
        for layer in self.gcn.iter_mut().rev() {
            let (dn, de) = layer.backward(&d_nodes, &d_edges)?;
            d_nodes = dn;
            d_edges = de;
        }

        for (v, &row) in cache.cat_rows.iter().enumerate() {
            for j in 0..d {
                self.cat_embed.grad.data[row * d + j] += d_nodes.data[v * d + j];
            }
        }
        for (e, &row) in cache.pred_rows.iter().enumerate() {
            for j in 0..d {
                self.pred_embed.grad.data[row * d + j] += d_edges.data[e * d + j];
            }
        }
        Ok(())
    }

    /// Deterministic eval-mode inference: clamped extreme points, derived
    /// (sanitized) boxes, and per-object soft masks.
    pub fn predict(&mut self, graph: &SceneGraph) -> Result<ModelOutput> {
        let fwd = self.forward(graph, Mode::Eval)?;
        let n = graph.objects.len();
        let k = self.config.mask_k;
        let mut extreme_points = Vec::with_capacity(n);
        let mut boxes = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        for i in 0..n {
            let mut coords = [0.0; 10];
            for (j, c) in coords.iter_mut().enumerate() {
                *c = fwd.ep_raw.data[i * 10 + j].clamp(0.0, 1.0);
            }
            let ep = ExtremePoints::from_array(&coords, Frame::Normalized);
            boxes.push(bbox_from_extreme_points(&ep));
            extreme_points.push(ep);
            let mask_values = fwd.masks.data[i * k * k..(i + 1) * k * k].to_vec();
            masks.push(Mask::from_values(k, k, mask_values)?);
        }
        Ok(ModelOutput { extreme_points, boxes, masks })
    }

    /// Trainable parameters in a fixed registration order.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Param> {
        let mut ps = vec![&mut self.cat_embed, &mut self.pred_embed];
        for layer in self.gcn.iter_mut() {
            ps.extend(layer.params_mut());
        }
        ps.push(&mut self.ep_fc1.w);
        ps.push(&mut self.ep_fc1.b);
        ps.push(&mut self.ep_fc2.w);
        ps.push(&mut self.ep_fc2.b);
        ps.push(&mut self.mask_proj.w);
        ps.push(&mut self.mask_proj.b);
        for layer in self.mask_trunk.iter_mut() {
            ps.extend(layer.params_mut());
        }
        ps
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.trainable_params_mut().into_iter().find(|p| p.name == name)
    }

    pub fn zero_grads(&mut self) {
        for p in self.trainable_params_mut() {
            p.zero_grad();
        }
    }

    /// All persistent state: trainable parameters plus batch-norm running
    /// statistics, in checkpoint order.
    pub fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            (self.cat_embed.name.clone(), self.cat_embed.value.clone()),
            (self.pred_embed.name.clone(), self.pred_embed.value.clone()),
        ];
        for layer in &self.gcn {
            for p in [
                (&layer.edge_in.w, &layer.edge_in.b),
                (&layer.edge_out.w, &layer.edge_out.b),
                (&layer.node.w, &layer.node.b),
            ] {
                out.push((p.0.name.clone(), p.0.value.clone()));
                out.push((p.1.name.clone(), p.1.value.clone()));
            }
        }
        for p in [&self.ep_fc1.w, &self.ep_fc1.b, &self.ep_fc2.w, &self.ep_fc2.b] {
            out.push((p.name.clone(), p.value.clone()));
        }
        out.push((self.mask_proj.w.name.clone(), self.mask_proj.w.value.clone()));
        out.push((self.mask_proj.b.name.clone(), self.mask_proj.b.value.clone()));
        for layer in &self.mask_trunk {
            for p in layer.params() {
                out.push((p.name.clone(), p.value.clone()));
            }
            if let Layer::BatchNorm(bn) = layer {
                let base = bn.gamma.name.trim_end_matches(".gamma");
                out.push((format!("{base}.running_mean"), bn.running_mean.clone()));
                out.push((format!("{base}.running_var"), bn.running_var.clone()));
            }
        }
        out
    }

    /// Restores state saved by [`Model::state_tensors`]; names and shapes
    /// must match exactly.
    pub fn load_state(&mut self, items: &[(String, Tensor)]) -> Result<()> {
        let mut remaining: std::collections::BTreeMap<&str, &Tensor> =
            items.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut assign = |name: &str, value: &mut Tensor| -> Result<()> {
            let t = remaining
                .remove(name)
                .ok_or_else(|| Error::Parse(format!("checkpoint missing tensor {name:?}")))?;
            if t.shape != value.shape {
                return Err(Error::ShapeMismatch(format!(
                    "checkpoint tensor {name:?} has shape {:?}, model expects {:?}",
                    t.shape, value.shape
                )));
            }
            *value = t.clone();
            Ok(())
        };

        assign("embed.category", &mut self.cat_embed.value)?;
        assign("embed.predicate", &mut self.pred_embed.value)?;
        for layer in self.gcn.iter_mut() {
            for p in layer.params_mut() {
                let name = p.name.clone();
                assign(&name, &mut p.value)?;
            }
        }
        for p in [
            &mut self.ep_fc1.w,
            &mut self.ep_fc1.b,
            &mut self.ep_fc2.w,
            &mut self.ep_fc2.b,
            &mut self.mask_proj.w,
            &mut self.mask_proj.b,
        ] {
            let name = p.name.clone();
            assign(&name, &mut p.value)?;
        }
        for layer in self.mask_trunk.iter_mut() {
            if let Layer::BatchNorm(bn) = layer {
                let base = bn.gamma.name.trim_end_matches(".gamma").to_string();
                assign(&bn.gamma.name.clone(), &mut bn.gamma.value)?;
                assign(&bn.beta.name.clone(), &mut bn.beta.value)?;
                assign(&format!("{base}.running_mean"), &mut bn.running_mean)?;
                assign(&format!("{base}.running_var"), &mut bn.running_var)?;
            } else {
                for p in layer.params_mut() {
                    let name = p.name.clone();
                    assign(&name, &mut p.value)?;
                }
            }
        }
        if !remaining.is_empty() {
            return Err(Error::Parse(format!(
                "checkpoint has {} unknown tensors (first: {:?})",
                remaining.len(),
                remaining.keys().next().unwrap()
            )));
        }
        Ok(())
    }
}

/// Hyperparameters and vocabulary stored beside a checkpoint so a saved
/// model can be reconstructed without the training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub d_in: usize,
    pub d_out: usize,
    pub hidden: usize,
    pub layers: usize,
    pub mask_k: usize,
    pub categories: Vec<Category>,
    pub predicates: Vec<String>,
}

impl ModelSidecar {
    pub fn from_model(model: &Model) -> Self {
        Self {
            d_in: model.config.d,
            d_out: model.config.d,
            hidden: model.config.hidden,
            layers: model.config.gcn_layers,
            mask_k: model.config.mask_k,
            categories: model.vocab.categories.clone(),
            predicates: Predicate::ALL.iter().map(|p| p.name().to_string()).collect(),
        }
    }

    pub fn to_parts(&self) -> Result<(ModelConfig, Vocab)> {
        if self.d_in != self.d_out {
            return Err(Error::ShapeMismatch(
                "d_in must equal d_out for pass-through graph convolution".into(),
            ));
        }
        let mask_blocks = self.mask_k.trailing_zeros() as usize;
        let config = ModelConfig {
            d: self.d_in,
            hidden: self.hidden,
            gcn_layers: self.layers,
            mask_k: self.mask_k,
            mask_blocks,
        };
        config.validate()?;
        Ok((config, Vocab::new(self.categories.clone())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegraph::{Kind, ObjectNode, RelationEdge};

    fn tiny_vocab(n: usize) -> Vocab {
        Vocab::new(
            (0..n)
                .map(|i| Category {
                    id: i as u32,
                    name: format!("cat{i}"),
                    kind: if i % 3 == 2 { Kind::Stuff } else { Kind::Thing },
                })
                .collect(),
        )
    }

    fn graph_of(n: usize, edges: &[(usize, Predicate, usize)]) -> SceneGraph {
        SceneGraph {
            image_size: (64, 64),
            objects: (0..n)
                .map(|i| ObjectNode {
                    index: i,
                    category: format!("cat{i}"),
                    kind: Kind::Thing,
                    bbox: None,
                    mask_ref: None,
                })
                .collect(),
            relations: edges
                .iter()
                .map(|&(s, p, o)| RelationEdge {
                    subject: s,
                    predicate: p,
                    object: o,
                    augmented: false,
                })
                .collect(),
        }
    }

    fn small_config() -> ModelConfig {
        ModelConfig { d: 6, hidden: 8, gcn_layers: 2, mask_k: 16, mask_blocks: 4 }
    }

    #[test]
    fn isolated_node_keeps_initial_embedding() {
        let mut model = Model::new(small_config(), tiny_vocab(3), 0).unwrap();
        let graph = graph_of(1, &[]);
        let emb = model.embed_graph(&graph).unwrap();
        assert_eq!(emb.data, model.cat_embed.value.data[0..6].to_vec());
    }

    #[test]
    fn hand_computed_single_layer_message() {
        // d = 2, hidden = 2, identity-like weights: every stage just sums
        // its inputs coordinate-wise, so both nodes end up with
        // v_s + e_p + v_o = [1+0.5+3, 2+0.25+5] = [4.5, 7.25].
        let config = ModelConfig { d: 2, hidden: 2, gcn_layers: 1, mask_k: 16, mask_blocks: 4 };
        let mut model = Model::new(config, tiny_vocab(2), 0).unwrap();
        model.param_mut("embed.category").unwrap().value =
            Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let mut pred = Tensor::zeros(&[10, 2]);
        let p = Predicate::LeftOf.index();
        pred.data[p * 2] = 0.5;
        pred.data[p * 2 + 1] = 0.25;
        model.param_mut("embed.predicate").unwrap().value = pred;
        model.param_mut("gcn.0.edge_in.weight").unwrap().value = Tensor::from_vec(
            &[2, 6],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        model.param_mut("gcn.0.edge_in.bias").unwrap().value = Tensor::zeros(&[2]);
        model.param_mut("gcn.0.edge_out.weight").unwrap().value = Tensor::from_vec(
            &[6, 2],
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        model.param_mut("gcn.0.edge_out.bias").unwrap().value = Tensor::zeros(&[6]);
        model.param_mut("gcn.0.node.weight").unwrap().value =
            Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        model.param_mut("gcn.0.node.bias").unwrap().value = Tensor::zeros(&[2]);

        let graph = graph_of(2, &[(0, Predicate::LeftOf, 1)]);
        let emb = model.embed_graph(&graph).unwrap();
        assert_eq!(emb.data, vec![4.5, 7.25, 4.5, 7.25]);
    }

    #[test]
    fn permutation_equivariance_is_exact() {
        let mut model = Model::new(small_config(), tiny_vocab(4), 3).unwrap();
        let graph = graph_of(
            4,
            &[
                (0, Predicate::LeftOf, 2),
                (1, Predicate::Above, 0),
                (3, Predicate::On, 1),
            ],
        );
        let emb = model.embed_graph(&graph).unwrap();

        // permutation: old index -> new index
        let perm = [2usize, 0, 3, 1];
        let mut objects: Vec<ObjectNode> = vec![
            ObjectNode {
                index: 0,
                category: String::new(),
                kind: Kind::Thing,
                bbox: None,
                mask_ref: None,
            };
            4
        ];
        for o in &graph.objects {
            let mut moved = o.clone();
            moved.index = perm[o.index];
            objects[perm[o.index]] = moved;
        }
        let permuted = SceneGraph {
            image_size: graph.image_size,
            objects,
            relations: graph
                .relations
                .iter()
                .map(|e| RelationEdge {
                    subject: perm[e.subject],
                    predicate: e.predicate,
                    object: perm[e.object],
                    augmented: e.augmented,
                })
                .collect(),
        };
        let emb_p = model.embed_graph(&permuted).unwrap();
        let d = model.config.d;
        for v in 0..4 {
            assert_eq!(
                emb.data[v * d..(v + 1) * d],
                emb_p.data[perm[v] * d..(perm[v] + 1) * d],
                "node {v} embedding changed under permutation"
            );
        }
    }

    #[test]
    fn zero_weight_head_regresses_zeros() {
        let mut model = Model::new(small_config(), tiny_vocab(3), 5).unwrap();
        model.param_mut("ep.fc2.weight").unwrap().value.data.fill(0.0);
        model.param_mut("ep.fc2.bias").unwrap().value.data.fill(0.0);
        let graph = graph_of(2, &[(0, Predicate::Below, 1)]);
        let out = model.predict(&graph).unwrap();
        assert!(out.ep_all_zero());
        assert!(out.boxes.iter().all(|b| b.sanitized));
    }

    #[test]
    fn bias_passthrough_gives_trivial_descriptor() {
        let mut model = Model::new(small_config(), tiny_vocab(3), 5).unwrap();
        model.param_mut("ep.fc2.weight").unwrap().value.data.fill(0.0);
        // bias = trivial extreme points of the unit box
        let trivial = [0.0, 0.5, 0.5, 0.0, 1.0, 0.5, 0.5, 1.0, 0.5, 0.5];
        model.param_mut("ep.fc2.bias").unwrap().value =
            Tensor::from_vec(&[10], trivial.to_vec()).unwrap();
        let graph = graph_of(2, &[(0, Predicate::Below, 1)]);
        let out = model.predict(&graph).unwrap();
        let desc = crate::geometry::normalize_descriptor(&out.extreme_points[0]).unwrap();
        assert_eq!(desc.0, trivial);
    }

    impl ModelOutput {
        fn ep_all_zero(&self) -> bool {
            self.extreme_points
                .iter()
                .all(|ep| ep.to_array().iter().all(|&c| c == 0.0))
        }
    }

    #[test]
    fn masks_are_16x16_in_open_unit_interval() {
        let mut model = Model::new(small_config(), tiny_vocab(4), 9).unwrap();
        let graph = graph_of(3, &[(0, Predicate::LeftOf, 1), (2, Predicate::Above, 0)]);
        let out = model.predict(&graph).unwrap();
        assert_eq!(out.masks.len(), 3);
        for m in &out.masks {
            assert_eq!((m.width, m.height), (16, 16));
            assert!(m.values.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn changing_point_input_changes_the_mask() {
        let mut model = Model::new(small_config(), tiny_vocab(3), 11).unwrap();
        let graph = graph_of(2, &[(0, Predicate::LeftOf, 1)]);
        let emb = model.embed_graph(&graph).unwrap();
        let ep0 = Tensor::zeros(&[2, 10]);
        let mut ep1 = Tensor::zeros(&[2, 10]);
        ep1.data[0] = 0.7;
        ep1.data[13] = -0.4;
        let m0 = model.predict_masks(&emb, &ep0, Mode::Eval).unwrap();
        let m1 = model.predict_masks(&emb, &ep1, Mode::Eval).unwrap();
        let max_diff = m0
            .data
            .iter()
            .zip(m1.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 0.0, "conditioning on extreme points is degenerate");
    }

    #[test]
    fn predict_is_deterministic_and_sized() {
        let mut model = Model::new(small_config(), tiny_vocab(4), 2).unwrap();
        let graph = graph_of(4, &[(0, Predicate::LeftOf, 3), (1, Predicate::Inside, 2)]);
        let a = model.predict(&graph).unwrap();
        let b = model.predict(&graph).unwrap();
        assert_eq!(a.extreme_points.len(), graph.objects.len());
        for (x, y) in a.extreme_points.iter().zip(b.extreme_points.iter()) {
            assert_eq!(x.to_array(), y.to_array());
        }
        for (x, y) in a.masks.iter().zip(b.masks.iter()) {
            assert_eq!(x.values, y.values);
        }
    }

    #[test]
    fn state_roundtrips_through_checkpoint() {
        let mut model = Model::new(small_config(), tiny_vocab(3), 42).unwrap();
        // give running stats a non-default value
        let graph = graph_of(3, &[(0, Predicate::LeftOf, 1), (1, Predicate::Above, 2)]);
        model.forward(&graph, Mode::Train).unwrap();

        let state = model.state_tensors();
        let mut buf = Vec::new();
        let refs: Vec<(String, &Tensor)> =
            state.iter().map(|(n, t)| (n.clone(), t)).collect();
        crate::nn::save_checkpoint(&mut buf, &refs).unwrap();
        let loaded = crate::nn::load_checkpoint(buf.as_slice()).unwrap();

        let mut fresh = Model::new(small_config(), tiny_vocab(3), 7).unwrap();
        fresh.load_state(&loaded).unwrap();
        let out_a = model.predict(&graph).unwrap();
        let out_b = fresh.predict(&graph).unwrap();
        for (x, y) in out_a.masks.iter().zip(out_b.masks.iter()) {
            assert_eq!(x.values, y.values);
        }

        let mut buf2 = Vec::new();
        let state2 = fresh.state_tensors();
        let refs2: Vec<(String, &Tensor)> =
            state2.iter().map(|(n, t)| (n.clone(), t)).collect();
        crate::nn::save_checkpoint(&mut buf2, &refs2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn unknown_category_is_rejected() {
        let mut model = Model::new(small_config(), tiny_vocab(2), 0).unwrap();
        let mut graph = graph_of(2, &[(0, Predicate::LeftOf, 1)]);
        graph.objects[1].category = "unheard-of".into();
        assert!(matches!(
            model.embed_graph(&graph),
            Err(Error::UnknownVocab(_))
        ));
    }
}
