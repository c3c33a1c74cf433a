//! Losses, the training loop, and training-sample preparation.
//!
//! The extreme-point loss is the per-object L2 distance over the ten
//! coordinates; the mask loss is pixel-wise binary cross entropy. Both are
//! averaged (not summed) over objects so the loss weights and learning rate
//! keep their meaning across batch sizes. The total is the weighted sum
//! `lambda_ep * L_ep + lambda_mask * L_mask`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{extract_extreme_points, normalize_extreme_points, Mask};
use crate::model::{Model, ModelForward};
use crate::nn::{Adam, AdamConfig, Differentiable, Mode, Param, Tensor};
use crate::scenegraph::SceneGraph;
use crate::{Error, Result};

/// Cross-entropy probability clamp.
const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Extreme-point loss weight.
    pub lambda_ep: f64,
    /// Mask loss weight.
    pub lambda_mask: f64,
    pub lr: f64,
    pub beta1: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-scale settings.
    pub fn paper() -> Self {
        Self {
            lambda_ep: 10.0,
            lambda_mask: 0.1,
            lr: 1e-4,
            beta1: 0.9,
            batch: 32,
            steps: 10_000,
            seed: 0,
        }
    }

    /// Desk-scale settings: small batches and few steps need a larger
    /// learning rate to make visible progress.
    pub fn desk() -> Self {
        Self { lr: 1e-2, batch: 8, steps: 300, ..Self::paper() }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, ..AdamConfig::default() }
    }
}

/// One training example: a graph plus per-object supervision targets.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub graph: SceneGraph,
    /// Normalized-frame target coordinates, one row of ten per object.
    pub gt_eps: Vec<[f64; 10]>,
    /// Binary k x k target masks (the object mask cropped to its bbox and
    /// resampled).
    pub gt_masks: Vec<Mask>,
}

impl TrainSample {
    /// Derives supervision targets from full-image object masks: extreme
    /// points via extraction + pixel-center normalization, mask targets by
    /// tight-crop and nearest-neighbor resample to `k x k`.
    pub fn from_masks(graph: SceneGraph, masks: &[Mask], k: usize) -> Result<TrainSample> {
        if masks.len() != graph.objects.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} masks for {} objects",
                masks.len(),
                graph.objects.len()
            )));
        }
        let mut gt_eps = Vec::with_capacity(masks.len());
        let mut gt_masks = Vec::with_capacity(masks.len());
        for mask in masks {
            let ep = extract_extreme_points(mask)?;
            gt_eps.push(normalize_extreme_points(&ep, graph.image_size).to_array());
            let (x0, y0, x1, y1) = mask.tight_bounds().ok_or(Error::EmptyMask)?;
            gt_masks.push(mask.crop(x0, y0, x1, y1).resize_nearest_binary(k, k));
        }
        Ok(TrainSample { graph, gt_eps, gt_masks })
    }

    /// Like [`TrainSample::from_masks`], but objects without a mask (stuff
    /// regions annotated by box only) fall back to trivial extreme points
    /// from their bbox and an all-ones target mask.
    pub fn from_objects(graph: SceneGraph, masks: &[Option<Mask>], k: usize) -> Result<TrainSample> {
        if masks.len() != graph.objects.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} masks for {} objects",
                masks.len(),
                graph.objects.len()
            )));
        }
        let mut gt_eps = Vec::with_capacity(masks.len());
        let mut gt_masks = Vec::with_capacity(masks.len());
        for (obj, mask) in graph.objects.iter().zip(masks.iter()) {
            match mask {
                Some(m) => {
                    let ep = extract_extreme_points(m)?;
                    gt_eps.push(normalize_extreme_points(&ep, graph.image_size).to_array());
                    let (x0, y0, x1, y1) = m.tight_bounds().ok_or(Error::EmptyMask)?;
                    gt_masks.push(m.crop(x0, y0, x1, y1).resize_nearest_binary(k, k));
                }
                None => {
                    let bbox = obj
                        .bbox
                        .ok_or_else(|| Error::IncompleteNode(obj.index, "missing bbox".into()))?;
                    let ep = crate::geometry::trivial_extreme_points(&bbox);
                    gt_eps.push(normalize_extreme_points(&ep, graph.image_size).to_array());
                    gt_masks.push(Mask::from_values(k, k, vec![1.0; k * k])?);
                }
            }
        }
        Ok(TrainSample { graph, gt_eps, gt_masks })
    }
}

/// Mean over objects of the Euclidean distance between predicted and target
/// coordinate vectors.
pub fn loss_ep(pred_eps: &[[f64; 10]], gt_eps: &[[f64; 10]]) -> Result<f64> {
    if pred_eps.len() != gt_eps.len() || pred_eps.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred_eps.len(),
            gt_eps.len()
        )));
    }
    let total: f64 = pred_eps
        .iter()
        .zip(gt_eps.iter())
        .map(|(p, g)| {
            p.iter()
                .zip(g.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / pred_eps.len() as f64)
}

/// Mean over objects and pixels of binary cross entropy, with predictions
/// clamped to `[1e-7, 1 - 1e-7]`.
pub fn loss_mask(pred_masks: &[Mask], gt_masks: &[Mask]) -> Result<f64> {
    if pred_masks.len() != gt_masks.len() || pred_masks.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred_masks.len(),
            gt_masks.len()
        )));
    }
    let mut total = 0.0;
    for (p, g) in pred_masks.iter().zip(gt_masks.iter()) {
        if p.width != g.width || p.height != g.height {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs target {}x{}",
                p.width, p.height, g.width, g.height
            )));
        }
        let mut obj = 0.0;
        for (pv, gv) in p.values.iter().zip(g.values.iter()) {
            let ph = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            let y = if *gv >= 0.5 { 1.0 } else { 0.0 };
            obj -= y * ph.ln() + (1.0 - y) * (1.0 - ph).ln();
        }
        total += obj / (p.width * p.height) as f64;
    }
    Ok(total / pred_masks.len() as f64)
}

/// Weighted sum of the two losses.
pub fn loss_total(l_ep: f64, l_mask: f64, cfg: &TrainConfig) -> f64 {
    cfg.lambda_ep * l_ep + cfg.lambda_mask * l_mask
}

/// Unweighted per-graph loss sums and their gradients w.r.t. the raw model
/// outputs. The extreme-point part returns the sum of per-object norms; the
/// mask part the sum of per-object pixel means. Callers divide by the
/// number of objects in scope and scale by loss weights.
fn graph_loss_terms(
    fwd: &ModelForward,
    sample: &TrainSample,
) -> Result<(f64, f64, Tensor, Tensor)> {
    let n = sample.graph.objects.len();
    if fwd.ep_raw.shape != [n, 10] {
        return Err(Error::ShapeMismatch("forward/sample arity".into()));
    }
    let k2 = sample.gt_masks[0].width * sample.gt_masks[0].height;

    let mut ep_sum = 0.0;
    let mut d_ep = Tensor::zeros(&fwd.ep_raw.shape);
    for i in 0..n {
        let mut sq = 0.0;
        for j in 0..10 {
            let diff = fwd.ep_raw.data[i * 10 + j] - sample.gt_eps[i][j];
            sq += diff * diff;
        }
        let norm = sq.sqrt();
        ep_sum += norm;
        if norm > 0.0 {
            for j in 0..10 {
                let diff = fwd.ep_raw.data[i * 10 + j] - sample.gt_eps[i][j];
                d_ep.data[i * 10 + j] = diff / norm;
            }
        }
    }

    let mut mask_sum = 0.0;
    let mut d_mask = Tensor::zeros(&fwd.masks.shape);
    for i in 0..n {
        let gt = &sample.gt_masks[i];
        if gt.values.len() != k2 {
            return Err(Error::ShapeMismatch("target mask size".into()));
        }
        let mut obj = 0.0;
        for px in 0..k2 {
            let idx = i * k2 + px;
            let p = fwd.masks.data[idx];
            let ph = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            let y = if gt.values[px] >= 0.5 { 1.0 } else { 0.0 };
            obj -= y * ph.ln() + (1.0 - y) * (1.0 - ph).ln();
            if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
                d_mask.data[idx] = (ph - y) / (ph * (1.0 - ph)) / k2 as f64;
            }
        }
        mask_sum += obj / k2 as f64;
    }
    Ok((ep_sum, mask_sum, d_ep, d_mask))
}

/// One row of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub loss_ep: f64,
    pub loss_mask: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub steps: Vec<StepLoss>,
    /// Mean total loss per dataset pass.
    pub epoch_means: Vec<f64>,
}

impl TrainResult {
    /// `step,loss_ep,loss_mask,loss_total` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("step,loss_ep,loss_mask,loss_total\n");
        for row in &self.steps {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.step, row.loss_ep, row.loss_mask, row.loss_total
            ));
        }
        out
    }
}

/// Runs seeded mini-batch training in place. Batches never mix epochs; an
/// epoch is one shuffled pass over the dataset. Fully deterministic given
/// the config seed.
pub fn train(model: &mut Model, dataset: &[TrainSample], cfg: &TrainConfig) -> Result<TrainResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut pos = order.len(); // trigger shuffle on first use

    let mut steps = Vec::with_capacity(cfg.steps);
    let mut epoch_totals: Vec<(f64, usize)> = Vec::new();

    for step in 0..cfg.steps {
        if pos >= order.len() {
            order.shuffle(&mut rng);
            pos = 0;
            epoch_totals.push((0.0, 0));
        }
        let batch_end = (pos + cfg.batch).min(order.len());
        let batch: Vec<usize> = order[pos..batch_end].to_vec();
        pos = batch_end;

        let total_objects: usize =
            batch.iter().map(|&i| dataset[i].graph.objects.len()).sum();
        let inv_n = 1.0 / total_objects as f64;

        model.zero_grads();
        let mut ep_sum = 0.0;
        let mut mask_sum = 0.0;
        for &i in &batch {
            let sample = &dataset[i];
            let fwd = model.forward(&sample.graph, Mode::Train)?;
            let (e, m, mut d_ep, mut d_mask) = graph_loss_terms(&fwd, sample)?;
            ep_sum += e;
            mask_sum += m;
            for g in d_ep.data.iter_mut() {
                *g *= cfg.lambda_ep * inv_n;
            }
            for g in d_mask.data.iter_mut() {
                *g *= cfg.lambda_mask * inv_n;
            }
            model.backward(&d_ep, &d_mask)?;
        }
        adam.step(&mut model.trainable_params_mut())?;

        let l_ep = ep_sum * inv_n;
        let l_mask = mask_sum * inv_n;
        let l_total = loss_total(l_ep, l_mask, cfg);
        steps.push(StepLoss { step, loss_ep: l_ep, loss_mask: l_mask, loss_total: l_total });
        if let Some(last) = epoch_totals.last_mut() {
            last.0 += l_total;
            last.1 += 1;
        }
    }

    let epoch_means = epoch_totals
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(t, c)| t / *c as f64)
        .collect();
    Ok(TrainResult { steps, epoch_means })
}

/// Dataset-level loss without updating anything (train-mode statistics, so
/// it is comparable with the training curve).
pub fn evaluate_loss(model: &mut Model, dataset: &[TrainSample], cfg: &TrainConfig) -> Result<StepLoss> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total_objects: usize = dataset.iter().map(|s| s.graph.objects.len()).sum();
    let inv_n = 1.0 / total_objects as f64;
    let mut ep_sum = 0.0;
    let mut mask_sum = 0.0;
    for sample in dataset {
        let fwd = model.forward(&sample.graph, Mode::Train)?;
        let (e, m, _, _) = graph_loss_terms(&fwd, sample)?;
        ep_sum += e;
        mask_sum += m;
    }
    let l_ep = ep_sum * inv_n;
    let l_mask = mask_sum * inv_n;
    Ok(StepLoss { step: 0, loss_ep: l_ep, loss_mask: l_mask, loss_total: loss_total(l_ep, l_mask, cfg) })
}

/// Scalar-loss view of a model over a fixed sample set, for the gradient
/// checker.
pub struct TrainHarness<'a> {
    pub model: &'a mut Model,
    pub samples: &'a [TrainSample],
    pub cfg: TrainConfig,
}

impl Differentiable for TrainHarness<'_> {
    fn loss(&mut self) -> f64 {
        let total_objects: usize =
            self.samples.iter().map(|s| s.graph.objects.len()).sum();
        let inv_n = 1.0 / total_objects as f64;
        let mut acc = 0.0;
        for sample in self.samples {
            let fwd = self.model.forward(&sample.graph, Mode::Train).unwrap();
            let (e, m, _, _) = graph_loss_terms(&fwd, sample).unwrap();
            acc += self.cfg.lambda_ep * e * inv_n + self.cfg.lambda_mask * m * inv_n;
        }
        acc
    }

    fn loss_and_grad(&mut self) -> f64 {
        self.model.zero_grads();
        let total_objects: usize =
            self.samples.iter().map(|s| s.graph.objects.len()).sum();
        let inv_n = 1.0 / total_objects as f64;
        let mut acc = 0.0;
        for sample in self.samples {
            let fwd = self.model.forward(&sample.graph, Mode::Train).unwrap();
            let (e, m, mut d_ep, mut d_mask) = graph_loss_terms(&fwd, sample).unwrap();
            acc += self.cfg.lambda_ep * e * inv_n + self.cfg.lambda_mask * m * inv_n;
            for g in d_ep.data.iter_mut() {
                *g *= self.cfg.lambda_ep * inv_n;
            }
            for g in d_mask.data.iter_mut() {
                *g *= self.cfg.lambda_mask * inv_n;
            }
            self.model.backward(&d_ep, &d_mask).unwrap();
        }
        acc
    }

    fn params(&mut self) -> Vec<&mut Param> {
        self.model.trainable_params_mut()
    }
}
