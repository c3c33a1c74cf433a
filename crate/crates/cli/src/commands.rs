//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use sgl_core::composition::{render_layout, PALETTE};
use sgl_core::geometry::normalize_pixel_bbox;
use sgl_core::ingest::{ingest_annotations, IngestConfig};
use sgl_core::metrics::{evaluate_layout, merge_reports, LayoutPrediction};
use sgl_core::model::{Model, ModelSidecar, Vocab};
use sgl_core::nn::{grad_check as nn_grad_check, load_checkpoint, save_checkpoint, Tensor};
use sgl_core::ppm;
use sgl_core::retrieval::{
    extract_patch, query_topk, read_index, write_index, PatchRecord, RetrievalIndex,
};
use sgl_core::scenegraph::{
    augment_relations, build_scene_graph, parse_scene_graph, BuildConfig,
};
use sgl_core::synth::{synth_generate, SynthConfig};
use sgl_core::train::{train as train_loop, TrainHarness, TrainSample};

use crate::config;
use crate::dataset;
use crate::CliError;

pub fn build_dataset_synthetic(
    out: &Path,
    seed: u64,
    scenes: usize,
    augment: bool,
) -> Result<(), CliError> {
    let mut cfg = SynthConfig::default_corpus(seed, scenes);
    cfg.augment = augment;
    let data = synth_generate(&cfg)?;
    let samples: Vec<TrainSample> = data.scenes.iter().map(|s| s.sample.clone()).collect();
    dataset::write_dataset(out, &cfg.vocab_categories(), &samples, &data.patches)?;
    println!(
        "wrote {} scenes and {} patches to {}",
        samples.len(),
        data.patches.len(),
        out.display()
    );
    Ok(())
}

pub fn build_dataset_from_annotations(
    annotations: &Path,
    out: &Path,
    augment: bool,
    seed: u64,
) -> Result<(), CliError> {
    let text = fs::read_to_string(annotations)?;
    let set = ingest_annotations(&text, &IngestConfig::default())?;
    if set.skipped_rle > 0 {
        eprintln!("warning: skipped {} crowd/RLE annotations", set.skipped_rle);
    }

    // Patch records come from every masked thing annotation, independent of
    // the per-scene object filters.
    let mut patches: Vec<(PatchRecord, sgl_core::geometry::Mask)> = Vec::new();
    let mut patch_id = 0u64;
    for image in &set.images {
        for obj in set.annotated_objects(image.id)? {
            if obj.kind != sgl_core::scenegraph::Kind::Thing {
                continue;
            }
            let Some(mask) = &obj.mask else { continue };
            let record = extract_patch(
                patch_id,
                &obj.category,
                image.id,
                &obj.bbox,
                (image.width, image.height),
                mask,
            )?;
            let (x0, y0, x1, y1) = mask.tight_bounds().ok_or_else(|| {
                CliError::Data(format!("empty mask in image {}", image.id))
            })?;
            patches.push((record, mask.crop(x0, y0, x1, y1)));
            patch_id += 1;
        }
    }

    let mut samples = Vec::new();
    let mut rejected = 0usize;
    for image in &set.images {
        let objects = set.annotated_objects(image.id)?;
        let build_cfg = BuildConfig {
            rng_seed: seed ^ image.id.wrapping_mul(0x9e3779b97f4a7c15),
            ..BuildConfig::default()
        };
        let (graph, survivors) =
            match build_scene_graph(&objects, (image.width, image.height), &build_cfg) {
                Ok(res) => res,
                Err(sgl_core::Error::SceneRejected(..)) => {
                    rejected += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
        let graph = if augment { augment_relations(&graph)? } else { graph };
        let masks: Vec<Option<sgl_core::geometry::Mask>> =
            survivors.iter().map(|&i| objects[i].mask.clone()).collect();
        samples.push(TrainSample::from_objects(graph, &masks, 16)?);
    }
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "no usable scenes ({} images rejected by the object-count filter)",
            rejected
        )));
    }

    dataset::write_dataset(out, &set.categories, &samples, &patches)?;
    println!(
        "wrote {} scenes ({} rejected) and {} patches to {}",
        samples.len(),
        rejected,
        patches.len(),
        out.display()
    );
    Ok(())
}

fn sidecar_path(ckpt: &Path) -> PathBuf {
    PathBuf::from(format!("{}.json", ckpt.display()))
}

fn save_model(model: &Model, ckpt: &Path) -> Result<(), CliError> {
    let state = model.state_tensors();
    let refs: Vec<(String, &Tensor)> = state.iter().map(|(n, t)| (n.clone(), t)).collect();
    let mut file = fs::File::create(ckpt)?;
    save_checkpoint(&mut file, &refs)?;
    let mut sidecar = serde_json::to_string_pretty(&ModelSidecar::from_model(model))?;
    sidecar.push('\n');
    fs::write(sidecar_path(ckpt), sidecar)?;
    Ok(())
}

fn load_model(ckpt: &Path) -> Result<Model, CliError> {
    let sidecar_text = fs::read_to_string(sidecar_path(ckpt))
        .map_err(|e| CliError::Data(format!("model sidecar {}: {e}", sidecar_path(ckpt).display())))?;
    let sidecar: ModelSidecar = serde_json::from_str(&sidecar_text)?;
    let (config, vocab) = sidecar.to_parts()?;
    let mut model = Model::new(config, vocab, 0)?;
    let file = fs::File::open(ckpt)?;
    let state = load_checkpoint(file)?;
    model.load_state(&state)?;
    Ok(model)
}

pub fn train(
    dataset_dir: &Path,
    out: &Path,
    config_path: Option<&Path>,
    curve: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = config::load(config_path)?;
    let vocab = dataset::read_vocab(dataset_dir)?;
    let samples = dataset::read_samples(dataset_dir)?;
    let mut model = Model::new(cfg.model, Vocab::new(vocab), cfg.train.seed)?;
    let result = train_loop(&mut model, &samples, &cfg.train)?;
    save_model(&model, out)?;
    let curve_path = curve
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.losses.csv", out.display())));
    fs::write(&curve_path, result.curve_csv())?;
    let last = result.steps.last().expect("at least one step");
    println!(
        "trained {} steps on {} scenes; final loss {:.5} (ep {:.5}, mask {:.5})",
        result.steps.len(),
        samples.len(),
        last.loss_total,
        last.loss_ep,
        last.loss_mask
    );
    Ok(())
}

fn layout_prediction(model: &mut Model, graph: &sgl_core::scenegraph::SceneGraph) -> Result<LayoutPrediction, CliError> {
    let output = model.predict(graph)?;
    Ok(LayoutPrediction {
        extreme_points: output.extreme_points,
        boxes: output.boxes.iter().map(|b| b.bbox).collect(),
        masks: output.masks,
    })
}

pub fn eval(
    dataset_dir: &Path,
    model_path: Option<&Path>,
    report_path: &Path,
    inject_gt: bool,
) -> Result<(), CliError> {
    let samples = dataset::read_samples(dataset_dir)?;
    let mut model = model_path.map(load_model).transpose()?;

    let mut reports = Vec::with_capacity(samples.len());
    for sample in &samples {
        let graph = &sample.graph;
        let gt_boxes: Vec<_> = graph
            .objects
            .iter()
            .map(|o| {
                o.bbox
                    .map(|b| normalize_pixel_bbox(&b, graph.image_size))
                    .ok_or_else(|| {
                        CliError::Data(format!("object {} has no ground-truth bbox", o.index))
                    })
            })
            .collect::<Result<_, _>>()?;
        let pred_boxes = if inject_gt {
            gt_boxes.clone()
        } else {
            let model = model.as_mut().expect("checked by caller");
            layout_prediction(model, graph)?.boxes
        };
        reports.push(evaluate_layout(graph, &pred_boxes, &gt_boxes)?);
    }
    let merged = merge_reports(&reports)?;
    let mut text = serde_json::to_string_pretty(&merged)?;
    text.push('\n');
    fs::write(report_path, text)?;
    println!(
        "relation_score {:.4}  avg_iou {:.4}  ({} scenes, {} relations)",
        merged.relation_score,
        merged.avg_iou,
        reports.len(),
        merged.n_relations
    );
    Ok(())
}

pub fn predict(
    graph_path: &Path,
    model_path: &Path,
    out: &Path,
    octagons: bool,
    size: usize,
) -> Result<(), CliError> {
    let graph = parse_scene_graph(&fs::read_to_string(graph_path)?)?;
    let mut model = load_model(model_path)?;
    let pred = layout_prediction(&mut model, &graph)?;
    let colors: Vec<[u8; 3]> = graph
        .objects
        .iter()
        .map(|o| {
            model
                .vocab
                .category_index(&o.category)
                .map(|i| PALETTE[i % PALETTE.len()])
        })
        .collect::<sgl_core::Result<_>>()?;
    let image = render_layout(&pred, &colors, size, size, octagons)?;
    let mut file = fs::File::create(out)?;
    ppm::write_ppm(&mut file, &image)?;
    println!("wrote {}x{size} layout to {}", size, out.display());
    Ok(())
}

pub fn index(dataset_dir: &Path, out: &Path) -> Result<(), CliError> {
    let records = dataset::read_patches(dataset_dir)?;
    let index = RetrievalIndex::build(&records)?;
    fs::write(out, write_index(&index))?;
    let counts = index.counts();
    let total: usize = counts.values().sum();
    println!(
        "indexed {total} patches across {} categories (checksum {:016x})",
        counts.len(),
        index.checksum
    );
    Ok(())
}

pub fn retrieve(
    index_path: &Path,
    graph_path: &Path,
    model_path: &Path,
    object: usize,
    k: usize,
    out: &Path,
) -> Result<(), CliError> {
    let index = read_index(&fs::read_to_string(index_path)?)?;
    let graph = parse_scene_graph(&fs::read_to_string(graph_path)?)?;
    if object >= graph.objects.len() {
        return Err(CliError::Data(format!(
            "graph has {} objects, no index {object}",
            graph.objects.len()
        )));
    }
    let mut model = load_model(model_path)?;
    let output = model.predict(&graph)?;
    let descriptor =
        sgl_core::geometry::normalize_descriptor(&output.extreme_points[object])?;
    let category = &graph.objects[object].category;
    let ranked = query_topk(&index, category, &descriptor, k)?;

    fs::create_dir_all(out)?;
    let base = index_path.parent().unwrap_or(Path::new("."));
    let mut results = Vec::with_capacity(ranked.len());
    for (rank, (id, distance)) in ranked.iter().enumerate() {
        let record = index.record(category, *id)?;
        let mask_name = format!("rank{}_p{:06}.ppm", rank + 1, id);
        fs::copy(base.join(&record.mask_ref), out.join(&mask_name))?;
        results.push(serde_json::json!({
            "rank": rank + 1,
            "id": id,
            "distance": distance,
            "mask": mask_name,
        }));
    }
    let listing = serde_json::json!({
        "object": object,
        "category": category,
        "k": k,
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&listing)?;
    text.push('\n');
    fs::write(out.join("ranked.json"), text)?;
    println!("wrote {} retrievals for object {object} ({category}) to {}", results.len(), out.display());
    Ok(())
}

pub fn grad_check(config_path: Option<&Path>) -> Result<(), CliError> {
    let cfg = config::load(config_path)?;
    let tolerance = 1e-4;

    let mut synth_cfg = SynthConfig::default_corpus(7, 2);
    synth_cfg.mask_k = cfg.model.mask_k;
    let data = synth_generate(&synth_cfg)?;
    let samples: Vec<TrainSample> = data.scenes.iter().map(|s| s.sample.clone()).collect();

    let mut model = Model::new(cfg.model, Vocab::new(synth_cfg.vocab_categories()), 11)?;
    let mut harness = TrainHarness { model: &mut model, samples: &samples, cfg: cfg.train };
    let report = nn_grad_check(&mut harness, 1e-5, Some((4, 1234)));
    for p in &report.per_param {
        println!(
            "{:<28} max_rel_err {:.3e}  ({} coords)",
            p.name, p.max_rel_err, p.coords_checked
        );
    }
    if report.passes(tolerance) {
        println!("gradient check passed: max relative error {:.3e} < {tolerance:.0e}", report.max_rel_err);
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {:.3e} >= {tolerance:.0e}",
            report.max_rel_err
        )))
    }
}
