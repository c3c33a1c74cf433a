use sgl_core::geometry::BoundingBox;
use sgl_core::metrics::relation_score;
use sgl_core::model::{Model, ModelConfig, Vocab};
use sgl_core::synth::{synth_generate, SynthConfig};
use sgl_core::train::{train, TrainConfig, TrainSample};

fn holdout_score(model: &mut Model, samples: &[TrainSample]) -> f64 {
    let mut sat = 0usize;
    let mut tot = 0usize;
    for s in samples {
        let out = model.predict(&s.graph).unwrap();
        let boxes: Vec<BoundingBox> = out.boxes.iter().map(|b| b.bbox).collect();
        let score = relation_score(&s.graph, &boxes).unwrap();
        sat += (score * s.graph.relations.len() as f64).round() as usize;
        tot += s.graph.relations.len();
    }
    sat as f64 / tot as f64
}

#[test]
fn probe() {
    let data = synth_generate(&SynthConfig::default_corpus(42, 200)).unwrap();
    let samples: Vec<TrainSample> = data.scenes.iter().map(|s| s.sample.clone()).collect();
    let mut hcfg = SynthConfig::default_corpus(43, 50);
    hcfg.augment = false;
    let hdata = synth_generate(&hcfg).unwrap();
    let holdout: Vec<TrainSample> = hdata.scenes.iter().map(|s| s.sample.clone()).collect();
    let vocab = Vocab::new(SynthConfig::default_corpus(42, 1).vocab_categories());

    for (name, gain, lr) in [
        ("baseline           ", 1.0f64, 1e-2),
        ("gcn gain 1.4       ", 1.4, 1e-2),
        ("gcn gain 1.8       ", 1.8, 1e-2),
        ("gain 1.4 + lr 2e-2 ", 1.4, 2e-2),
        ("gain 1.8 + lr 2e-2 ", 1.8, 2e-2),
    ] {
        let mut model = Model::new(ModelConfig::desk(), vocab.clone(), 42).unwrap();
        if gain != 1.0 {
            for p in model.trainable_params_mut() {
                if p.name.starts_with("gcn.") && p.name.ends_with(".weight") {
                    for v in p.value.data.iter_mut() { *v *= gain; }
                }
            }
        }
        let untrained = holdout_score(&mut model, &holdout);
        let cfg = TrainConfig { seed: 42, lr, ..TrainConfig::desk() };
        let result = train(&mut model, &samples, &cfg).unwrap();
        let trained = holdout_score(&mut model, &holdout);
        println!(
            "{name} loss {:.3} -> {:.3} | holdout {untrained:.3} -> {trained:.3} (gain {:+.3})",
            result.epoch_means.first().unwrap(),
            result.epoch_means.last().unwrap(),
            trained - untrained
        );
    }
}
