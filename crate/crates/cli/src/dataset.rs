//! Dataset directory layout and serialization.
//!
//! ```text
//! <dir>/
//!   vocab.json       category vocabulary (id, name, kind)
//!   dataset.jsonl    one scene per line: graph + training targets
//!   patches.jsonl    patch records (same schema as index lines)
//!   masks/*.ppm      patch masks, referenced by the records
//! ```

use std::fs;
use std::path::Path;

use serde::Deserialize;
use sgl_core::geometry::Mask;
use sgl_core::ppm;
use sgl_core::retrieval::{record_from_json, record_to_json, PatchRecord};
use sgl_core::scenegraph::{parse_scene_graph, serialize_scene_graph, Category};
use sgl_core::train::TrainSample;

use crate::CliError;

/// Packs a binary k x k mask as hex, row-major, most significant bit first.
pub fn mask_to_hex(mask: &Mask) -> String {
    let mut bits = Vec::with_capacity((mask.values.len() + 7) / 8);
    let mut current = 0u8;
    let mut filled = 0;
    for v in &mask.values {
        current = (current << 1) | u8::from(*v >= 0.5);
        filled += 1;
        if filled == 8 {
            bits.push(current);
            current = 0;
            filled = 0;
        }
    }
    if filled > 0 {
        bits.push(current << (8 - filled));
    }
    bits.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn mask_from_hex(hex: &str, k: usize) -> Result<Mask, CliError> {
    let expected = (k * k + 7) / 8 * 2;
    if hex.len() != expected {
        return Err(CliError::Data(format!(
            "mask hex has {} chars, expected {expected} for {k}x{k}",
            hex.len()
        )));
    }
    let mut values = Vec::with_capacity(k * k);
    for i in (0..hex.len()).step_by(2) {
        let byte = u8::from_str_radix(&hex[i..i + 2], 16)
            .map_err(|e| CliError::Data(format!("mask hex: {e}")))?;
        for bit in (0..8).rev() {
            if values.len() < k * k {
                values.push(f64::from((byte >> bit) & 1));
            }
        }
    }
    Mask::from_values(k, k, values).map_err(|e| CliError::Data(e.to_string()))
}

pub fn write_dataset(
    dir: &Path,
    vocab: &[Category],
    samples: &[TrainSample],
    patches: &[(PatchRecord, Mask)],
) -> Result<(), CliError> {
    fs::create_dir_all(dir.join("masks"))?;

    let mut vocab_json = serde_json::to_string(vocab)?;
    vocab_json.push('\n');
    fs::write(dir.join("vocab.json"), vocab_json)?;

    let mut scenes = String::new();
    for s in samples {
        let eps: Vec<Vec<f64>> = s.gt_eps.iter().map(|e| e.to_vec()).collect();
        let hexes: Vec<String> = s.gt_masks.iter().map(mask_to_hex).collect();
        scenes.push_str(&format!(
            "{{\"graph\":{},\"gt_eps\":{},\"gt_masks16\":{}}}\n",
            serialize_scene_graph(&s.graph),
            serde_json::to_string(&eps)?,
            serde_json::to_string(&hexes)?,
        ));
    }
    fs::write(dir.join("dataset.jsonl"), scenes)?;

    let mut records = String::new();
    for (record, mask) in patches {
        records.push_str(&record_to_json(record));
        records.push('\n');
        let mask_path = dir.join(&record.mask_ref);
        let mut file = fs::File::create(&mask_path)?;
        ppm::write_ppm(&mut file, &ppm::mask_to_image(mask))
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    fs::write(dir.join("patches.jsonl"), records)?;
    Ok(())
}

#[derive(Deserialize)]
struct SceneLine {
    graph: serde_json::Value,
    gt_eps: Vec<Vec<f64>>,
    gt_masks16: Vec<String>,
}

pub fn read_vocab(dir: &Path) -> Result<Vec<Category>, CliError> {
    let text = fs::read_to_string(dir.join("vocab.json"))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_samples(dir: &Path) -> Result<Vec<TrainSample>, CliError> {
    let text = fs::read_to_string(dir.join("dataset.jsonl"))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let wire: SceneLine = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("dataset line {}: {e}", i + 1)))?;
        let graph = parse_scene_graph(&wire.graph.to_string())
            .map_err(|e| CliError::Data(format!("dataset line {}: {e}", i + 1)))?;
        let mut gt_eps = Vec::with_capacity(wire.gt_eps.len());
        for ep in &wire.gt_eps {
            if ep.len() != 10 {
                return Err(CliError::Data(format!(
                    "dataset line {}: extreme-point row has {} values",
                    i + 1,
                    ep.len()
                )));
            }
            let mut a = [0.0; 10];
            a.copy_from_slice(ep);
            gt_eps.push(a);
        }
        let gt_masks = wire
            .gt_masks16
            .iter()
            .map(|h| mask_from_hex(h, 16))
            .collect::<Result<Vec<_>, _>>()?;
        if gt_eps.len() != graph.objects.len() || gt_masks.len() != graph.objects.len() {
            return Err(CliError::Data(format!(
                "dataset line {}: target arity mismatch",
                i + 1
            )));
        }
        samples.push(TrainSample { graph, gt_eps, gt_masks });
    }
    if samples.is_empty() {
        return Err(CliError::Data("dataset has no scenes".into()));
    }
    Ok(samples)
}

pub fn read_patches(dir: &Path) -> Result<Vec<PatchRecord>, CliError> {
    let text = fs::read_to_string(dir.join("patches.jsonl"))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            record_from_json(line)
                .map_err(|e| CliError::Data(format!("patch line {}: {e}", i + 1)))?,
        );
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_roundtrip() {
        let mut mask = Mask::zeros(16, 16);
        for i in 0..256 {
            if i % 3 == 0 || i % 7 == 1 {
                mask.values[i] = 1.0;
            }
        }
        let hex = mask_to_hex(&mask);
        assert_eq!(hex.len(), 64);
        let back = mask_from_hex(&hex, 16).unwrap();
        assert_eq!(back.values, mask.values);
    }

    #[test]
    fn hex_rejects_wrong_length() {
        assert!(mask_from_hex("abcd", 16).is_err());
    }
}
