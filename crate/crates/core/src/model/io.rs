//! Model directory format: `model.json` (config + tensor index) and
//! `weights.bin` (little-endian tensors in the model's precision).

use super::transformer::{BlockWeights, HeadWeights, ModelWeights, Transformer};
use super::{ModelConfig, ModelError, Precision, Result};
use crate::io_util::write_atomic;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

pub const MODEL_MANIFEST: &str = "model.json";
pub const MODEL_WEIGHTS: &str = "weights.bin";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    config: ModelConfig,
    dtype: String,
    num_blocks: usize,
    has_head: bool,
    tensors: Vec<TensorEntry>,
}

fn encode(values: &[f32], precision: Precision, out: &mut Vec<u8>) {
    for &v in values {
        match precision {
            Precision::F32 => out.extend_from_slice(&v.to_le_bytes()),
            Precision::F16 => out.extend_from_slice(&half::f16::from_f32(v).to_le_bytes()),
            Precision::Bf16 => out.extend_from_slice(&half::bf16::from_f32(v).to_le_bytes()),
        }
    }
}

fn decode(bytes: &[u8], precision: Precision) -> Vec<f32> {
    match precision {
        Precision::F32 => crate::io_util::f32_from_le_bytes(bytes),
        Precision::F16 => bytes
            .chunks_exact(2)
            .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
        Precision::Bf16 => bytes
            .chunks_exact(2)
            .map(|c| half::bf16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
    }
}

fn named_tensors(w: &ModelWeights) -> Vec<(String, &Vec<f32>)> {
    let mut out = vec![("embed".to_string(), &w.embed)];
    for (i, b) in w.blocks.iter().enumerate() {
        for (name, t) in b.tensors() {
            out.push((format!("blocks.{i}.{name}"), t));
        }
    }
    if let Some(h) = &w.head {
        out.push(("final_norm".into(), &h.final_norm));
        if let Some(lm) = &h.lm_head {
            out.push(("lm_head".into(), lm));
        }
    }
    out
}

pub fn save_model(model: &Transformer, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let precision = model.config().precision;
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (name, t) in named_tensors(model.weights()) {
        tensors.push(TensorEntry { name, len: t.len(), offset: blob.len() as u64 });
        encode(t, precision, &mut blob);
    }
    let manifest = ModelManifest {
        config: model.config().clone(),
        dtype: precision.to_string(),
        num_blocks: model.num_blocks(),
        has_head: model.has_lm_head(),
        tensors,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(MODEL_WEIGHTS), &blob)?;
    write_atomic(&dir.join(MODEL_MANIFEST), &json)?;
    Ok(())
}

fn load_failure(e: impl std::fmt::Display) -> ModelError {
    ModelError::ModelLoadFailure(e.to_string())
}

fn read_manifest(dir: &Path) -> Result<ModelManifest> {
    let text = std::fs::read_to_string(dir.join(MODEL_MANIFEST))
        .map_err(|e| load_failure(format!("{}: {e}", dir.join(MODEL_MANIFEST).display())))?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(load_failure)?;
    let declared: Precision = manifest.dtype.parse()?;
    if declared != manifest.config.precision {
        return Err(load_failure(format!(
            "weights stored as {declared} but config declares {}",
            manifest.config.precision
        )));
    }
    Ok(manifest)
}

/// Loads a full model (or a previously saved prefix).
pub fn load_model(dir: &Path) -> Result<Transformer> {
    let manifest = read_manifest(dir)?;
    let n = manifest.num_blocks;
    load_blocks(dir, manifest, n, true)
}

/// Loads only the embedding and the first `cut` blocks; dropped blocks and
/// the LM head are never read from disk.
pub fn load_model_prefix(dir: &Path, cut: usize) -> Result<Transformer> {
    let manifest = read_manifest(dir)?;
    if cut > manifest.num_blocks {
        return Err(ModelError::PrefixTooShort { available: manifest.num_blocks, requested: cut });
    }
    load_blocks(dir, manifest, cut, false)
}

fn load_blocks(dir: &Path, manifest: ModelManifest, cut: usize, with_head: bool) -> Result<Transformer> {
    let precision = manifest.config.precision;
    let mut file = File::open(dir.join(MODEL_WEIGHTS)).map_err(load_failure)?;
    let file_len = file.metadata()?.len();
    let mut read = |name: &str| -> Result<Vec<f32>> {
        let entry = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| load_failure(format!("tensor {name} missing from manifest")))?;
        let nbytes = (entry.len * precision.bytes()) as u64;
        if entry.offset + nbytes > file_len {
            return Err(load_failure(format!("tensor {name} extends past end of weights file")));
        }
        file.seek(SeekFrom::Start(entry.offset))?;
        let mut buf = vec![0u8; nbytes as usize];
        file.read_exact(&mut buf)?;
        Ok(decode(&buf, precision))
    };
    let embed = read("embed")?;
    let mut blocks = Vec::with_capacity(cut);
    for i in 0..cut {
        let mut t = |n: &str| read(&format!("blocks.{i}.{n}"));
        blocks.push(BlockWeights {
            attn_norm: t("attn_norm")?,
            wq: t("wq")?,
            wk: t("wk")?,
            wv: t("wv")?,
            wo: t("wo")?,
            ffn_norm: t("ffn_norm")?,
            w_gate: t("w_gate")?,
            w_up: t("w_up")?,
            w_down: t("w_down")?,
        });
    }
    let head = if with_head && manifest.has_head {
        let final_norm = read("final_norm")?;
        let lm_head = if manifest.config.tied_embeddings { None } else { Some(read("lm_head")?) };
        Some(HeadWeights { final_norm, lm_head })
    } else {
        None
    };
    Transformer::new(manifest.config, ModelWeights { embed, blocks, head })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_is_exact_for_each_precision() {
        for p in [Precision::F32, Precision::F16, Precision::Bf16] {
            let mut c = ModelConfig::toy("m", 2, 8, 40);
            c.precision = p;
            let m = Transformer::random(c, 3).unwrap();
            let dir = tempfile::tempdir().unwrap();
            save_model(&m, dir.path()).unwrap();
            let back = load_model(dir.path()).unwrap();
            assert_eq!(back.weights(), m.weights());
            assert_eq!(back.config(), m.config());
        }
    }

    #[test]
    fn prefix_load_matches_in_memory_prefix() {
        let m = Transformer::random(ModelConfig::toy("m", 3, 8, 40), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        let p = load_model_prefix(dir.path(), 2).unwrap();
        assert_eq!(p.weights(), m.prefix(2).unwrap().weights());
        assert!(matches!(load_model_prefix(dir.path(), 4), Err(ModelError::PrefixTooShort { .. })));
    }

    #[test]
    fn missing_or_truncated_files_fail_to_load() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_model(dir.path()), Err(ModelError::ModelLoadFailure(_))));
        let m = Transformer::random(ModelConfig::toy("m", 1, 8, 40), 3).unwrap();
        save_model(&m, dir.path()).unwrap();
        let w = dir.path().join(MODEL_WEIGHTS);
        let bytes = std::fs::read(&w).unwrap();
        std::fs::write(&w, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_model(dir.path()), Err(ModelError::ModelLoadFailure(_))));
    }
}
