//! Truncated task models: the embedding plus the first `i` blocks, a pooling
//! step and a probe head in place of the LM head.

use crate::io_util::write_atomic;
use crate::model::{load_model_prefix, save_model, ModelConfig, ModelError, Transformer};
use crate::pooling::{pool, PoolingError, PoolingMethod, TokenMatrix};
use crate::probe::{ProbeError, TrainedProbe};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SurgeonError {
    #[error("cut layer {cut} outside 0..={num_layers}")]
    CutLayerOutOfRange { cut: usize, num_layers: usize },
    #[error("head expects {expected} features but {pooling} pooling yields {actual}")]
    HeadDimensionMismatch { expected: usize, actual: usize, pooling: PoolingMethod },
    #[error("no texts to classify")]
    EmptyInput,
    #[error("pipeline artifact is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Pooling(#[from] PoolingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SurgeonError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConstants {
    pub name: String,
    pub vocab_size: u64,
    pub hidden_dim: u64,
    pub num_layers: u64,
    pub per_block_params: u64,
    pub embed_params: u64,
    /// Zero when the LM head is tied to the embedding.
    pub lm_head_params: u64,
    pub tied_embeddings: bool,
}

impl ArchitectureConstants {
    /// Llama-style decoder: GQA attention, SwiGLU MLP, two RMSNorms per block.
    /// The final norm (`hidden_dim` weights) is not counted.
    #[allow(clippy::too_many_arguments)]
    pub fn llama(
        name: &str,
        vocab: u64,
        hidden: u64,
        layers: u64,
        ffn: u64,
        heads: u64,
        kv_heads: u64,
        tied: bool,
    ) -> Self {
        let kv = kv_heads * (hidden / heads);
        let per_block = 2 * hidden * hidden + 2 * hidden * kv + 3 * hidden * ffn + 2 * hidden;
        let embed = vocab * hidden;
        Self {
            name: name.into(),
            vocab_size: vocab,
            hidden_dim: hidden,
            num_layers: layers,
            per_block_params: per_block,
            embed_params: embed,
            lm_head_params: if tied { 0 } else { embed },
            tied_embeddings: tied,
        }
    }

    pub fn llama_3_2_1b() -> Self {
        Self::llama("Llama 3.2 1B", 128_256, 2048, 16, 8192, 32, 8, true)
    }

    pub fn llama_3_2_3b() -> Self {
        Self::llama("Llama 3.2 3B", 128_256, 3072, 28, 8192, 24, 8, true)
    }

    pub fn llama_3_1_8b() -> Self {
        Self::llama("Llama 3.1 8B", 128_256, 4096, 32, 14_336, 32, 8, false)
    }

    /// Same model counted as if the LM head were a separate matrix.
    pub fn untied(&self) -> Self {
        Self { lm_head_params: self.embed_params, tied_embeddings: false, ..self.clone() }
    }

    pub fn from_config(config: &ModelConfig) -> Self {
        Self {
            name: config.model_id.clone(),
            vocab_size: config.vocab_size as u64,
            hidden_dim: config.hidden_dim as u64,
            num_layers: config.num_layers as u64,
            per_block_params: config.block_params(),
            embed_params: config.embed_params(),
            lm_head_params: config.lm_head_params(),
            tied_embeddings: config.tied_embeddings,
        }
    }

    pub fn total_params(&self) -> u64 {
        self.embed_params + self.num_layers * self.per_block_params + self.lm_head_params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPlan {
    pub cut_layer: usize,
    pub head_params: u64,
    pub kept_params: u64,
    pub full_params: u64,
    pub reduction_pct: f64,
}

/// Keeps the embedding and `cut_layer` blocks (layer 0 keeps none) and
/// swaps the LM head for a head of `head_params` parameters.
pub fn count_parameters(arch: &ArchitectureConstants, cut_layer: usize, head_params: u64) -> Result<TruncationPlan> {
    if cut_layer as u64 > arch.num_layers {
        return Err(SurgeonError::CutLayerOutOfRange { cut: cut_layer, num_layers: arch.num_layers as usize });
    }
    let kept = arch.embed_params + cut_layer as u64 * arch.per_block_params + head_params;
    let full = arch.total_params();
    Ok(TruncationPlan {
        cut_layer,
        head_params,
        kept_params: kept,
        full_params: full,
        reduction_pct: 100.0 * (1.0 - kept as f64 / full as f64),
    })
}

/// Parameters attributed to a probe head: weights and biases for linear
/// heads, the fitted parameter count otherwise.
pub fn head_params(probe: &TrainedProbe) -> u64 {
    probe.fitted.param_count() as u64
}

#[derive(Debug, Clone)]
pub struct TruncatedPipeline {
    model: Transformer,
    cut_layer: usize,
    pooling: PoolingMethod,
    head: TrainedProbe,
    label_names: BTreeMap<i64, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PipelineManifest {
    cut_layer: usize,
    pooling: PoolingMethod,
    label_names: BTreeMap<i64, String>,
    architecture: ArchitectureConstants,
    plan: TruncationPlan,
    head_file: String,
    model_dir: String,
}

impl TruncatedPipeline {
    fn assemble(
        model: Transformer,
        cut_layer: usize,
        pooling: PoolingMethod,
        head: TrainedProbe,
        label_names: BTreeMap<i64, String>,
    ) -> Result<Self> {
        let actual = pooling.output_dim(model.config().hidden_dim);
        if head.input_dim != actual {
            return Err(SurgeonError::HeadDimensionMismatch { expected: head.input_dim, actual, pooling });
        }
        Ok(Self { model, cut_layer, pooling, head, label_names })
    }

    /// Copies the prefix out of an in-memory full model.
    pub fn from_model(
        full: &Transformer,
        cut_layer: usize,
        pooling: PoolingMethod,
        head: TrainedProbe,
        label_names: BTreeMap<i64, String>,
    ) -> Result<Self> {
        if cut_layer > full.num_blocks() {
            return Err(SurgeonError::CutLayerOutOfRange { cut: cut_layer, num_layers: full.num_blocks() });
        }
        Self::assemble(full.prefix(cut_layer)?, cut_layer, pooling, head, label_names)
    }

    pub fn model(&self) -> &Transformer {
        &self.model
    }

    /// Mutable access to the prefix weights (used to inject perturbations).
    pub fn model_mut(&mut self) -> &mut Transformer {
        &mut self.model
    }

    pub fn cut_layer(&self) -> usize {
        self.cut_layer
    }

    pub fn pooling(&self) -> PoolingMethod {
        self.pooling
    }

    pub fn head(&self) -> &TrainedProbe {
        &self.head
    }

    pub fn plan(&self) -> TruncationPlan {
        let arch = ArchitectureConstants::from_config(self.model.config());
        count_parameters(&arch, self.cut_layer, head_params(&self.head)).expect("cut validated at build")
    }

    /// Pooled layer-`cut` features, one row per text, before the head.
    pub fn features(&self, texts: &[impl AsRef<str>]) -> Result<Array2<f32>> {
        if texts.is_empty() {
            return Err(SurgeonError::EmptyInput);
        }
        let batch = self.model.tokenizer().tokenize(texts, self.model.config())?;
        let d = self.model.config().hidden_dim;
        let dim = self.pooling.output_dim(d);
        let mut out = Array2::<f32>::zeros((texts.len(), dim));
        for i in 0..texts.len() {
            let ids = batch.row_tokens(i);
            let states = self.model.hidden_states(&ids, &[self.cut_layer])?;
            let view = ArrayView2::from_shape((ids.len(), d), &states[0]).expect("t x d activations");
            let m = TokenMatrix::from_f32(view, &vec![1u8; ids.len()])?;
            for (j, v) in pool(&m, self.pooling)?.values.into_iter().enumerate() {
                out[[i, j]] = v as f32;
            }
        }
        Ok(out)
    }

    pub fn classify(&self, texts: &[impl AsRef<str>]) -> Result<Vec<i64>> {
        let feats = self.features(texts)?;
        Ok(self.head.predict_matrix(feats.view())?)
    }

    /// Label names for `classify`; unnamed labels render as their integer.
    pub fn classify_named(&self, texts: &[impl AsRef<str>]) -> Result<Vec<String>> {
        Ok(self
            .classify(texts)?
            .into_iter()
            .map(|l| self.label_names.get(&l).cloned().unwrap_or_else(|| l.to_string()))
            .collect())
    }

    /// Writes `pipeline.json`, the prefix weights under `model/` and the
    /// head as `head.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_model(&self.model, &dir.join("model"))?;
        self.head.save(&dir.join("head.json"))?;
        let manifest = PipelineManifest {
            cut_layer: self.cut_layer,
            pooling: self.pooling,
            label_names: self.label_names.clone(),
            architecture: ArchitectureConstants::from_config(self.model.config()),
            plan: self.plan(),
            head_file: "head.json".into(),
            model_dir: "model".into(),
        };
        write_atomic(&dir.join("pipeline.json"), &serde_json::to_vec_pretty(&manifest).expect("serializes"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("pipeline.json"))?;
        let m: PipelineManifest = serde_json::from_str(&text).map_err(|e| SurgeonError::Corrupt(e.to_string()))?;
        let model = load_model_prefix(&dir.join(&m.model_dir), m.cut_layer)?;
        let head = TrainedProbe::load(&dir.join(&m.head_file))?;
        Self::assemble(model, m.cut_layer, m.pooling, head, m.label_names)
    }
}

/// Builds a pipeline reading only the embedding and the first `cut_layer`
/// blocks from a saved model directory.
pub fn build_truncated(
    model_dir: &Path,
    cut_layer: usize,
    pooling: PoolingMethod,
    head: TrainedProbe,
    label_names: BTreeMap<i64, String>,
) -> Result<TruncatedPipeline> {
    let model = load_model_prefix(model_dir, cut_layer).map_err(|e| match e {
        ModelError::PrefixTooShort { available, requested } => {
            SurgeonError::CutLayerOutOfRange { cut: requested, num_layers: available }
        }
        other => other.into(),
    })?;
    TruncatedPipeline::assemble(model, cut_layer, pooling, head, label_names)
}

/// True iff the pipeline's layer-`cut` activations equal the full model's,
/// bit for bit, at every position of every text.
pub fn verify_prefix_equivalence(full: &Transformer, pipeline: &TruncatedPipeline, texts: &[impl AsRef<str>]) -> Result<bool> {
    if texts.is_empty() {
        return Err(SurgeonError::EmptyInput);
    }
    let batch = full.tokenizer().tokenize(texts, full.config())?;
    let cut = pipeline.cut_layer();
    for i in 0..texts.len() {
        let ids = batch.row_tokens(i);
        let a = full.hidden_states(&ids, &[cut])?;
        let b = pipeline.model().hidden_states(&ids, &[cut])?;
        if a[0].len() != b[0].len() || a[0].iter().zip(&b[0]).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_arch() -> ArchitectureConstants {
        ArchitectureConstants {
            name: "toy".into(),
            vocab_size: 10,
            hidden_dim: 10,
            num_layers: 4,
            per_block_params: 50,
            embed_params: 100,
            lm_head_params: 100,
            tied_embeddings: false,
        }
    }

    #[test]
    fn hand_arithmetic() {
        let p = count_parameters(&toy_arch(), 2, 10).unwrap();
        assert_eq!((p.kept_params, p.full_params), (210, 400));
        assert!((p.reduction_pct - 47.5).abs() < 1e-12);
        let all = count_parameters(&toy_arch(), 4, 100).unwrap();
        assert_eq!(all.reduction_pct, 0.0);
        assert!(matches!(count_parameters(&toy_arch(), 5, 0), Err(SurgeonError::CutLayerOutOfRange { .. })));
    }

    #[test]
    fn accounting_is_monotone() {
        let arch = ArchitectureConstants::llama_3_1_8b();
        let plans: Vec<TruncationPlan> = (0..=32).map(|c| count_parameters(&arch, c, 8194).unwrap()).collect();
        for w in plans.windows(2) {
            assert!(w[1].kept_params > w[0].kept_params);
            assert!(w[1].reduction_pct < w[0].reduction_pct);
        }
    }

    #[test]
    fn public_llama_totals() {
        // Model-card sizes: about 1.24B, 3.21B and 8.03B parameters.
        let one = ArchitectureConstants::llama_3_2_1b().total_params() as f64 / 1e9;
        let three = ArchitectureConstants::llama_3_2_3b().total_params() as f64 / 1e9;
        let eight = ArchitectureConstants::llama_3_1_8b().total_params() as f64 / 1e9;
        assert!((one - 1.236).abs() < 0.002, "{one}");
        assert!((three - 3.213).abs() < 0.002, "{three}");
        assert!((eight - 8.030).abs() < 0.002, "{eight}");
    }

    #[test]
    fn toy_config_matches_model_parameter_count() {
        let mut c = ModelConfig::toy("t", 3, 16, 50);
        c.tied_embeddings = false;
        let m = Transformer::random(c.clone(), 1).unwrap();
        let arch = ArchitectureConstants::from_config(&c);
        // the model also stores the final norm
        assert_eq!(arch.total_params() + 16, m.param_count() as u64);
    }
}
