use super::tokenizer::{TokenizedBatch, WordTokenizer, EOS_ID};
use super::{ModelConfig, ModelError, PaddingSide, Precision, Result};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Weights of one transformer block. Matrices are row-major `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub attn_norm: Vec<f32>,
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub ffn_norm: Vec<f32>,
    pub w_gate: Vec<f32>,
    pub w_up: Vec<f32>,
    pub w_down: Vec<f32>,
}

impl BlockWeights {
    pub fn tensors(&self) -> [(&'static str, &Vec<f32>); 9] {
        [
            ("attn_norm", &self.attn_norm),
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("ffn_norm", &self.ffn_norm),
            ("w_gate", &self.w_gate),
            ("w_up", &self.w_up),
            ("w_down", &self.w_down),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f32>); 9] {
        [
            ("attn_norm", &mut self.attn_norm),
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("ffn_norm", &mut self.ffn_norm),
            ("w_gate", &mut self.w_gate),
            ("w_up", &mut self.w_up),
            ("w_down", &mut self.w_down),
        ]
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Final norm plus LM head; `lm_head` is `None` when tied to the embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub final_norm: Vec<f32>,
    pub lm_head: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub embed: Vec<f32>,
    pub blocks: Vec<BlockWeights>,
    /// Absent on truncated prefixes.
    pub head: Option<HeadWeights>,
}

impl ModelWeights {
    /// Gaussian weights, deterministic for a seed.
    pub fn random(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.hidden_dim;
        let kv = config.num_kv_heads * config.head_dim();
        let f = config.ffn_dim;
        let mut mat = |rows: usize, cols: usize, std: f64| -> Vec<f32> {
            let dist = Normal::new(0.0, std).unwrap();
            (0..rows * cols).map(|_| dist.sample(&mut rng) as f32).collect()
        };
        let embed = mat(config.vocab_size, d, 1.0);
        let inv = |n: usize| 1.0 / (n as f64).sqrt();
        let blocks = (0..config.num_layers)
            .map(|_| BlockWeights {
                attn_norm: vec![1.0; d],
                wq: mat(d, d, inv(d)),
                wk: mat(kv, d, inv(d)),
                wv: mat(kv, d, inv(d)),
                wo: mat(d, d, inv(d)),
                ffn_norm: vec![1.0; d],
                w_gate: mat(f, d, inv(d)),
                w_up: mat(f, d, inv(d)),
                w_down: mat(d, f, inv(f)),
            })
            .collect();
        let lm_head = (!config.tied_embeddings).then(|| mat(config.vocab_size, d, inv(d)));
        let mut w = Self {
            embed,
            blocks,
            head: Some(HeadWeights { final_norm: vec![1.0; d], lm_head }),
        };
        w.round_to(config.precision);
        w
    }

    pub fn round_to(&mut self, precision: Precision) {
        precision.round_slice(&mut self.embed);
        for b in &mut self.blocks {
            for (_, t) in b.tensors_mut() {
                precision.round_slice(t);
            }
        }
        if let Some(h) = &mut self.head {
            precision.round_slice(&mut h.final_norm);
            if let Some(lm) = &mut h.lm_head {
                precision.round_slice(lm);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let head = self
            .head
            .as_ref()
            .map(|h| h.final_norm.len() + h.lm_head.as_ref().map_or(0, Vec::len))
            .unwrap_or(0);
        self.embed.len() + self.blocks.iter().map(BlockWeights::param_count).sum::<usize>() + head
    }
}

/// A decoder-only transformer (or a prefix of one).
#[derive(Debug, Clone)]
pub struct Transformer {
    config: ModelConfig,
    weights: ModelWeights,
    tokenizer: WordTokenizer,
}

impl Transformer {
    pub fn new(config: ModelConfig, weights: ModelWeights) -> Result<Self> {
        config.validate()?;
        check_shapes(&config, &weights)?;
        let tokenizer = WordTokenizer::for_config(&config);
        Ok(Self { config, weights, tokenizer })
    }

    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = ModelWeights::random(&config, seed);
        Self::new(config, weights)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut ModelWeights {
        &mut self.weights
    }

    pub fn tokenizer(&self) -> &WordTokenizer {
        &self.tokenizer
    }

    /// Blocks actually held (equals `num_layers` unless this is a prefix).
    pub fn num_blocks(&self) -> usize {
        self.weights.blocks.len()
    }

    pub fn has_lm_head(&self) -> bool {
        self.weights.head.is_some()
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    /// Bytes held by weights at the model's precision.
    pub fn resident_bytes(&self) -> u64 {
        (self.param_count() * self.config.precision.bytes()) as u64
    }

    /// A copy holding the embedding and the first `cut` blocks only.
    pub fn prefix(&self, cut: usize) -> Result<Self> {
        if cut > self.num_blocks() {
            return Err(ModelError::PrefixTooShort { available: self.num_blocks(), requested: cut });
        }
        let weights = ModelWeights {
            embed: self.weights.embed.clone(),
            blocks: self.weights.blocks[..cut].to_vec(),
            head: None,
        };
        Ok(Self { config: self.config.clone(), weights, tokenizer: self.tokenizer.clone() })
    }

    /// Residual stream of one unpadded sequence at each layer in `layers`
    /// (0 = embedding output, l = output of block l). Each entry is `t * d`.
    pub fn hidden_states(&self, ids: &[u32], layers: &[usize]) -> Result<Vec<Vec<f32>>> {
        let max_layer = layers.iter().copied().max().unwrap_or(0);
        if let Some(&bad) = layers.iter().find(|&&l| l > self.num_blocks()) {
            return Err(ModelError::LayerOutOfRange { layer: bad, num_layers: self.num_blocks() });
        }
        let mut out = vec![Vec::new(); layers.len()];
        let mut x = self.embed(ids);
        capture(&mut out, layers, 0, &x);
        for l in 1..=max_layer {
            self.block_forward(l - 1, &mut x, ids.len());
            capture(&mut out, layers, l, &x);
        }
        Ok(out)
    }

    /// Runs a padded batch and returns one `(batch, T_max, d)` array per
    /// requested layer. Pad positions are zero.
    pub fn forward_batch(&self, batch: &TokenizedBatch, layers: &[usize]) -> Result<Vec<Array3<f32>>> {
        let (b, t_max, d) = (batch.batch_size(), batch.max_len(), self.config.hidden_dim);
        let mut arrays = vec![Array3::<f32>::zeros((b, t_max, d)); layers.len()];
        for i in 0..b {
            let ids = batch.row_tokens(i);
            let offset = match batch.padding_side {
                PaddingSide::Right => 0,
                PaddingSide::Left => t_max - ids.len(),
            };
            let states = self.hidden_states(&ids, layers)?;
            for (arr, st) in arrays.iter_mut().zip(&states) {
                for (pos, row) in st.chunks_exact(d).enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        arr[[i, offset + pos, j]] = v;
                    }
                }
            }
        }
        Ok(arrays)
    }

    /// Next-token logits after the last position of `ids`.
    pub fn next_token_logits(&self, ids: &[u32]) -> Result<Vec<f32>> {
        let head = self.weights.head.as_ref().ok_or(ModelError::NoLmHead)?;
        let n = self.num_blocks();
        let states = self.hidden_states(ids, &[n])?;
        let d = self.config.hidden_dim;
        let last = &states[0][(ids.len() - 1) * d..];
        let normed = rms_norm(last, 1, d, &head.final_norm, self.config.norm_eps);
        let table = head.lm_head.as_ref().unwrap_or(&self.weights.embed);
        Ok(linear(&normed, 1, d, table, self.config.vocab_size))
    }

    /// Greedy decoding; stops at EOS or after `max_new_tokens`.
    pub fn generate_greedy(&self, prompt: &[u32], max_new_tokens: usize) -> Result<Vec<u32>> {
        let mut ids = prompt.to_vec();
        let mut generated = Vec::new();
        for _ in 0..max_new_tokens {
            if ids.len() >= self.config.max_seq_len {
                break;
            }
            let logits = self.next_token_logits(&ids)?;
            let next = argmax(&logits) as u32;
            if next == EOS_ID {
                break;
            }
            ids.push(next);
            generated.push(next);
        }
        Ok(generated)
    }

    fn embed(&self, ids: &[u32]) -> Vec<f32> {
        let d = self.config.hidden_dim;
        let mut x = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            x.extend_from_slice(&self.weights.embed[id * d..(id + 1) * d]);
        }
        self.config.precision.round_slice(&mut x);
        x
    }

    fn block_forward(&self, index: usize, x: &mut [f32], t: usize) {
        let c = &self.config;
        let w = &self.weights.blocks[index];
        let (d, hd, nh, nkv) = (c.hidden_dim, c.head_dim(), c.num_heads, c.num_kv_heads);
        let kv_dim = nkv * hd;

        let h = rms_norm(x, t, d, &w.attn_norm, c.norm_eps);
        let mut q = linear(&h, t, d, &w.wq, d);
        let mut k = linear(&h, t, d, &w.wk, kv_dim);
        let v = linear(&h, t, d, &w.wv, kv_dim);
        rope(&mut q, t, nh, hd, c.rope_theta);
        rope(&mut k, t, nkv, hd, c.rope_theta);

        let group = nh / nkv;
        let scale = 1.0 / (hd as f32).sqrt();
        let mut attn = vec![0.0f32; t * d];
        let mut scores = vec![0.0f32; t];
        for head in 0..nh {
            let kvh = head / group;
            for i in 0..t {
                let qi = &q[i * d + head * hd..i * d + (head + 1) * hd];
                let mut max = f32::NEG_INFINITY;
                for j in 0..=i {
                    let kj = &k[j * kv_dim + kvh * hd..j * kv_dim + (kvh + 1) * hd];
                    let s = dot(qi, kj) * scale;
                    scores[j] = s;
                    max = max.max(s);
                }
                let mut sum = 0.0f32;
                for s in &mut scores[..=i] {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let out = &mut attn[i * d + head * hd..i * d + (head + 1) * hd];
                for j in 0..=i {
                    let p = scores[j] / sum;
                    let vj = &v[j * kv_dim + kvh * hd..j * kv_dim + (kvh + 1) * hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
            }
        }
        let h_attn = linear(&attn, t, d, &w.wo, d);
        // h_resid = h_attn + x
        for (xi, a) in x.iter_mut().zip(&h_attn) {
            *xi += a;
        }

        let h2 = rms_norm(x, t, d, &w.ffn_norm, c.norm_eps);
        let gate = linear(&h2, t, d, &w.w_gate, c.ffn_dim);
        let up = linear(&h2, t, d, &w.w_up, c.ffn_dim);
        let act: Vec<f32> = gate.iter().zip(&up).map(|(&g, &u)| silu(g) * u).collect();
        let h_ffn = linear(&act, t, c.ffn_dim, &w.w_down, d);
        // x^(l+1) = h_ffn + h_resid
        for (xi, f) in x.iter_mut().zip(&h_ffn) {
            *xi += f;
        }
        c.precision.round_slice(x);
    }
}

fn capture(out: &mut [Vec<f32>], layers: &[usize], layer: usize, x: &[f32]) {
    for (slot, &l) in out.iter_mut().zip(layers) {
        if l == layer {
            *slot = x.to_vec();
        }
    }
}

fn check_shapes(c: &ModelConfig, w: &ModelWeights) -> Result<()> {
    let d = c.hidden_dim;
    let kv = c.num_kv_heads * c.head_dim();
    let f = c.ffn_dim;
    let fail = |name: String, got: usize, want: usize| {
        Err(ModelError::ModelLoadFailure(format!("tensor {name} has {got} values, expected {want}")))
    };
    if w.embed.len() != c.vocab_size * d {
        return fail("embed".into(), w.embed.len(), c.vocab_size * d);
    }
    if w.blocks.len() > c.num_layers {
        return Err(ModelError::ModelLoadFailure(format!(
            "{} blocks present, config declares {}",
            w.blocks.len(),
            c.num_layers
        )));
    }
    for (i, b) in w.blocks.iter().enumerate() {
        let expected = [d, d * d, kv * d, kv * d, d * d, d, f * d, f * d, d * f];
        for ((name, t), want) in b.tensors().iter().zip(expected) {
            if t.len() != want {
                return fail(format!("blocks.{i}.{name}"), t.len(), want);
            }
        }
    }
    if let Some(h) = &w.head {
        if h.final_norm.len() != d {
            return fail("final_norm".into(), h.final_norm.len(), d);
        }
        match (&h.lm_head, c.tied_embeddings) {
            (Some(lm), false) if lm.len() != c.vocab_size * d => {
                return fail("lm_head".into(), lm.len(), c.vocab_size * d)
            }
            (None, false) => return Err(ModelError::ModelLoadFailure("missing lm_head".into())),
            (Some(_), true) => {
                return Err(ModelError::ModelLoadFailure("lm_head present on tied model".into()))
            }
            _ => {}
        }
    }
    Ok(())
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut s = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `x [rows, in] · w[out, in]^T`.
fn linear(x: &[f32], rows: usize, in_dim: usize, w: &[f32], out_dim: usize) -> Vec<f32> {
    let mut y = vec![0.0f32; rows * out_dim];
    for r in 0..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        for o in 0..out_dim {
            y[r * out_dim + o] = dot(xr, &w[o * in_dim..(o + 1) * in_dim]);
        }
    }
    y
}

fn rms_norm(x: &[f32], rows: usize, d: usize, weight: &[f32], eps: f32) -> Vec<f32> {
    let mut y = vec![0.0f32; rows * d];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let ms = dot(xr, xr) / d as f32;
        let inv = 1.0 / (ms + eps).sqrt();
        for j in 0..d {
            y[r * d + j] = xr[j] * inv * weight[j];
        }
    }
    y
}

/// Rotate-half rotary embedding over `heads` heads per row, positions 0..rows.
fn rope(x: &mut [f32], rows: usize, heads: usize, hd: usize, theta: f32) {
    let half = hd / 2;
    let width = heads * hd;
    for pos in 0..rows {
        for k in 0..half {
            let freq = (theta as f64).powf(-2.0 * k as f64 / hd as f64);
            let angle = pos as f64 * freq;
            let (sin, cos) = (angle.sin() as f32, angle.cos() as f32);
            for h in 0..heads {
                let base = pos * width + h * hd;
                let a = x[base + k];
                let b = x[base + k + half];
                x[base + k] = a * cos - b * sin;
                x[base + k + half] = b * cos + a * sin;
            }
        }
    }
}

#[inline]
fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
