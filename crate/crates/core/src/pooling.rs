//! Mask-aware pooling of `(T, d)` token activations into one feature vector.
//!
//! Positions whose mask is 0 are ignored by every method. Arithmetic is f64;
//! store-level features are kept as f32.

use crate::extract::{ActivationStore, StoreError};
use crate::io_util::{f32_from_le_bytes, f32_to_le_bytes, i64_from_le_bytes, i64_to_le_bytes, write_atomic};
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoolingError {
    #[error("every position is masked out")]
    AllMasked,
    #[error("mask length {mask} does not match {rows} token rows")]
    MaskLength { mask: usize, rows: usize },
    #[error("non-finite activation at valid position {0}")]
    NonFinite(usize),
    #[error("unknown pooling method `{0}`")]
    UnknownMethod(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("corrupt pooled features: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PoolingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMethod {
    Mean,
    Last,
    Max,
    Min,
    Concat,
    Attention,
}

impl PoolingMethod {
    pub const ALL: [PoolingMethod; 6] = [
        PoolingMethod::Mean,
        PoolingMethod::Last,
        PoolingMethod::Max,
        PoolingMethod::Min,
        PoolingMethod::Concat,
        PoolingMethod::Attention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PoolingMethod::Mean => "mean",
            PoolingMethod::Last => "last",
            PoolingMethod::Max => "max",
            PoolingMethod::Min => "min",
            PoolingMethod::Concat => "concat",
            PoolingMethod::Attention => "attention",
        }
    }

    /// Label used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            PoolingMethod::Mean => "Mean",
            PoolingMethod::Last => "Last-Token",
            PoolingMethod::Max => "Max",
            PoolingMethod::Min => "Min",
            PoolingMethod::Concat => "Concat",
            PoolingMethod::Attention => "Attn",
        }
    }

    /// Preference when accuracies tie: mean < attention < concat < max < min < last.
    pub fn tie_rank(self) -> u8 {
        match self {
            PoolingMethod::Mean => 0,
            PoolingMethod::Attention => 1,
            PoolingMethod::Concat => 2,
            PoolingMethod::Max => 3,
            PoolingMethod::Min => 4,
            PoolingMethod::Last => 5,
        }
    }

    pub fn output_dim(self, hidden_dim: usize) -> usize {
        match self {
            PoolingMethod::Concat => 3 * hidden_dim,
            _ => hidden_dim,
        }
    }
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolingMethod {
    type Err = PoolingError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(PoolingMethod::Mean),
            "last" | "last-token" | "last_token" => Ok(PoolingMethod::Last),
            "max" => Ok(PoolingMethod::Max),
            "min" => Ok(PoolingMethod::Min),
            "concat" => Ok(PoolingMethod::Concat),
            "attention" | "attn" => Ok(PoolingMethod::Attention),
            other => Err(PoolingError::UnknownMethod(other.to_string())),
        }
    }
}

/// Token activations of one example with its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    values: Array2<f64>,
    mask: Vec<u8>,
}

impl TokenMatrix {
    pub fn new(values: Array2<f64>, mask: Vec<u8>) -> Result<Self> {
        if mask.len() != values.nrows() {
            return Err(PoolingError::MaskLength { mask: mask.len(), rows: values.nrows() });
        }
        Ok(Self { values, mask })
    }

    /// All rows valid.
    pub fn unmasked(values: Array2<f64>) -> Self {
        let mask = vec![1; values.nrows()];
        Self { values, mask }
    }

    pub fn from_f32(values: ArrayView2<'_, f32>, mask: &[u8]) -> Result<Self> {
        Self::new(values.mapv(f64::from), mask.to_vec())
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    fn valid_rows(&self) -> Result<Vec<usize>> {
        let rows: Vec<usize> = (0..self.mask.len()).filter(|&i| self.mask[i] != 0).collect();
        if rows.is_empty() {
            return Err(PoolingError::AllMasked);
        }
        for &i in &rows {
            if self.values.row(i).iter().any(|v| !v.is_finite()) {
                return Err(PoolingError::NonFinite(i));
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledVector {
    pub values: Vec<f64>,
    pub method: PoolingMethod,
}

pub fn pool_mean(m: &TokenMatrix) -> Result<PooledVector> {
    let rows = m.valid_rows()?;
    let mut acc = vec![0.0; m.dim()];
    for &i in &rows {
        for (a, v) in acc.iter_mut().zip(m.values.row(i)) {
            *a += v;
        }
    }
    let t = rows.len() as f64;
    Ok(PooledVector { values: acc.into_iter().map(|a| a / t).collect(), method: PoolingMethod::Mean })
}

pub fn pool_last(m: &TokenMatrix) -> Result<PooledVector> {
    let rows = m.valid_rows()?;
    let last = *rows.last().unwrap();
    Ok(PooledVector { values: m.values.row(last).to_vec(), method: PoolingMethod::Last })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Max,
    Min,
}

pub fn pool_extrema(m: &TokenMatrix, mode: Extremum) -> Result<PooledVector> {
    let rows = m.valid_rows()?;
    let mut acc = m.values.row(rows[0]).to_vec();
    for &i in &rows[1..] {
        for (a, &v) in acc.iter_mut().zip(m.values.row(i)) {
            match mode {
                Extremum::Max if v > *a => *a = v,
                Extremum::Min if v < *a => *a = v,
                _ => {}
            }
        }
    }
    let method = match mode {
        Extremum::Max => PoolingMethod::Max,
        Extremum::Min => PoolingMethod::Min,
    };
    Ok(PooledVector { values: acc, method })
}

/// `[mean ‖ max ‖ min]`, length `3 * d`.
pub fn pool_concat(m: &TokenMatrix) -> Result<PooledVector> {
    let mut values = pool_mean(m)?.values;
    values.extend(pool_extrema(m, Extremum::Max)?.values);
    values.extend(pool_extrema(m, Extremum::Min)?.values);
    Ok(PooledVector { values, method: PoolingMethod::Concat })
}

/// Softmax over valid tokens of each token's mean activation. Masked
/// positions get weight exactly 0.
pub fn attention_weights(m: &TokenMatrix) -> Result<Vec<f64>> {
    let rows = m.valid_rows()?;
    let j = m.dim() as f64;
    let scores: Vec<f64> = rows.iter().map(|&i| m.values.row(i).sum() / j).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut w = vec![0.0; m.mask.len()];
    for (&i, e) in rows.iter().zip(&exps) {
        w[i] = e / total;
    }
    Ok(w)
}

pub fn pool_attention(m: &TokenMatrix) -> Result<PooledVector> {
    let w = attention_weights(m)?;
    let mut acc = vec![0.0; m.dim()];
    for (i, &wi) in w.iter().enumerate() {
        if m.mask[i] != 0 {
            for (a, v) in acc.iter_mut().zip(m.values.row(i)) {
                *a += wi * v;
            }
        }
    }
    Ok(PooledVector { values: acc, method: PoolingMethod::Attention })
}

pub fn pool(m: &TokenMatrix, method: PoolingMethod) -> Result<PooledVector> {
    match method {
        PoolingMethod::Mean => pool_mean(m),
        PoolingMethod::Last => pool_last(m),
        PoolingMethod::Max => pool_extrema(m, Extremum::Max),
        PoolingMethod::Min => pool_extrema(m, Extremum::Min),
        PoolingMethod::Concat => pool_concat(m),
        PoolingMethod::Attention => pool_attention(m),
    }
}

/// An `(examples, feature_dim)` matrix from one pooling method at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures {
    pub layer: usize,
    pub method: PoolingMethod,
    pub features: Array2<f32>,
    pub labels: Vec<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeaturesManifest {
    layer: usize,
    method: PoolingMethod,
    dtype: String,
    num_examples: usize,
    feature_dim: usize,
}

impl PooledFeatures {
    pub fn num_examples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            layer: self.layer,
            method: self.method,
            features: self.features.select(ndarray::Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Same binary convention as the activation store: `manifest.json`,
    /// `features.bin` (f32 LE row-major), `labels.bin` (i64 LE).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let data: Vec<f32> = self.features.iter().copied().collect();
        write_atomic(&dir.join("features.bin"), &f32_to_le_bytes(&data))?;
        write_atomic(&dir.join("labels.bin"), &i64_to_le_bytes(&self.labels))?;
        let manifest = FeaturesManifest {
            layer: self.layer,
            method: self.method,
            dtype: "f32".into(),
            num_examples: self.num_examples(),
            feature_dim: self.dim(),
        };
        write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest).unwrap())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        let m: FeaturesManifest =
            serde_json::from_str(&text).map_err(|e| PoolingError::Corrupt(e.to_string()))?;
        let feats = std::fs::read(dir.join("features.bin"))?;
        let labels = std::fs::read(dir.join("labels.bin"))?;
        if feats.len() != m.num_examples * m.feature_dim * 4 || labels.len() != m.num_examples * 8 {
            return Err(PoolingError::Corrupt("array length disagrees with manifest".into()));
        }
        Ok(Self {
            layer: m.layer,
            method: m.method,
            features: Array2::from_shape_vec((m.num_examples, m.feature_dim), f32_from_le_bytes(&feats))
                .expect("length checked"),
            labels: i64_from_le_bytes(&labels),
        })
    }
}

/// Pools every example of `store` at `layer`.
pub fn pool_store(store: &ActivationStore, layer: usize, method: PoolingMethod) -> Result<PooledFeatures> {
    let acts = store.layer(layer)?;
    let n = store.num_examples();
    let dim = method.output_dim(store.hidden_dim());
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let m = TokenMatrix::from_f32(
                acts.index_axis(ndarray::Axis(0), i),
                store.masks.row(i).as_slice().expect("standard layout"),
            )?;
            pool(&m, method).map(|p| p.values)
        })
        .collect::<Result<_>>()?;
    let mut features = Array2::<f32>::zeros((n, dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            features[[i, j]] = v as f32;
        }
    }
    Ok(PooledFeatures { layer, method, features, labels: store.labels.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn m(values: Array2<f64>, mask: Vec<u8>) -> TokenMatrix {
        TokenMatrix::new(values, mask).unwrap()
    }

    #[test]
    fn mean_examples() {
        let a = m(array![[1.0, 3.0], [2.0, 0.0]], vec![1, 1]);
        assert_eq!(pool_mean(&a).unwrap().values, vec![1.5, 1.5]);
        let b = m(array![[1.0, 3.0], [9.0, 9.0]], vec![1, 0]);
        assert_eq!(pool_mean(&b).unwrap().values, vec![1.0, 3.0]);
    }

    #[test]
    fn last_examples() {
        let a = m(array![[1.0, 3.0], [2.0, 0.0]], vec![1, 1]);
        assert_eq!(pool_last(&a).unwrap().values, vec![2.0, 0.0]);
        let b = m(array![[1.0, 3.0], [2.0, 0.0]], vec![1, 0]);
        assert_eq!(pool_last(&b).unwrap().values, vec![1.0, 3.0]);
    }

    #[test]
    fn extrema_and_concat_examples() {
        let a = m(array![[1.0, 3.0], [2.0, 0.0]], vec![1, 1]);
        assert_eq!(pool_extrema(&a, Extremum::Max).unwrap().values, vec![2.0, 3.0]);
        assert_eq!(pool_extrema(&a, Extremum::Min).unwrap().values, vec![1.0, 0.0]);
        assert_eq!(pool_concat(&a).unwrap().values, vec![1.5, 1.5, 2.0, 3.0, 1.0, 0.0]);
        let wide = TokenMatrix::unmasked(Array2::ones((3, 4)));
        assert_eq!(pool_concat(&wide).unwrap().values.len(), 12);
    }

    #[test]
    fn attention_example() {
        let a = m(array![[1.0, 3.0], [2.0, 0.0]], vec![1, 1]);
        let w = attention_weights(&a).unwrap();
        // softmax([2, 1]) computed directly
        let e0 = 2.0f64.exp();
        let e1 = 1.0f64.exp();
        let (w0, w1) = (e0 / (e0 + e1), e1 / (e0 + e1));
        assert!((w[0] - w0).abs() < 1e-12 && (w[1] - w1).abs() < 1e-12);
        let out = pool_attention(&a).unwrap().values;
        assert!((out[0] - (w0 * 1.0 + w1 * 2.0)).abs() < 1e-9);
        assert!((out[1] - (w0 * 3.0)).abs() < 1e-9);
        assert!((out[0] - 1.2689).abs() < 1e-4 && (out[1] - 2.1932).abs() < 1e-4);
    }

    #[test]
    fn identical_tokens_get_equal_weight() {
        let a = m(array![[0.5, -1.0], [0.5, -1.0]], vec![1, 1]);
        assert_eq!(attention_weights(&a).unwrap(), vec![0.5, 0.5]);
        assert_eq!(pool_attention(&a).unwrap().values, vec![0.5, -1.0]);
    }

    #[test]
    fn masked_attention_weight_is_exactly_zero() {
        let a = m(array![[1.0, 1.0], [100.0, 100.0], [0.0, 2.0]], vec![1, 0, 1]);
        let w = attention_weights(&a).unwrap();
        assert_eq!(w[1], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_masked_is_an_error_for_every_method() {
        let a = m(array![[1.0], [2.0]], vec![0, 0]);
        for method in PoolingMethod::ALL {
            assert!(matches!(pool(&a, method), Err(PoolingError::AllMasked)));
        }
    }

    #[test]
    fn single_valid_token_collapses() {
        let a = m(array![[0.0, 0.0], [4.0, -2.0], [7.0, 7.0]], vec![0, 1, 0]);
        for method in PoolingMethod::ALL {
            let v = pool(&a, method).unwrap().values;
            let expected: Vec<f64> = match method {
                PoolingMethod::Concat => vec![4.0, -2.0, 4.0, -2.0, 4.0, -2.0],
                _ => vec![4.0, -2.0],
            };
            assert_eq!(v, expected, "{method}");
        }
    }

    #[test]
    fn method_names_parse() {
        for method in PoolingMethod::ALL {
            assert_eq!(method.as_str().parse::<PoolingMethod>().unwrap(), method);
        }
        assert!("median".parse::<PoolingMethod>().is_err());
    }
}
