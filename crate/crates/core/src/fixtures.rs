//! Synthetic activation stores with a label signal planted at one layer.

use crate::extract::{ActivationStore, StoreManifest};
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct PlantedSignal {
    pub layers: Vec<usize>,
    pub signal_layer: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    /// Distance between class means along the planted directions.
    pub delta: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl PlantedSignal {
    pub fn new(signal_layer: usize) -> Self {
        Self {
            layers: (0..=5).collect(),
            signal_layer,
            hidden_dim: 16,
            n_classes: 2,
            delta: 3.0,
            min_len: 3,
            max_len: 6,
            seed: 42,
        }
    }

    /// Class offset for token activations at the signal layer. Binary tasks
    /// use `+-delta/2` on dimension 0; more classes use `delta/sqrt(2)` on
    /// dimension `c`, so every pair of class means is `delta` apart.
    fn offset(&self, label: usize, dim: usize) -> f64 {
        if self.n_classes == 2 {
            if dim == 0 {
                if label == 1 {
                    self.delta / 2.0
                } else {
                    -self.delta / 2.0
                }
            } else {
                0.0
            }
        } else if dim == label {
            self.delta / std::f64::consts::SQRT_2
        } else {
            0.0
        }
    }

    /// A store of `n` examples with balanced labels in shuffled order.
    /// Every layer carries standard Gaussian noise; only `signal_layer` adds
    /// the class offset. Padding is on the right and zero-filled.
    pub fn store(&self, dataset_id: &str, n: usize, seed: u64) -> ActivationStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<i64> = (0..n).map(|i| (i % self.n_classes) as i64).collect();
        labels.shuffle(&mut rng);
        let lens: Vec<usize> = (0..n).map(|_| rng.random_range(self.min_len..=self.max_len)).collect();
        let t = self.max_len;
        let d = self.hidden_dim;
        let mut masks = Array2::<u8>::zeros((n, t));
        for (i, &l) in lens.iter().enumerate() {
            masks.row_mut(i).slice_mut(ndarray::s![..l]).fill(1);
        }
        let mut layers = std::collections::BTreeMap::new();
        for &layer in &self.layers {
            let mut acts = Array3::<f32>::zeros((n, t, d));
            for i in 0..n {
                for p in 0..lens[i] {
                    for j in 0..d {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let v = if layer == self.signal_layer { z + self.offset(labels[i] as usize, j) } else { z };
                        acts[[i, p, j]] = v as f32;
                    }
                }
            }
            layers.insert(layer, acts);
        }
        ActivationStore {
            manifest: StoreManifest {
                model_id: "planted".into(),
                dataset_id: dataset_id.into(),
                layer_ids: self.layers.clone(),
                dtype: "f32".into(),
                num_examples: n,
                seq_len: t,
                hidden_dim: d,
                creation_seed: seed,
            },
            layers,
            masks,
            labels,
        }
    }

    /// Independent train and test stores.
    pub fn train_test(&self, n_train: usize, n_test: usize) -> (ActivationStore, ActivationStore) {
        (self.store("planted-train", n_train, self.seed), self.store("planted-test", n_test, self.seed.wrapping_add(1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_only_at_planted_layer() {
        let p = PlantedSignal::new(2);
        let s = p.store("x", 400, 1);
        let mean_dim0 = |layer: usize, label: i64| {
            let a = s.layer(layer).unwrap();
            let (mut sum, mut cnt) = (0.0, 0.0);
            for i in 0..400 {
                if s.labels[i] != label {
                    continue;
                }
                for t in 0..p.max_len {
                    if s.masks[[i, t]] == 1 {
                        sum += f64::from(a[[i, t, 0]]);
                        cnt += 1.0;
                    }
                }
            }
            sum / cnt
        };
        assert!((mean_dim0(2, 1) - mean_dim0(2, 0) - 3.0).abs() < 0.3);
        assert!((mean_dim0(3, 1) - mean_dim0(3, 0)).abs() < 0.3);
        assert_eq!(s.labels.iter().filter(|&&l| l == 1).count(), 200);
    }
}
