use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

/// Brute-force k-nearest-neighbours on squared Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub x: Array2<f64>,
    pub y: Vec<usize>,
}

impl Knn {
    pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, k: usize) -> Self {
        Self { k: k.min(y.len()).max(1), n_classes, x: x.clone(), y: y.to_vec() }
    }

    /// Majority vote among the `k` nearest rows (distance ties broken by row
    /// index); a tied vote goes to the class of the nearest voter.
    pub fn predict(&self, q: ArrayView1<'_, f64>) -> usize {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(dist.len());
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &mut dist[..k];
        nearest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in nearest.iter() {
            votes[self.y[i]] += 1;
        }
        let top = *votes.iter().max().unwrap_or(&0);
        nearest.iter().map(|&(_, i)| self.y[i]).find(|&c| votes[c] == top).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.x.len() + self.y.len()
    }
}
