//! CART classification trees (gini) and bagged random forests.

use super::argmax;
use ndarray::{Array2, ArrayView1};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { dist: Vec<f64> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> Self {
        Self { max_depth, min_samples_split: 2, min_samples_leaf: 1, max_features: None }
    }
}

/// Weighted gini impurity `n * gini` of a count vector.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

struct Builder<'a> {
    x: &'a Array2<f64>,
    y: &'a [usize],
    k: usize,
    params: TreeParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let mut dist = vec![0.0; self.k];
        for &i in idx {
            dist[self.y[i]] += 1.0;
        }
        let n = idx.len().max(1) as f64;
        dist.iter_mut().for_each(|v| *v /= n);
        Node::Leaf { dist }
    }

    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64, f64)> {
        let d = self.x.ncols();
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < d => {
                let mut f = rand::seq::index::sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let m = idx.len();
        let mut total = vec![0usize; self.k];
        for &i in idx {
            total[self.y[i]] += 1;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.k];
            let mut right = total.clone();
            for pos in 0..m - 1 {
                let c = self.y[order[pos]];
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (self.x[[order[pos], f]], self.x[[order[pos + 1], f]]);
                if a == b {
                    continue;
                }
                let nl = pos + 1;
                if nl < self.params.min_samples_leaf || m - nl < self.params.min_samples_leaf {
                    continue;
                }
                let imp = weighted_gini(&left, nl) + weighted_gini(&right, m - nl);
                if best.is_none_or(|(_, _, bi)| imp < bi) {
                    best = Some((f, midpoint(a, b), imp));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { dist: Vec::new() });
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        let split = if pure || depth >= self.params.max_depth || idx.len() < self.params.min_samples_split {
            None
        } else {
            self.best_split(&idx, rng)
        };
        self.nodes[slot] = match split {
            None => self.leaf(&idx),
            Some((feature, threshold, _)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
                let left = self.grow(l, depth + 1, rng);
                let right = self.grow(r, depth + 1, rng);
                Node::Split { feature, threshold, left, right }
            }
        };
        slot
    }
}

impl ClassTree {
    pub fn fit(x: &Array2<f64>, y: &[usize], k: usize, idx: Vec<usize>, params: TreeParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { x, y, k, params, nodes: Vec::new() };
        b.grow(idx, 0, &mut rng);
        Self { nodes: b.nodes }
    }

    pub fn distribution(&self, x: ArrayView1<'_, f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { dist } => return dist,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> usize {
        argmax(self.distribution(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn param_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { dist } => dist.len(),
                Node::Split { .. } => 2,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<ClassTree>,
}

impl RandomForest {
    /// Bootstrap-sampled trees with `floor(sqrt(d))` candidate features per split.
    pub fn fit(x: &Array2<f64>, y: &[usize], k: usize, n_estimators: usize, max_depth: usize, seed: u64) -> Self {
        let (n, d) = x.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..n_estimators).map(|_| rng.next_u64()).collect();
        let params = TreeParams {
            max_features: Some(((d as f64).sqrt().floor() as usize).max(1)),
            ..TreeParams::with_depth(max_depth)
        };
        let trees = seeds
            .par_iter()
            .map(|&s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                ClassTree::fit(x, y, k, idx, params, r.next_u64())
            })
            .collect();
        Self { trees }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut acc = vec![0.0; self.trees[0].distribution(x).len()];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.distribution(x)) {
                *a += v;
            }
        }
        argmax(&acc)
    }

    pub fn param_count(&self) -> usize {
        self.trees.iter().map(ClassTree::param_count).sum()
    }
}
