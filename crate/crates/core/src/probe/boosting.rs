//! Second-order gradient boosting with a softmax objective. Two tree
//! growers: exact greedy level-wise search (variant A) and histogram-based
//! leaf-wise growth (variant B).

use super::argmax;
use super::tree::midpoint;
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn value(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, RegNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grower {
    /// Exact greedy split search, depth-wise growth.
    Exact,
    /// Quantile histograms, best-first leaf-wise growth.
    Histogram,
}

#[derive(Debug, Clone, Copy)]
pub struct BoostParams {
    pub grower: Grower,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub max_leaves: usize,
    pub min_data_in_leaf: usize,
    pub max_bins: usize,
}

impl BoostParams {
    pub fn exact(n_estimators: usize, max_depth: usize) -> Self {
        Self {
            grower: Grower::Exact,
            n_estimators,
            max_depth,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
            max_leaves: usize::MAX,
            min_data_in_leaf: 1,
            max_bins: 0,
        }
    }

    pub fn histogram(n_estimators: usize, max_depth: usize) -> Self {
        Self {
            grower: Grower::Histogram,
            n_estimators,
            max_depth,
            learning_rate: 0.1,
            lambda: 0.0,
            min_child_weight: 1e-3,
            max_leaves: 31,
            min_data_in_leaf: 20,
            max_bins: 63,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub grower: Grower,
    pub n_classes: usize,
    /// `rounds x classes` trees; leaf values already include the learning rate.
    pub rounds: Vec<Vec<RegTree>>,
}

impl BoostedTrees {
    pub fn fit(x: &Array2<f64>, y: &[usize], k: usize, params: BoostParams) -> Self {
        let n = x.nrows();
        let mut scores = Array2::<f64>::zeros((n, k));
        let bins = match params.grower {
            Grower::Histogram => Some(Bins::new(x, params.max_bins)),
            Grower::Exact => None,
        };
        let sorted = match params.grower {
            Grower::Exact => Some(presort(x)),
            Grower::Histogram => None,
        };
        // Hessian scale: exact search uses 2p(1-p), histograms use K/(K-1) p(1-p).
        let h_scale = match params.grower {
            Grower::Exact => 2.0,
            Grower::Histogram => k as f64 / (k as f64 - 1.0),
        };
        let mut rounds = Vec::with_capacity(params.n_estimators);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..params.n_estimators {
            let probs = softmax_rows(&scores);
            let mut trees = Vec::with_capacity(k);
            for c in 0..k {
                for i in 0..n {
                    let p = probs[[i, c]];
                    g[i] = p - f64::from(u8::from(y[i] == c));
                    h[i] = (h_scale * p * (1.0 - p)).max(1e-16);
                }
                let tree = match params.grower {
                    Grower::Exact => grow_exact(x, sorted.as_ref().expect("presorted"), &g, &h, &params),
                    Grower::Histogram => grow_histogram(bins.as_ref().expect("binned"), &g, &h, &params),
                };
                trees.push(tree);
            }
            for (c, tree) in trees.iter().enumerate() {
                for (i, row) in x.rows().into_iter().enumerate() {
                    scores[[i, c]] += tree.value(row);
                }
            }
            rounds.push(trees);
        }
        Self { grower: params.grower, n_classes: k, rounds }
    }

    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut s = vec![0.0; self.n_classes];
        for trees in &self.rounds {
            for (c, t) in trees.iter().enumerate() {
                s[c] += t.value(x);
            }
        }
        s
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> usize {
        argmax(&self.scores(x))
    }

    pub fn param_count(&self) -> usize {
        self.rounds
            .iter()
            .flatten()
            .flat_map(|t| &t.nodes)
            .map(|n| match n {
                RegNode::Leaf { .. } => 1,
                RegNode::Split { .. } => 2,
            })
            .sum()
    }
}

fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

fn presort(x: &Array2<f64>) -> Vec<Vec<usize>> {
    (0..x.ncols())
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.nrows()).collect();
            idx.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

fn leaf_weight(g: f64, h: f64, p: &BoostParams) -> f64 {
    -p.learning_rate * g / (h + p.lambda)
}

fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)
}

/// Level-wise growth; each level scans every presorted feature once and
/// evaluates all split points of all open nodes.
fn grow_exact(x: &Array2<f64>, sorted: &[Vec<usize>], g: &[f64], h: &[f64], p: &BoostParams) -> RegTree {
    let n = x.nrows();
    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    // open node ids and, per sample, the position of its node in `open`
    let mut open: Vec<usize> = vec![0];
    let mut slot_of: Vec<Option<usize>> = vec![Some(0); n];
    for depth in 0..=p.max_depth {
        if open.is_empty() {
            break;
        }
        let mut gs = vec![0.0; open.len()];
        let mut hs = vec![0.0; open.len()];
        for i in 0..n {
            if let Some(s) = slot_of[i] {
                gs[s] += g[i];
                hs[s] += h[i];
            }
        }
        // (gain, feature, threshold)
        let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; open.len()];
        if depth < p.max_depth {
            for (f, order) in sorted.iter().enumerate() {
                let mut gl = vec![0.0; open.len()];
                let mut hl = vec![0.0; open.len()];
                let mut last: Vec<Option<f64>> = vec![None; open.len()];
                for &i in order {
                    let Some(s) = slot_of[i] else { continue };
                    let v = x[[i, f]];
                    if let Some(prev) = last[s] {
                        if v != prev && hl[s] >= p.min_child_weight && hs[s] - hl[s] >= p.min_child_weight {
                            let gain = split_gain(gl[s], hl[s], gs[s], hs[s], p.lambda);
                            if gain > 1e-12 && best[s].is_none_or(|(bg, _, _)| gain > bg) {
                                best[s] = Some((gain, f, midpoint(prev, v)));
                            }
                        }
                    }
                    gl[s] += g[i];
                    hl[s] += h[i];
                    last[s] = Some(v);
                }
            }
        }
        let mut next_open = Vec::new();
        let mut remap: Vec<Option<(usize, usize, f64, usize)>> = vec![None; open.len()];
        for (s, &id) in open.iter().enumerate() {
            match best[s] {
                Some((_, feature, threshold)) => {
                    let left = nodes.len();
                    nodes.push(RegNode::Leaf { value: 0.0 });
                    nodes.push(RegNode::Leaf { value: 0.0 });
                    nodes[id] = RegNode::Split { feature, threshold, left, right: left + 1 };
                    remap[s] = Some((next_open.len(), feature, threshold, next_open.len() + 1));
                    next_open.push(left);
                    next_open.push(left + 1);
                }
                None => nodes[id] = RegNode::Leaf { value: leaf_weight(gs[s], hs[s], p) },
            }
        }
        for i in 0..n {
            if let Some(s) = slot_of[i] {
                slot_of[i] = remap[s].map(|(l, f, t, r)| if x[[i, f]] <= t { l } else { r });
            }
        }
        open = next_open;
    }
    RegTree { nodes }
}

/// Per-feature quantile bin edges; a value `v` falls in the first bin `b`
/// with `v <= edges[b]` (or the last bin past every edge).
struct Bins {
    edges: Vec<Vec<f64>>,
    /// Column-major bin index per sample.
    codes: Vec<Vec<u16>>,
}

impl Bins {
    fn new(x: &Array2<f64>, max_bins: usize) -> Self {
        let n = x.nrows();
        let mut edges = Vec::with_capacity(x.ncols());
        let mut codes = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mut vals: Vec<f64> = col.to_vec();
            vals.sort_by(f64::total_cmp);
            let mut uniq = vals.clone();
            uniq.dedup();
            let e: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| midpoint(w[0], w[1])).collect()
            } else {
                let mut e: Vec<f64> = (1..max_bins).map(|q| vals[q * n / max_bins]).collect();
                e.dedup();
                e.retain(|&v| v < uniq[uniq.len() - 1]);
                e
            };
            codes.push(col.iter().map(|&v| e.partition_point(|&b| b < v) as u16).collect());
            edges.push(e);
        }
        Self { edges, codes }
    }
}

struct LeafState {
    node: usize,
    idx: Vec<usize>,
    depth: usize,
    g: f64,
    h: f64,
    /// (gain, feature, bin)
    best: Option<(f64, usize, usize)>,
}

fn find_hist_split(leaf: &mut LeafState, bins: &Bins, g: &[f64], h: &[f64], p: &BoostParams) {
    leaf.best = None;
    if leaf.depth >= p.max_depth || leaf.idx.len() < 2 * p.min_data_in_leaf {
        return;
    }
    for (f, codes) in bins.codes.iter().enumerate() {
        let nb = bins.edges[f].len() + 1;
        if nb < 2 {
            continue;
        }
        let mut hg = vec![0.0; nb];
        let mut hh = vec![0.0; nb];
        let mut hc = vec![0usize; nb];
        for &i in &leaf.idx {
            let b = codes[i] as usize;
            hg[b] += g[i];
            hh[b] += h[i];
            hc[b] += 1;
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        for b in 0..nb - 1 {
            gl += hg[b];
            hl += hh[b];
            cl += hc[b];
            let cr = leaf.idx.len() - cl;
            if cl < p.min_data_in_leaf || cr < p.min_data_in_leaf {
                continue;
            }
            if hl < p.min_child_weight || leaf.h - hl < p.min_child_weight {
                continue;
            }
            let gain = split_gain(gl, hl, leaf.g, leaf.h, p.lambda);
            if gain > 1e-12 && leaf.best.is_none_or(|(bg, _, _)| gain > bg) {
                leaf.best = Some((gain, f, b));
            }
        }
    }
}

fn grow_histogram(bins: &Bins, g: &[f64], h: &[f64], p: &BoostParams) -> RegTree {
    let n = g.len();
    let mut nodes = vec![RegNode::Leaf { value: 0.0 }];
    let mut root = LeafState { node: 0, idx: (0..n).collect(), depth: 0, g: g.iter().sum(), h: h.iter().sum(), best: None };
    find_hist_split(&mut root, bins, g, h, p);
    let mut leaves = vec![root];
    while leaves.len() < p.max_leaves {
        let pick = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.map(|(gain, _, _)| (i, gain)))
            .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                Some((_, bg)) if bg >= gain => acc,
                _ => Some((i, gain)),
            });
        let Some((li, _)) = pick else { break };
        let leaf = leaves.swap_remove(li);
        let (_, feature, bin) = leaf.best.expect("picked leaf has a split");
        let threshold = bins.edges[feature][bin];
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) =
            leaf.idx.iter().partition(|&&i| bins.codes[feature][i] as usize <= bin);
        let left = nodes.len();
        nodes.push(RegNode::Leaf { value: 0.0 });
        nodes.push(RegNode::Leaf { value: 0.0 });
        nodes[leaf.node] = RegNode::Split { feature, threshold, left, right: left + 1 };
        for (node, idx) in [(left, l_idx), (left + 1, r_idx)] {
            let gs = idx.iter().map(|&i| g[i]).sum();
            let hs = idx.iter().map(|&i| h[i]).sum();
            let mut child = LeafState { node, idx, depth: leaf.depth + 1, g: gs, h: hs, best: None };
            find_hist_split(&mut child, bins, g, h, p);
            leaves.push(child);
        }
        // keep leaf order stable by node id so ties resolve deterministically
        leaves.sort_by_key(|l| l.node);
    }
    for l in &leaves {
        nodes[l.node] = RegNode::Leaf { value: leaf_weight(l.g, l.h, p) };
    }
    RegTree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(n: usize) -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0; n];
        for i in 0..n {
            let a = (i % 10) as f64 / 10.0;
            let b = ((i / 10) % 10) as f64 / 10.0;
            x[[i, 0]] = a;
            x[[i, 1]] = b;
            y[i] = usize::from((a < 0.3) != (b < 0.6));
        }
        (x, y)
    }

    #[test]
    fn both_growers_fit_a_checkerboard() {
        let (x, y) = checker(200);
        for params in [BoostParams::exact(30, 3), BoostParams::histogram(30, 3)] {
            let m = BoostedTrees::fit(&x, &y, 2, params);
            let correct = x.rows().into_iter().enumerate().filter(|(i, r)| m.predict(*r) == y[*i]).count();
            assert_eq!(correct, 200, "{:?}", params.grower);
        }
    }

    #[test]
    fn depth_and_leaf_limits_hold() {
        let (x, y) = checker(200);
        let a = BoostedTrees::fit(&x, &y, 2, BoostParams::exact(3, 2));
        assert!(a.rounds.iter().flatten().all(|t| t.num_leaves() <= 4));
        let mut p = BoostParams::histogram(3, 12);
        p.max_leaves = 3;
        let b = BoostedTrees::fit(&x, &y, 2, p);
        assert!(b.rounds.iter().flatten().all(|t| t.num_leaves() <= 3));
    }

    #[test]
    fn exact_first_leaf_is_newton_step() {
        // One round, depth 0: leaf = -lr * G / (H + lambda) at uniform probabilities.
        let (x, y) = checker(100);
        let m = BoostedTrees::fit(&x, &y, 2, BoostParams::exact(1, 0));
        let ones = y.iter().filter(|&&c| c == 1).count() as f64;
        let g1: f64 = (0..100).map(|i| 0.5 - f64::from(u8::from(y[i] == 1))).sum();
        let h: f64 = 100.0 * 2.0 * 0.25;
        let expect = -0.1 * g1 / (h + 1.0);
        assert!(ones > 0.0);
        assert!((m.rounds[0][1].value(x.row(0)) - expect).abs() < 1e-12);
    }
}
