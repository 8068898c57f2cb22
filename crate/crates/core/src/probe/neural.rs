//! Small neural probes trained with Adam on softmax cross-entropy. The
//! sequence models read a pooled vector as a length-d, one-channel sequence.

use super::argmax;
use super::optim::{clip_norm, softmax_xent, Adam};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    Mlp { hidden: usize },
    Cnn { filters: usize },
    BiLstm { hidden: usize },
}

const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub arch: Arch,
    pub input_dim: usize,
    pub n_classes: usize,
    pub params: Vec<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Arch {
    pub fn num_params(self, d: usize, k: usize) -> usize {
        match self {
            Arch::Mlp { hidden } => hidden * d + hidden + k * hidden + k,
            Arch::Cnn { filters } => filters * KERNEL + filters + k * filters + k,
            Arch::BiLstm { hidden } => 2 * (4 * hidden + 4 * hidden * hidden + 4 * hidden) + k * 2 * hidden + k,
        }
    }

    /// Offsets of weight matrices subject to L2 (biases are excluded).
    fn weight_ranges(self, d: usize, k: usize) -> Vec<std::ops::Range<usize>> {
        match self {
            Arch::Mlp { hidden: h } => vec![0..h * d, h * d + h..h * d + h + k * h],
            Arch::Cnn { filters: f } => vec![0..f * KERNEL, f * KERNEL + f..f * KERNEL + f + k * f],
            Arch::BiLstm { hidden: h } => {
                let dir = 8 * h + 4 * h * h;
                vec![0..4 * h + 4 * h * h, dir..dir + 4 * h + 4 * h * h, 2 * dir..2 * dir + 2 * h * k]
            }
        }
    }

    fn init(self, d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.num_params(d, k)];
        let mut fill = |range: std::ops::Range<usize>, bound: f64, p: &mut Vec<f64>| {
            for v in &mut p[range] {
                *v = rng.random_range(-bound..bound);
            }
        };
        match self {
            Arch::Mlp { hidden: h } => {
                fill(0..h * d, (6.0 / d as f64).sqrt(), &mut p);
                let o = h * d + h;
                fill(o..o + k * h, (6.0 / (h + k) as f64).sqrt(), &mut p);
            }
            Arch::Cnn { filters: f } => {
                fill(0..f * KERNEL, (6.0 / KERNEL as f64).sqrt(), &mut p);
                let o = f * KERNEL + f;
                fill(o..o + k * f, (6.0 / (f + k) as f64).sqrt(), &mut p);
            }
            Arch::BiLstm { hidden: h } => {
                let dir = 8 * h + 4 * h * h;
                let bound = 1.0 / (h as f64).sqrt();
                for s in [0, dir] {
                    fill(s..s + 4 * h + 4 * h * h, bound, &mut p);
                    // forget-gate bias starts at 1
                    let b = s + 4 * h + 4 * h * h;
                    for v in &mut p[b + h..b + 2 * h] {
                        *v = 1.0;
                    }
                }
                fill(2 * dir..2 * dir + 2 * h * k, (6.0 / (2 * h + k) as f64).sqrt(), &mut p);
            }
        }
        p
    }
}

/// Forward pass; when `grad` is given, backpropagates the cross-entropy of
/// label `y` into it (accumulating) and returns the loss.
fn forward(arch: Arch, d: usize, k: usize, p: &[f64], x: &[f64], y: usize, grad: Option<&mut [f64]>) -> (Vec<f64>, f64) {
    match arch {
        Arch::Mlp { hidden } => mlp(hidden, d, k, p, x, y, grad),
        Arch::Cnn { filters } => cnn(filters, d, k, p, x, y, grad),
        Arch::BiLstm { hidden } => bilstm(hidden, d, k, p, x, y, grad),
    }
}

fn dense_head(p: &[f64], k: usize, inp: &[f64]) -> Vec<f64> {
    let m = inp.len();
    (0..k).map(|c| p[k * m + c] + (0..m).map(|j| p[c * m + j] * inp[j]).sum::<f64>()).collect()
}

/// Backprop through the dense head at `p`; returns d(input).
fn dense_head_backward(p: &[f64], g: &mut [f64], k: usize, inp: &[f64], dz: &[f64]) -> Vec<f64> {
    let m = inp.len();
    let mut din = vec![0.0; m];
    for c in 0..k {
        for j in 0..m {
            g[c * m + j] += dz[c] * inp[j];
            din[j] += dz[c] * p[c * m + j];
        }
        g[k * m + c] += dz[c];
    }
    din
}

fn finish(logits: Vec<f64>, y: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let mut dz = logits.clone();
    let loss = softmax_xent(&mut dz, y);
    (logits, loss, dz)
}

fn mlp(h: usize, d: usize, k: usize, p: &[f64], x: &[f64], y: usize, grad: Option<&mut [f64]>) -> (Vec<f64>, f64) {
    let (w1, rest) = p.split_at(h * d);
    let (b1, head) = rest.split_at(h);
    let z1: Vec<f64> = (0..h).map(|j| b1[j] + (0..d).map(|i| w1[j * d + i] * x[i]).sum::<f64>()).collect();
    let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
    let (logits, loss, dz) = finish(dense_head(head, k, &a1), y);
    if let Some(g) = grad {
        let (gw1, grest) = g.split_at_mut(h * d);
        let (gb1, ghead) = grest.split_at_mut(h);
        let da = dense_head_backward(head, ghead, k, &a1, &dz);
        for j in 0..h {
            if z1[j] > 0.0 {
                gb1[j] += da[j];
                for i in 0..d {
                    gw1[j * d + i] += da[j] * x[i];
                }
            }
        }
    }
    (logits, loss)
}

fn cnn(f: usize, d: usize, k: usize, p: &[f64], x: &[f64], y: usize, grad: Option<&mut [f64]>) -> (Vec<f64>, f64) {
    let (wc, rest) = p.split_at(f * KERNEL);
    let (bc, head) = rest.split_at(f);
    let at = |t: isize| if t < 0 || t >= d as isize { 0.0 } else { x[t as usize] };
    let mut pooled = vec![0.0; f];
    let mut arg = vec![0usize; f];
    for fi in 0..f {
        let mut best = f64::NEG_INFINITY;
        for t in 0..d {
            let mut v = bc[fi];
            for j in 0..KERNEL {
                v += wc[fi * KERNEL + j] * at(t as isize + j as isize - 1);
            }
            let v = v.max(0.0);
            if v > best {
                best = v;
                arg[fi] = t;
            }
        }
        pooled[fi] = best;
    }
    let (logits, loss, dz) = finish(dense_head(head, k, &pooled), y);
    if let Some(g) = grad {
        let (gwc, grest) = g.split_at_mut(f * KERNEL);
        let (gbc, ghead) = grest.split_at_mut(f);
        let dp = dense_head_backward(head, ghead, k, &pooled, &dz);
        for fi in 0..f {
            if pooled[fi] > 0.0 {
                let t = arg[fi] as isize;
                gbc[fi] += dp[fi];
                for j in 0..KERNEL {
                    gwc[fi * KERNEL + j] += dp[fi] * at(t + j as isize - 1);
                }
            }
        }
    }
    (logits, loss)
}

struct LstmTrace {
    gates: Vec<[Vec<f64>; 4]>,
    cs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
}

/// One direction over `xs`; parameters are `wx[4h]`, `wh[4h x h]`, `b[4h]`
/// with gate order input, forget, cell, output.
fn lstm_run(h: usize, p: &[f64], xs: &[f64]) -> LstmTrace {
    let (wx, rest) = p.split_at(4 * h);
    let (wh, b) = rest.split_at(4 * h * h);
    let mut tr = LstmTrace { gates: Vec::with_capacity(xs.len()), cs: vec![vec![0.0; h]], hs: vec![vec![0.0; h]] };
    for &xt in xs {
        let hp = tr.hs.last().expect("initial state");
        let cp = tr.cs.last().expect("initial state");
        let mut a = vec![0.0; 4 * h];
        for r in 0..4 * h {
            a[r] = b[r] + wx[r] * xt + (0..h).map(|j| wh[r * h + j] * hp[j]).sum::<f64>();
        }
        let i: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
        let fg: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = a[2 * h..3 * h].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = a[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..h).map(|j| fg[j] * cp[j] + i[j] * g[j]).collect();
        let hn: Vec<f64> = (0..h).map(|j| o[j] * c[j].tanh()).collect();
        tr.gates.push([i, fg, g, o]);
        tr.cs.push(c);
        tr.hs.push(hn);
    }
    tr
}

fn lstm_backward(h: usize, p: &[f64], g: &mut [f64], xs: &[f64], tr: &LstmTrace, dh_last: &[f64]) {
    let wh = &p[4 * h..4 * h + 4 * h * h];
    let (gwx, grest) = g.split_at_mut(4 * h);
    let (gwh, gb) = grest.split_at_mut(4 * h * h);
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for t in (0..xs.len()).rev() {
        let [i, fg, gg, o] = &tr.gates[t];
        let c = &tr.cs[t + 1];
        let cp = &tr.cs[t];
        let hp = &tr.hs[t];
        for j in 0..h {
            let tc = c[j].tanh();
            dc[j] += dh[j] * o[j] * (1.0 - tc * tc);
            da[j] = dc[j] * gg[j] * i[j] * (1.0 - i[j]);
            da[h + j] = dc[j] * cp[j] * fg[j] * (1.0 - fg[j]);
            da[2 * h + j] = dc[j] * i[j] * (1.0 - gg[j] * gg[j]);
            da[3 * h + j] = dh[j] * tc * o[j] * (1.0 - o[j]);
            dc[j] *= fg[j];
        }
        let mut dh_prev = vec![0.0; h];
        for r in 0..4 * h {
            gwx[r] += da[r] * xs[t];
            gb[r] += da[r];
            for j in 0..h {
                gwh[r * h + j] += da[r] * hp[j];
                dh_prev[j] += wh[r * h + j] * da[r];
            }
        }
        dh = dh_prev;
    }
}

fn bilstm(h: usize, d: usize, k: usize, p: &[f64], x: &[f64], y: usize, grad: Option<&mut [f64]>) -> (Vec<f64>, f64) {
    let dir = 8 * h + 4 * h * h;
    let rev: Vec<f64> = x[..d].iter().rev().copied().collect();
    let fw = lstm_run(h, &p[..dir], x);
    let bw = lstm_run(h, &p[dir..2 * dir], &rev);
    let mut feat = fw.hs[d].clone();
    feat.extend_from_slice(&bw.hs[d]);
    let head = &p[2 * dir..];
    let (logits, loss, dz) = finish(dense_head(head, k, &feat), y);
    if let Some(g) = grad {
        let (gdirs, ghead) = g.split_at_mut(2 * dir);
        let df = dense_head_backward(head, ghead, k, &feat, &dz);
        let (gf, gb) = gdirs.split_at_mut(dir);
        lstm_backward(h, &p[..dir], gf, x, &fw, &df[..h]);
        lstm_backward(h, &p[dir..2 * dir], gb, &rev, &bw, &df[h..]);
    }
    (logits, loss)
}

impl NeuralNet {
    pub fn fit(x: &Array2<f64>, y: &[usize], k: usize, arch: Arch, tp: TrainParams, seed: u64) -> Self {
        let (n, d) = x.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = arch.init(d, k, &mut rng);
        let mut opt = Adam::new(params.len(), tp.lr);
        let decay = arch.weight_ranges(d, k);
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad = vec![0.0; params.len()];
        for _ in 0..tp.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(tp.batch_size.max(1)) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    forward(arch, d, k, &params, &rows[i], y[i], Some(&mut grad));
                }
                let bn = batch.len() as f64;
                grad.iter_mut().for_each(|g| *g /= bn);
                for r in &decay {
                    for j in r.clone() {
                        grad[j] += tp.l2 * params[j];
                    }
                }
                if tp.clip > 0.0 {
                    clip_norm(&mut grad, tp.clip);
                }
                opt.step(&mut params, &grad);
            }
        }
        Self { arch, input_dim: d, n_classes: k, params }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        forward(self.arch, self.input_dim, self.n_classes, &self.params, x, 0, None).0
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_gradient(arch: Arch, d: usize, k: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = arch.init(d, k, &mut rng);
        // push CNN/MLP pre-activations away from the ReLU kink
        p.iter_mut().enumerate().for_each(|(i, v)| *v += 0.01 * (i as f64).sin());
        let x: Vec<f64> = (0..d).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.6 + 0.1).collect();
        let y = k - 1;
        let mut g = vec![0.0; p.len()];
        forward(arch, d, k, &p, &x, y, Some(&mut g));
        let eps = 1e-6;
        for i in 0..p.len() {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi[i] += eps;
            lo[i] -= eps;
            let fd = (forward(arch, d, k, &hi, &x, y, None).1 - forward(arch, d, k, &lo, &x, y, None).1) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{arch:?} param {i}: fd {fd} vs analytic {}", g[i]);
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        check_gradient(Arch::Mlp { hidden: 5 }, 4, 3);
    }

    #[test]
    fn cnn_gradient_matches_finite_differences() {
        check_gradient(Arch::Cnn { filters: 4 }, 6, 3);
    }

    #[test]
    fn bilstm_gradient_matches_finite_differences() {
        check_gradient(Arch::BiLstm { hidden: 3 }, 5, 2);
    }

    #[test]
    fn param_counts_match_layout() {
        for (arch, d, k) in [(Arch::Mlp { hidden: 64 }, 10, 6), (Arch::Cnn { filters: 8 }, 10, 2), (Arch::BiLstm { hidden: 8 }, 10, 6)] {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            assert_eq!(arch.init(d, k, &mut rng).len(), arch.num_params(d, k));
        }
        assert_eq!(Arch::Mlp { hidden: 64 }.num_params(10, 2), 64 * 10 + 64 + 2 * 64 + 2);
    }

    #[test]
    fn mlp_learns_xor() {
        let mut x = Array2::zeros((100, 2));
        let mut y = vec![0; 100];
        for i in 0..100 {
            let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
            x[[i, 0]] = 2.0 * a - 1.0;
            x[[i, 1]] = 2.0 * b - 1.0;
            y[i] = usize::from(a != b);
        }
        let tp = TrainParams { epochs: 200, batch_size: 32, lr: 1e-2, l2: 1e-4, clip: 0.0 };
        let m = NeuralNet::fit(&x, &y, 2, Arch::Mlp { hidden: 16 }, tp, 42);
        let correct = (0..100).filter(|&i| m.predict(&x.row(i).to_vec()) == y[i]).count();
        assert_eq!(correct, 100);
    }
}
