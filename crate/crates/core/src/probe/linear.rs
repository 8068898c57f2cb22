//! Multinomial logistic regression and one-vs-rest linear SVM.

use super::optim::{lbfgs, softmax_xent};
use super::argmax;
use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `k x d` weights.
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn scores(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        self.weights.rows().into_iter().zip(&self.bias).map(|(w, b)| w.dot(&x) + b).collect()
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> usize {
        argmax(&self.scores(x))
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Mean cross-entropy plus `||W||^2 / (2 C n)`; writes the gradient into `g`.
/// Parameters are laid out as `k*d` row-major weights followed by `k` biases.
pub(crate) fn logistic_objective(x: &Array2<f64>, y: &[usize], k: usize, c: f64, p: &[f64], g: &mut [f64]) -> f64 {
    let (n, d) = x.dim();
    let nf = n as f64;
    let reg = 1.0 / (c * nf);
    g.iter_mut().for_each(|v| *v = 0.0);
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (i, row) in x.rows().into_iter().enumerate() {
        for (ci, zc) in z.iter_mut().enumerate() {
            let w = &p[ci * d..(ci + 1) * d];
            *zc = p[k * d + ci] + w.iter().zip(row.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        loss += softmax_xent(&mut z, y[i]);
        for (ci, &dz) in z.iter().enumerate() {
            let gw = &mut g[ci * d..(ci + 1) * d];
            for (gv, xv) in gw.iter_mut().zip(row.iter()) {
                *gv += dz * xv;
            }
            g[k * d + ci] += dz;
        }
    }
    let mut penalty = 0.0;
    for j in 0..k * d {
        g[j] = g[j] / nf + reg * p[j];
        penalty += p[j] * p[j];
    }
    for gb in &mut g[k * d..] {
        *gb /= nf;
    }
    loss / nf + 0.5 * reg * penalty
}

pub fn fit_logistic(x: &Array2<f64>, y: &[usize], k: usize, c: f64, max_iter: usize) -> LinearModel {
    let d = x.ncols();
    let mut theta = vec![0.0; k * d + k];
    lbfgs(&mut theta, |p, g| logistic_objective(x, y, k, c, p, g), max_iter, 1e-6);
    LinearModel {
        weights: Array2::from_shape_vec((k, d), theta[..k * d].to_vec()).expect("shape"),
        bias: theta[k * d..].to_vec(),
    }
}

/// One binary L2-regularized squared-hinge SVM solved in the dual by
/// coordinate descent. The bias is an extra constant feature.
fn fit_binary_svm(x: &Array2<f64>, sign: &[f64], c: f64, seed: u64, max_epochs: usize) -> (Vec<f64>, f64) {
    let (n, d) = x.dim();
    let diag = 0.5 / c;
    let qd: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r) + 1.0 + diag).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let row = x.row(i);
            let wx: f64 = w.iter().zip(row.iter()).map(|(a, b)| a * b).sum::<f64>() + b;
            let g = sign[i] * wx - 1.0 + diag * alpha[i];
            let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (alpha[i] - g / qd[i]).max(0.0);
                let delta = (alpha[i] - old) * sign[i];
                for (wv, xv) in w.iter_mut().zip(row.iter()) {
                    *wv += delta * xv;
                }
                b += delta;
            }
        }
        if pg_max - pg_min < 1e-4 {
            break;
        }
    }
    (w, b)
}

/// One-vs-rest over every class, including the binary case.
pub fn fit_linear_svm(x: &Array2<f64>, y: &[usize], k: usize, c: f64, seed: u64) -> LinearModel {
    let d = x.ncols();
    let mut weights = Array2::zeros((k, d));
    let mut bias = vec![0.0; k];
    for class in 0..k {
        let sign: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let (w, b) = fit_binary_svm(x, &sign, c, seed, 1000);
        weights.row_mut(class).assign(&ArrayView1::from(&w));
        bias[class] = b;
    }
    LinearModel { weights, bias }
}
