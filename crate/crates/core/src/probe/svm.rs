//! Kernel SVM trained with SMO (second-order working set selection).
//! Binary problems use one machine; more classes use one-vs-rest.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Poly { gamma: f64, degree: i32, coef0: f64 },
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Poly { gamma, degree, coef0 } => (gamma * a.dot(&b) + coef0).powi(degree),
        }
    }

    /// `1 / (d * Var(X))` over all entries, or 1 when the data is constant.
    pub fn scale_gamma(x: &Array2<f64>) -> f64 {
        let n = x.len().max(1) as f64;
        let mean = x.sum() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var > 0.0 {
            1.0 / (x.ncols() as f64 * var)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub support: Array2<f64>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl BinaryMachine {
    pub fn decision(&self, kernel: &Kernel, x: ArrayView1<'_, f64>) -> f64 {
        self.support.rows().into_iter().zip(&self.coef).map(|(s, c)| c * kernel.eval(s, x)).sum::<f64>() - self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSvm {
    pub kernel: Kernel,
    pub n_classes: usize,
    /// One machine (class 1 positive) for two classes, else one per class.
    pub machines: Vec<BinaryMachine>,
}

const TAU: f64 = 1e-12;

/// Kernel rows computed on demand with a bounded cache.
struct KernelCache<'a> {
    x: &'a Array2<f64>,
    kernel: Kernel,
    rows: HashMap<usize, Vec<f64>>,
    order: std::collections::VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a Array2<f64>, kernel: Kernel) -> Self {
        let n = x.nrows().max(1);
        let capacity = ((64usize << 20) / (8 * n)).clamp(2, n.max(2));
        Self { x, kernel, rows: HashMap::new(), order: Default::default(), capacity }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows.remove(&old);
                }
            }
            let xi = self.x.row(i);
            let r = self.x.rows().into_iter().map(|xj| self.kernel.eval(xi, xj)).collect();
            self.rows.insert(i, r);
            self.order.push_back(i);
        }
        &self.rows[&i]
    }
}

fn solve_binary(x: &Array2<f64>, y: &[f64], c: f64, kernel: Kernel, eps: f64) -> BinaryMachine {
    let n = x.nrows();
    let qd: Vec<f64> = (0..n).map(|i| kernel.eval(x.row(i), x.row(i))).collect();
    let mut cache = KernelCache::new(x, kernel);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;
    let max_iter = (1000 * n).max(10_000);
    for _ in 0..max_iter {
        // select i: maximal violating index from I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !is_upper(alpha[t]) } else { !is_lower(alpha[t]) };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let ki = cache.row(i).to_vec();
        // select j: second-order gain from I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            let diff = gmax + yg;
            if diff > 0.0 {
                let quad = qd[i] + qd[t] - 2.0 * ki[t];
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel else { break };
        if gmax + gmax2 < eps {
            break;
        }
        let kj = cache.row(j).to_vec();
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * ki[j];
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb, mut sum_free, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let mut support = Array2::zeros((sv.len(), x.ncols()));
    for (r, &t) in sv.iter().enumerate() {
        support.row_mut(r).assign(&x.row(t));
    }
    BinaryMachine { support, coef: sv.iter().map(|&t| alpha[t] * y[t]).collect(), rho }
}

impl KernelSvm {
    pub fn fit(x: &Array2<f64>, labels: &[usize], k: usize, c: f64, kernel: Kernel) -> Self {
        let targets: Vec<usize> = if k == 2 { vec![1] } else { (0..k).collect() };
        let machines = targets
            .iter()
            .map(|&cls| {
                let y: Vec<f64> = labels.iter().map(|&l| if l == cls { 1.0 } else { -1.0 }).collect();
                solve_binary(x, &y, c, kernel, 1e-3)
            })
            .collect();
        Self { kernel, n_classes: k, machines }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> usize {
        if self.n_classes == 2 {
            return usize::from(self.machines[0].decision(&self.kernel, x) > 0.0);
        }
        let scores: Vec<f64> = self.machines.iter().map(|m| m.decision(&self.kernel, x)).collect();
        super::argmax(&scores)
    }

    pub fn param_count(&self) -> usize {
        self.machines.iter().map(|m| m.support.len() + m.coef.len() + 1).sum()
    }
}
