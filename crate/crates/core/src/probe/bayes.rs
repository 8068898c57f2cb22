use super::argmax;
use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

/// Gaussian naive Bayes with variance smoothing relative to the largest
/// feature variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub means: Array2<f64>,
    pub vars: Array2<f64>,
    pub log_prior: Vec<f64>,
}

impl GaussianNb {
    pub fn fit(x: &Array2<f64>, y: &[usize], k: usize, var_smoothing: f64) -> Self {
        let (n, d) = x.dim();
        let mut means = Array2::zeros((k, d));
        let mut vars = Array2::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, row) in x.rows().into_iter().enumerate() {
            counts[y[i]] += 1;
            let mut m = means.row_mut(y[i]);
            m += &row;
        }
        for c in 0..k {
            let cnt = counts[c].max(1) as f64;
            means.row_mut(c).mapv_inplace(|v| v / cnt);
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            let c = y[i];
            for j in 0..d {
                let diff = row[j] - means[[c, j]];
                vars[[c, j]] += diff * diff;
            }
        }
        let mut max_var = 0.0f64;
        for j in 0..d {
            let col = x.column(j);
            let m = col.sum() / n as f64;
            max_var = max_var.max(col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64);
        }
        let eps = var_smoothing * max_var.max(f64::MIN_POSITIVE);
        for c in 0..k {
            let cnt = counts[c].max(1) as f64;
            vars.row_mut(c).mapv_inplace(|v| v / cnt + eps);
        }
        let log_prior = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
        Self { means, vars, log_prior }
    }

    pub fn log_joint(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        (0..self.log_prior.len())
            .map(|c| {
                let mut s = self.log_prior[c];
                for j in 0..x.len() {
                    let v = self.vars[[c, j]];
                    let diff = x[j] - self.means[[c, j]];
                    s -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + diff * diff / v);
                }
                s
            })
            .collect()
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> usize {
        argmax(&self.log_joint(x))
    }

    pub fn param_count(&self) -> usize {
        self.means.len() + self.vars.len() + self.log_prior.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matches_hand_computed_posterior() {
        let x = array![[0.0], [2.0], [10.0], [12.0]];
        let y = [0, 0, 1, 1];
        let nb = GaussianNb::fit(&x, &y, 2, 0.0);
        assert_eq!(nb.means, array![[1.0], [11.0]]);
        assert_eq!(nb.vars, array![[1.0], [1.0]]);
        let lj = nb.log_joint(array![1.0].view());
        let expect0 = 0.5f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lj[0] - expect0).abs() < 1e-12);
        assert_eq!(nb.predict(array![5.9].view()), 0);
        assert_eq!(nb.predict(array![6.1].view()), 1);
    }
}
