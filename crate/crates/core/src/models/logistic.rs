use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `P(ask event | lags) = sigmoid(bias + weights . features)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideModel {
    pub bias: f64,
    pub weights: Vec<f64>,
}

const PENALTY: f64 = 1e-3;
const MAX_ITER: usize = 50;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl SideModel {
    pub fn constant(p_ask: f64, n_features: usize) -> Self {
        let p = p_ask.clamp(1e-9, 1.0 - 1e-9);
        SideModel {
            bias: (p / (1.0 - p)).ln(),
            weights: vec![0.0; n_features],
        }
    }

    #[inline]
    pub fn prob_ask(&self, features: &[f64]) -> f64 {
        let eta = self.bias + self.weights.iter().zip(features).map(|(w, f)| w * f).sum::<f64>();
        sigmoid(eta)
    }

    /// Penalised Newton fit on standardised features, mapped back to raw scale.
    pub fn fit(rows: &[Vec<f64>], is_ask: &[bool]) -> SideModel {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let frac = is_ask.iter().filter(|&&a| a).count() as f64 / n.max(1) as f64;
        if n == 0 || frac <= 0.0 || frac >= 1.0 {
            return SideModel::constant(frac, k);
        }
        let mean: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let sd: Vec<f64> = (0..k)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { (rows[i][j - 1] - mean[j - 1]) / sd[j - 1] });
        let target = DVector::from_fn(n, |i, _| if is_ask[i] { 1.0 } else { 0.0 });

        let mut beta = DVector::zeros(k + 1);
        beta[0] = (frac / (1.0 - frac)).ln();
        for _ in 0..MAX_ITER {
            let eta = &z * &beta;
            let mu = eta.map(sigmoid);
            let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
            let mut grad = z.tr_mul(&(&target - &mu));
            let mut hess = z.tr_mul(&DMatrix::from_fn(n, k + 1, |i, j| z[(i, j)] * w[i]));
            for j in 1..=k {
                grad[j] -= PENALTY * n as f64 * beta[j];
                hess[(j, j)] += PENALTY * n as f64;
            }
            let Some(chol) = Cholesky::new(hess) else { break };
            let step = chol.solve(&grad);
            beta += &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        let weights: Vec<f64> = (0..k).map(|j| beta[j + 1] / sd[j]).collect();
        let bias = beta[0] - (0..k).map(|j| weights[j] * mean[j]).sum::<f64>();
        SideModel { bias, weights }
    }
}
