//! Stationarity diagnostics for the regression recursion
//! `Z_t = c + sum_i A_i phi(Z_{t-i}) + eps_t`.
//!
//! Two numbers are reported. The spectral radius of the companion matrix of
//! the system linearised at the origin, and the mean-contraction margin
//! `sum_i ||A_i||_2 * L`, where `L = sqrt(sum_f Lip(f)^2)` bounds the
//! Lipschitz constant of the stacked feature map. A margin below one makes
//! the recursion a contracting iterated random function system, which is a
//! sufficient (not necessary) condition for a unique stationary law.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BasisSpec, CoeffBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ContractiveCertified,
    LinearStable,
    Uncertified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub spectral_radius: f64,
    /// `None` when a basis function has no Lipschitz constant.
    pub lipschitz_margin: Option<f64>,
    pub verdict: Verdict,
    pub note: String,
}

impl StabilityReport {
    /// Lag-buffer steps after which a coupled pair is guaranteed to be at
    /// most half as far apart. `None` unless the margin certifies contraction.
    pub fn halving_steps(&self, lag_order: usize) -> Option<usize> {
        let m = self.lipschitz_margin?;
        if self.verdict != Verdict::ContractiveCertified {
            return None;
        }
        if m == 0.0 {
            return Some(lag_order);
        }
        let k = (0.5f64.ln() / m.ln()).ceil().max(1.0) as usize;
        Some(k * lag_order)
    }
}

/// Linearised 2x2 lag blocks `sum_f f'(0) A_i[:, f]`.
pub fn linearised_blocks(basis: &BasisSpec, coeffs: &[CoeffBlock]) -> Vec<DMatrix<f64>> {
    coeffs
        .iter()
        .map(|block| {
            let a = block.to_matrix();
            let mut out = DMatrix::zeros(2, 2);
            for (k, f) in basis.functions.iter().enumerate() {
                out += a.columns(2 * k, 2) * f.slope_at_zero();
            }
            out
        })
        .collect()
}

pub fn companion(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = blocks.len();
    let mut c = DMatrix::zeros(2 * p, 2 * p);
    for (i, b) in blocks.iter().enumerate() {
        c.view_mut((0, 2 * i), (2, 2)).copy_from(b);
    }
    for i in 1..p {
        c.view_mut((2 * i, 2 * (i - 1)), (2, 2)).fill_with_identity();
    }
    c
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn diagnose(basis: &BasisSpec, coeffs: &[CoeffBlock]) -> StabilityReport {
    let rho = spectral_radius(&companion(&linearised_blocks(basis, coeffs)));
    let lip: Option<f64> = basis
        .functions
        .iter()
        .map(|f| f.lipschitz().map(|l| l * l))
        .sum::<Option<f64>>()
        .map(f64::sqrt);
    let margin = lip.map(|l| {
        coeffs
            .iter()
            .map(|b| b.to_matrix().singular_values().amax())
            .sum::<f64>()
            * l
    });
    let (verdict, note) = match margin {
        None => (
            Verdict::Uncertified,
            "sign basis is bounded but not Lipschitz; no contraction certificate".to_string(),
        ),
        Some(m) if m < 1.0 => (
            Verdict::ContractiveCertified,
            "mean-contraction margin below 1 (sufficient condition for a unique stationary law)".to_string(),
        ),
        Some(_) if rho < 1.0 => (
            Verdict::LinearStable,
            "linearised system is stable; contraction margin is not below 1".to_string(),
        ),
        Some(_) => (
            Verdict::Uncertified,
            "linearised companion matrix has spectral radius of at least 1".to_string(),
        ),
    };
    StabilityReport {
        spectral_radius: rho,
        lipschitz_margin: margin,
        verdict,
        note,
    }
}
