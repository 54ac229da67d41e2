use serde::{Deserialize, Serialize};

use super::SimError;
use crate::matrixcore::{DenseVector, SymMatrix};

/// Per-state RMSE √(mean_k (truth_k − estimate_k)²).
pub fn rmse(truth: &[DenseVector], estimate: &[DenseVector]) -> Result<Vec<f64>, SimError> {
    if truth.len() != estimate.len() {
        return Err(SimError::Dimension(format!("{} truth vs {} estimate entries", truth.len(), estimate.len())));
    }
    let Some(first) = truth.first() else {
        return Ok(vec![]);
    };
    let n = first.len();
    let mut acc = vec![0.0; n];
    for (k, (x, xh)) in truth.iter().zip(estimate).enumerate() {
        if x.len() != n || xh.len() != n {
            return Err(SimError::Dimension(format!("entry {k} has mismatched length")));
        }
        for i in 0..n {
            acc[i] += (x[i] - xh[i]).powi(2);
        }
    }
    Ok(acc.into_iter().map(|s| (s / truth.len() as f64).sqrt()).collect())
}

/// Finite-horizon H∞ summary. The attenuation bound holds over an infinite
/// horizon, so `hinf_satisfied` is a necessary condition only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: Vec<f64>,
    pub e_l2_sq: f64,
    pub w_l2_sq: f64,
    pub e0_sq: f64,
    pub mu: f64,
    pub nu: f64,
    pub hinf_lhs: f64,
    pub hinf_rhs: f64,
    pub hinf_tol: f64,
    pub hinf_satisfied: bool,
    /// max_k 𝓦_k = V(e_{k+1}) − V(e_k) + ‖e_k‖² − μ‖ω_k‖², when P was given.
    pub max_step_supply: Option<f64>,
    pub check: String,
}

/// `e` holds the error at steps 0..=K (or 0..K) and `w` the disturbance at
/// steps 0..K; sums run over k < K.
pub fn hinf_check(e: &[DenseVector], w: &[DenseVector], mu: f64, nu: f64, p: Option<&SymMatrix>) -> MetricsReport {
    let k = w.len().min(e.len());
    let e_l2_sq: f64 = e[..k].iter().map(|v| v.norm_squared()).sum();
    let w_l2_sq: f64 = w[..k].iter().map(|v| v.norm_squared()).sum();
    let e0_sq = e.first().map(|v| v.norm_squared()).unwrap_or(0.0);
    let rhs = mu * w_l2_sq + nu * e0_sq;
    let tol = 1e-9 + 1e-6 * rhs;
    let max_step_supply = p.map(|p| {
        let v = |x: &DenseVector| (x.transpose() * p.as_dense() * x)[(0, 0)];
        (0..k.min(e.len().saturating_sub(1)))
            .map(|i| v(&e[i + 1]) - v(&e[i]) + e[i].norm_squared() - mu * w[i].norm_squared())
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let zeros = vec![DenseVector::zeros(e.first().map_or(0, |v| v.len())); e.len()];
    MetricsReport {
        rmse: rmse(e, &zeros).unwrap_or_default(),
        e_l2_sq,
        w_l2_sq,
        e0_sq,
        mu,
        nu,
        hinf_lhs: e_l2_sq,
        hinf_rhs: rhs,
        hinf_tol: tol,
        hinf_satisfied: e_l2_sq <= rhs + tol,
        max_step_supply,
        check: "finite-horizon necessary condition".into(),
    }
}
