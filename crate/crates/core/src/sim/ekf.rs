use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use super::{check_series, SimError, Trajectory};
use crate::matrixcore::{DenseMatrix, DenseVector, SymMatrix};
use crate::system::DetailedSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfRun {
    /// One-step predictions x̂_{k|k−1}, comparable to the Luenberger
    /// observer (both use outputs up to k − 1).
    pub predicted: Trajectory,
    /// Filtered estimates x̂_{k|k}, `horizon` entries.
    pub filtered: Vec<DenseVector>,
    pub innovations: Vec<DenseVector>,
}

/// Central-difference Jacobian of `f` at `x` with step 1e-6·(1 + |x_i|).
fn jacobian(f: impl Fn(&DenseVector) -> DenseVector, x: &DenseVector, rows: usize) -> DenseMatrix {
    let mut j = DenseMatrix::zeros(rows, x.len());
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        j.set_column(i, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

fn check_cov(name: &str, m: &SymMatrix, dim: usize, strict: bool) -> Result<(), SimError> {
    if m.dim() != dim {
        return Err(SimError::Dimension(format!("{name} is {0}x{0}, expected {dim}x{dim}", m.dim())));
    }
    let lo = m.lambda_min().map_err(|e| SimError::Covariance(e.to_string()))?;
    let tol = 1e-12 * m.frobenius_norm().max(1.0);
    if (strict && !(lo > 0.0)) || lo < -tol {
        return Err(SimError::Covariance(format!("{name} has minimum eigenvalue {lo:e}")));
    }
    Ok(())
}

/// Standard discrete EKF. `q` may be singular (noise entering through a
/// rank-deficient E); `rn` must be positive definite.
pub fn ekf_baseline(
    sys: &DetailedSystem,
    xhat0: &DenseVector,
    p0: &SymMatrix,
    q: &SymMatrix,
    rn: &SymMatrix,
    outputs: &[DenseVector],
    inputs: &[DenseVector],
) -> Result<EkfRun, SimError> {
    let (n, p) = (sys.n(), sys.p());
    let k = outputs.len();
    check_series("xhat0", std::slice::from_ref(xhat0), 1, n)?;
    check_series("outputs", outputs, k, p)?;
    check_series("inputs", inputs, k, sys.inputs())?;
    check_cov("P0", p0, n, false)?;
    check_cov("Q", q, n, false)?;
    check_cov("Rn", rn, p, true)?;
    let zero_w = DenseVector::zeros(sys.q());

    let mut x = xhat0.clone();
    let mut cov = p0.as_dense().clone();
    let mut predicted = vec![x.clone()];
    let mut yhat_series = Vec::with_capacity(k);
    let mut filtered = Vec::with_capacity(k);
    let mut innovations = Vec::with_capacity(k);
    for step in 0..k {
        let u = &inputs[step];
        let h = |v: &DenseVector| sys.output(v, u, &zero_w);
        let hj = jacobian(h, &x, p);
        let yhat = h(&x);
        let innov = &outputs[step] - &yhat;
        let s = &hj * &cov * hj.transpose() + rn.as_dense();
        let s = (&s + s.transpose()) * 0.5;
        let chol = Cholesky::new(s).ok_or(SimError::SingularInnovation(step))?;
        let gain = chol.solve(&(&hj * &cov)).transpose();
        let xf = &x + &gain * &innov;
        let i_kh = DenseMatrix::identity(n, n) - &gain * &hj;
        let pf = &i_kh * &cov * i_kh.transpose() + &gain * rn.as_dense() * gain.transpose();
        let pf = (&pf + pf.transpose()) * 0.5;

        let fmap = |v: &DenseVector| sys.step(v, u, &zero_w);
        let fj = jacobian(fmap, &xf, n);
        x = fmap(&xf);
        let pp = &fj * &pf * fj.transpose() + q.as_dense();
        cov = (&pp + pp.transpose()) * 0.5;

        yhat_series.push(yhat);
        filtered.push(xf);
        innovations.push(innov);
        predicted.push(x.clone());
    }
    Ok(EkfRun {
        predicted: Trajectory {
            horizon: k,
            states: predicted,
            outputs: yhat_series,
            inputs: inputs.to_vec(),
            noise: vec![zero_w; k],
            truncated_at: None,
        },
        filtered,
        innovations,
    })
}
