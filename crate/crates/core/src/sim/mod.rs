//! Closed-loop simulation of the plant, the Luenberger observer and an EKF
//! baseline, plus finite-horizon H∞ checks and error metrics.

mod ekf;
mod export;
mod metrics;
mod signals;

pub use ekf::{ekf_baseline, EkfRun};
pub use export::{read_series_csv, write_metrics_json, write_trajectories_csv, SeriesColumn};
pub use metrics::{hinf_check, rmse, MetricsReport};
pub use signals::{InputProfile, NoiseKind, NoiseSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixcore::{DenseMatrix, DenseVector};
use crate::system::DetailedSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("innovation covariance is singular at step {0}")]
    SingularInnovation(usize),
    #[error("invalid covariance: {0}")]
    Covariance(String),
    #[error("io: {0}")]
    Io(String),
    #[error("bad series data: {0}")]
    Parse(String),
}

/// States have `horizon + 1` entries; outputs, inputs and noise have
/// `horizon` entries each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub horizon: usize,
    pub states: Vec<DenseVector>,
    pub outputs: Vec<DenseVector>,
    pub inputs: Vec<DenseVector>,
    pub noise: Vec<DenseVector>,
    /// First step at which a non-finite value appeared; the series stop there.
    pub truncated_at: Option<usize>,
}

impl Trajectory {
    pub fn is_consistent(&self) -> bool {
        let k = self.horizon;
        self.states.len() == k + 1 && self.outputs.len() == k && self.inputs.len() == k && self.noise.len() == k
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated_at.is_some()
    }

    fn truncate(mut self, k: usize) -> Self {
        self.horizon = k;
        self.states.truncate(k + 1);
        self.outputs.truncate(k);
        self.inputs.truncate(k);
        self.noise.truncate(k);
        self.truncated_at = Some(k);
        self
    }
}

fn finite(v: &DenseVector) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn check_series(name: &str, s: &[DenseVector], len: usize, dim: usize) -> Result<(), SimError> {
    if s.len() != len {
        return Err(SimError::Dimension(format!("{name} has {} entries, expected {len}", s.len())));
    }
    if let Some(k) = s.iter().position(|v| v.len() != dim) {
        return Err(SimError::Dimension(format!("{name}[{k}] has length {}, expected {dim}", s[k].len())));
    }
    Ok(())
}

/// Runs x_{k+1} = Ax_k + Gf(x_k) + B₁u_k + Eω_k, y_k = Cx_k + Fg(x_k) + B₂u_k + Dω_k
/// for `inputs.len()` steps.
pub fn simulate_plant(
    sys: &DetailedSystem,
    x0: &DenseVector,
    inputs: &[DenseVector],
    noise: &[DenseVector],
) -> Result<Trajectory, SimError> {
    let k = inputs.len();
    check_series("x0", std::slice::from_ref(x0), 1, sys.n())?;
    check_series("inputs", inputs, k, sys.inputs())?;
    check_series("noise", noise, k, sys.q())?;
    let mut traj = Trajectory {
        horizon: k,
        states: Vec::with_capacity(k + 1),
        outputs: Vec::with_capacity(k),
        inputs: inputs.to_vec(),
        noise: noise.to_vec(),
        truncated_at: None,
    };
    traj.states.push(x0.clone());
    for step in 0..k {
        let x = &traj.states[step];
        let y = sys.output(x, &inputs[step], &noise[step]);
        let next = sys.step(x, &inputs[step], &noise[step]);
        if !finite(&y) || !finite(&next) {
            return Ok(traj.truncate(step));
        }
        traj.outputs.push(y);
        traj.states.push(next);
    }
    Ok(traj)
}

/// Runs x̂_{k+1} = Ax̂_k + Gf(x̂_k) + B₁u_k + L(y_k − Cx̂_k − B₂u_k − Fg(x̂_k)).
/// The returned outputs are the predictions ŷ_k and the noise series is zero.
pub fn simulate_observer(
    sys: &DetailedSystem,
    l: &DenseMatrix,
    xhat0: &DenseVector,
    outputs: &[DenseVector],
    inputs: &[DenseVector],
) -> Result<Trajectory, SimError> {
    if l.nrows() != sys.n() || l.ncols() != sys.p() {
        return Err(SimError::Dimension(format!("L is {}x{}, expected {}x{}", l.nrows(), l.ncols(), sys.n(), sys.p())));
    }
    let k = outputs.len();
    check_series("xhat0", std::slice::from_ref(xhat0), 1, sys.n())?;
    check_series("outputs", outputs, k, sys.p())?;
    check_series("inputs", inputs, k, sys.inputs())?;
    let zero_w = DenseVector::zeros(sys.q());
    let mut traj = Trajectory {
        horizon: k,
        states: Vec::with_capacity(k + 1),
        outputs: Vec::with_capacity(k),
        inputs: inputs.to_vec(),
        noise: vec![zero_w.clone(); k],
        truncated_at: None,
    };
    traj.states.push(xhat0.clone());
    for step in 0..k {
        let xh = &traj.states[step];
        let yhat = sys.output(xh, &inputs[step], &zero_w);
        let next = sys.step(xh, &inputs[step], &zero_w) + l * (&outputs[step] - &yhat);
        if !finite(&yhat) || !finite(&next) {
            return Ok(traj.truncate(step));
        }
        traj.outputs.push(yhat);
        traj.states.push(next);
    }
    Ok(traj)
}

/// Pointwise difference of two state series, truncated to the shorter one.
pub fn error_series(truth: &[DenseVector], estimate: &[DenseVector]) -> Vec<DenseVector> {
    truth.iter().zip(estimate).map(|(x, xh)| x - xh).collect()
}
