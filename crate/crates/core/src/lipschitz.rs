//! Detailed-form nonlinearities and the telescoping slope decomposition.
//!
//! A vector nonlinearity is split into scalar components `f_i(F_i x)`. For two
//! states the difference `f_i(F_i x) - f_i(F_i x̂)` is rewritten exactly as a
//! sum of bounded divided differences `h_ij` times the coordinates of
//! `F_i (x - x̂)`, walking from one argument to the other one coordinate at a
//! time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixcore::{DenseMatrix, DenseVector};
use crate::system::{BoundedSystem, DetailedSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LipschitzError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value of component {component} at {point:?}")]
    NonFinite { component: usize, point: Vec<f64> },
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("slope bounds inverted at ({i}, {j}): {lower} > {upper}")]
    InvertedBounds { i: usize, j: usize, lower: f64, upper: f64 },
    #[error("unknown nonlinearity handle `{0}`")]
    UnknownHandle(String),
}

/// A registered scalar function `φ(wᵀv)` of the projected argument `v`.
///
/// The tag names are the handle names used by scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    /// `sin(theta · wᵀv)`
    SinTheta { theta: f64, weights: Vec<f64> },
    /// `cos(theta · wᵀv)`
    CosTheta { theta: f64, weights: Vec<f64> },
    /// `c3 s³ + c2 s² + c1 s + c0` with `s = wᵀv`; coefficients highest first.
    OcvCubic { coeffs: [f64; 4], weights: Vec<f64> },
    /// `wᵀv`
    Linear { weights: Vec<f64> },
}

impl ScalarFn {
    /// Looks a handle up by name. `params` holds θ for the trigonometric
    /// handles and the four cubic coefficients for `ocv_cubic`.
    pub fn from_name(name: &str, params: &[f64], weights: Vec<f64>) -> Result<Self, LipschitzError> {
        let want = |k: usize| {
            if params.len() == k {
                Ok(())
            } else {
                Err(LipschitzError::Dimension(format!(
                    "handle `{name}` takes {k} parameters, got {}",
                    params.len()
                )))
            }
        };
        match name {
            "sin_theta" => want(1).map(|_| ScalarFn::SinTheta { theta: params[0], weights }),
            "cos_theta" => want(1).map(|_| ScalarFn::CosTheta { theta: params[0], weights }),
            "ocv_cubic" => want(4).map(|_| ScalarFn::OcvCubic {
                coeffs: [params[0], params[1], params[2], params[3]],
                weights,
            }),
            "linear" => want(0).map(|_| ScalarFn::Linear { weights }),
            other => Err(LipschitzError::UnknownHandle(other.to_string())),
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            ScalarFn::SinTheta { weights, .. }
            | ScalarFn::CosTheta { weights, .. }
            | ScalarFn::OcvCubic { weights, .. }
            | ScalarFn::Linear { weights } => weights,
        }
    }

    pub fn arity(&self) -> usize {
        self.weights().len()
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        let s: f64 = self.weights().iter().zip(v).map(|(w, x)| w * x).sum();
        match self {
            ScalarFn::SinTheta { theta, .. } => (theta * s).sin(),
            ScalarFn::CosTheta { theta, .. } => (theta * s).cos(),
            ScalarFn::OcvCubic { coeffs, .. } => ((coeffs[0] * s + coeffs[1]) * s + coeffs[2]) * s + coeffs[3],
            ScalarFn::Linear { .. } => s,
        }
    }
}

/// One scalar component `f_i(F_i x)` of a detailed-form nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityComponent {
    /// F_i (or G_i for the output family), inner_dim × n.
    pub projection: DenseMatrix,
    pub func: ScalarFn,
    /// Box on the projected coordinates, one (lo, hi) per row of `projection`.
    pub domain: Vec<(f64, f64)>,
}

impl NonlinearityComponent {
    pub fn new(projection: DenseMatrix, func: ScalarFn, domain: Vec<(f64, f64)>) -> Result<Self, LipschitzError> {
        let inner = projection.nrows();
        if func.arity() != inner {
            return Err(LipschitzError::Dimension(format!(
                "function takes {} arguments but projection has {inner} rows",
                func.arity()
            )));
        }
        if domain.len() != inner {
            return Err(LipschitzError::Dimension(format!(
                "domain has {} intervals, projection has {inner} rows",
                domain.len()
            )));
        }
        Ok(Self { projection, func, domain })
    }

    pub fn inner_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn project(&self, x: &DenseVector) -> Vec<f64> {
        (&self.projection * x).iter().copied().collect()
    }

    pub fn eval_state(&self, x: &DenseVector) -> f64 {
        self.func.eval(&self.project(x))
    }
}

/// Per-(component, coordinate) slope interval `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeBounds {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl SlopeBounds {
    pub fn new(lower: Vec<Vec<f64>>, upper: Vec<Vec<f64>>) -> Result<Self, LipschitzError> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(a, b)| a.len() != b.len()) {
            return Err(LipschitzError::Dimension("lower/upper shapes differ".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            for (j, (&a, &b)) in lo.iter().zip(hi).enumerate() {
                if a > b {
                    return Err(LipschitzError::InvertedBounds { i, j, lower: a, upper: b });
                }
            }
        }
        Ok(Self { lower, upper })
    }

    /// No components.
    pub fn empty() -> Self {
        Self { lower: vec![], upper: vec![] }
    }

    /// `[0, upper]` for every entry.
    pub fn from_upper(upper: Vec<Vec<f64>>) -> Result<Self, LipschitzError> {
        let lower = upper.iter().map(|r| vec![0.0; r.len()]).collect();
        Self::new(lower, upper)
    }

    pub fn components(&self) -> usize {
        self.upper.len()
    }

    pub fn inner_dim(&self) -> usize {
        self.upper.first().map_or(0, |r| r.len())
    }

    pub fn is_normalized(&self) -> bool {
        self.lower.iter().flatten().all(|&a| a == 0.0)
    }

    /// Shifts every interval to `[0, upper - lower]`.
    pub fn shifted(&self) -> Self {
        let upper = self
            .upper
            .iter()
            .zip(&self.lower)
            .map(|(hi, lo)| hi.iter().zip(lo).map(|(b, a)| b - a).collect())
            .collect();
        let lower = self.lower.iter().map(|r| vec![0.0; r.len()]).collect();
        Self { lower, upper }
    }

    /// Row-major flattening of the upper bounds, the (i, j) order used for
    /// multiplier blocks and vertex enumeration.
    pub fn flat_upper(&self) -> Vec<f64> {
        self.upper.iter().flatten().copied().collect()
    }

    pub fn contains(&self, i: usize, j: usize, value: f64, tol: f64) -> bool {
        value >= self.lower[i][j] - tol && value <= self.upper[i][j] + tol
    }
}

/// Coefficients `h_ij` of the telescoping decomposition, one row per component.
pub type DecompositionCoefficients = Vec<Vec<f64>>;

/// First `j` coordinates from `phi`, the rest from `psi`.
pub fn interpolation_point(psi: &[f64], phi: &[f64], j: usize) -> Result<Vec<f64>, LipschitzError> {
    if psi.len() != phi.len() {
        return Err(LipschitzError::Dimension(format!(
            "psi has {} coordinates, phi has {}",
            psi.len(),
            phi.len()
        )));
    }
    if j > psi.len() {
        return Err(LipschitzError::Dimension(format!("j = {j} exceeds dimension {}", psi.len())));
    }
    Ok(phi[..j].iter().chain(&psi[j..]).copied().collect())
}

/// Relative deadband under which a coordinate step is treated as zero.
pub const DEADBAND: f64 = 1e-12;

/// Divided difference of `f` along coordinate `j` (0-based) between the
/// interpolation points `j` and `j + 1`.
pub fn divided_difference(
    f: &dyn Fn(&[f64]) -> f64,
    psi: &[f64],
    phi: &[f64],
    j: usize,
) -> Result<f64, LipschitzError> {
    if j >= psi.len() {
        return Err(LipschitzError::Dimension(format!("coordinate {j} out of range {}", psi.len())));
    }
    let delta = psi[j] - phi[j];
    if delta.abs() <= DEADBAND * 1f64.max(psi[j].abs()).max(phi[j].abs()) {
        return Ok(0.0);
    }
    let before = interpolation_point(psi, phi, j)?;
    let after = interpolation_point(psi, phi, j + 1)?;
    Ok((f(&before) - f(&after)) / delta)
}

/// Coefficients `h_ij` such that
/// `f_i(F_i ψ) - f_i(F_i φ) = Σ_j h_ij (F_i (ψ - φ))_j` for every component.
pub fn decompose(
    components: &[NonlinearityComponent],
    psi: &DenseVector,
    phi: &DenseVector,
) -> Result<DecompositionCoefficients, LipschitzError> {
    if psi.len() != phi.len() {
        return Err(LipschitzError::Dimension("state lengths differ".into()));
    }
    components
        .iter()
        .map(|c| {
            if c.projection.ncols() != psi.len() {
                return Err(LipschitzError::Dimension(format!(
                    "projection has {} columns, state has {}",
                    c.projection.ncols(),
                    psi.len()
                )));
            }
            let a = c.project(psi);
            let b = c.project(phi);
            let f = |v: &[f64]| c.func.eval(v);
            (0..c.inner_dim()).map(|j| divided_difference(&f, &a, &b, j)).collect()
        })
        .collect()
}

/// Options for grid-based slope estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimation {
    /// Grid points per projected axis (≥ 2).
    pub resolution: usize,
    /// Multiplicative widening of each interval's half-range.
    pub safety_factor: f64,
}

impl Default for BoundEstimation {
    fn default() -> Self {
        Self { resolution: 201, safety_factor: 1.05 }
    }
}

/// Slope interval of one component from the extremes of central-difference
/// partial derivatives over a uniform grid on its domain box. Returns one row
/// of lower and upper bounds (one entry per projected coordinate).
pub fn estimate_bounds(
    component: &NonlinearityComponent,
    opts: BoundEstimation,
) -> Result<(Vec<f64>, Vec<f64>), LipschitzError> {
    let dims = component.inner_dim();
    if opts.resolution < 2 {
        return Err(LipschitzError::Domain("resolution must be at least 2".into()));
    }
    for &(lo, hi) in &component.domain {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(LipschitzError::Domain(format!("interval [{lo}, {hi}] is not a finite box")));
        }
    }
    let steps: Vec<f64> = component
        .domain
        .iter()
        .map(|&(lo, hi)| 1e-6 * (hi - lo).max(1.0))
        .collect();
    let mut lower = vec![f64::INFINITY; dims];
    let mut upper = vec![f64::NEG_INFINITY; dims];
    let total = opts.resolution.pow(dims as u32);
    let mut point = vec![0.0; dims];
    for flat in 0..total {
        let mut rem = flat;
        for (k, p) in point.iter_mut().enumerate() {
            let idx = rem % opts.resolution;
            rem /= opts.resolution;
            let (lo, hi) = component.domain[k];
            *p = lo + (hi - lo) * idx as f64 / (opts.resolution - 1) as f64;
        }
        let centre = component.func.eval(&point);
        if !centre.is_finite() {
            return Err(LipschitzError::NonFinite { component: 0, point: point.clone() });
        }
        for j in 0..dims {
            let mut fwd = point.clone();
            let mut bwd = point.clone();
            fwd[j] += steps[j];
            bwd[j] -= steps[j];
            let d = (component.func.eval(&fwd) - component.func.eval(&bwd)) / (2.0 * steps[j]);
            if !d.is_finite() {
                return Err(LipschitzError::NonFinite { component: 0, point: point.clone() });
            }
            lower[j] = lower[j].min(d);
            upper[j] = upper[j].max(d);
        }
    }
    for j in 0..dims {
        let mid = 0.5 * (lower[j] + upper[j]);
        let half = 0.5 * (upper[j] - lower[j]) * opts.safety_factor;
        lower[j] = mid - half;
        upper[j] = mid + half;
    }
    Ok((lower, upper))
}

/// Estimates a whole family; row `i` belongs to component `i`.
pub fn estimate_family(
    components: &[NonlinearityComponent],
    opts: BoundEstimation,
) -> Result<SlopeBounds, LipschitzError> {
    let mut lower = Vec::with_capacity(components.len());
    let mut upper = Vec::with_capacity(components.len());
    for (i, c) in components.iter().enumerate() {
        let (lo, hi) = estimate_bounds(c, opts).map_err(|e| match e {
            LipschitzError::NonFinite { point, .. } => LipschitzError::NonFinite { component: i, point },
            other => other,
        })?;
        lower.push(lo);
        upper.push(hi);
    }
    SlopeBounds::new(lower, upper)
}

/// Absorbs non-zero lower slope bounds into the linear part:
/// `A ← A + Σ f_a,ij G𝓗_ij F_i`, `C ← C + Σ g_a,ij F𝓖_ij G_i`, and shifts both
/// bound families to `[0, upper − lower]`. Applying it twice changes nothing.
pub fn normalize_bounds(
    system: &DetailedSystem,
    f_bounds: &SlopeBounds,
    g_bounds: &SlopeBounds,
) -> (DetailedSystem, SlopeBounds, SlopeBounds) {
    let mut out = system.clone();
    out.a += system.f_term(&f_bounds.lower);
    out.c += system.g_term(&g_bounds.lower);
    (out, f_bounds.shifted(), g_bounds.shifted())
}

/// [`normalize_bounds`] on a [`BoundedSystem`].
pub fn normalize(bs: &BoundedSystem) -> BoundedSystem {
    let (system, f_bounds, g_bounds) = normalize_bounds(&bs.system, &bs.f_bounds, &bs.g_bounds);
    BoundedSystem { system, f_bounds, g_bounds }
}
