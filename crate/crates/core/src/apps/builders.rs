//! The two built-in scenarios: a three-state academic example with
//! trigonometric nonlinearities and a lithium-ion cell model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lipschitz::{NonlinearityComponent, ScalarFn, SlopeBounds};
use crate::matrixcore::{from_rows, DenseMatrix};
use crate::system::{BoundedSystem, DetailedSystem};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid battery parameters: {0}")]
pub struct ParamError(pub String);

/// Box on the projected arguments of the example-1 components; the
/// trigonometric handles are globally Lipschitz, so it only bounds the grid
/// used by numerical slope estimation.
const EXAMPLE1_BOX: (f64, f64) = (-10.0, 10.0);

/// Example 1 with f₁ = sin(θ₁x₁), f₂ = cos(θ₂x₂) written as f₁(H₁x), f₂(H₂x):
/// x₁ is the third row of H₁x and x₂ the sum of the last two rows of H₂x.
pub fn build_example1(theta1: f64, theta2: f64) -> BoundedSystem {
    let m = |rows: &[&[f64]]| from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).expect("rectangular");
    let h1 = m(&[&[1.0, 0.0, -1.0], &[-1.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
    let h2 = m(&[&[0.0, -1.0, 1.0], &[1.0, 1.0, 0.0], &[-1.0, 0.0, 0.0]]);
    let f1 = NonlinearityComponent::new(
        h1,
        ScalarFn::SinTheta { theta: theta1, weights: vec![0.0, 0.0, 1.0] },
        vec![EXAMPLE1_BOX; 3],
    )
    .expect("3 rows");
    let f2 = NonlinearityComponent::new(
        h2,
        ScalarFn::CosTheta { theta: theta2, weights: vec![0.0, 1.0, 1.0] },
        vec![EXAMPLE1_BOX; 3],
    )
    .expect("3 rows");
    let t1 = theta1.abs();
    let t2 = theta2.abs();
    let f_bounds = SlopeBounds::new(
        vec![vec![0.0, 0.0, -t1], vec![0.0, -t2, -t2]],
        vec![vec![0.0, 0.0, t1], vec![0.0, t2, t2]],
    )
    .expect("lower ≤ upper");
    let system = DetailedSystem {
        a: m(&[&[0.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[0.0, -1.0, 1.0]]),
        g: m(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]]),
        b1: DenseMatrix::from_element(3, 1, 1.0),
        b2: DenseMatrix::zeros(2, 1),
        c: m(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]),
        e: DenseMatrix::from_element(3, 1, 1.0),
        d: DenseMatrix::from_column_slice(2, 1, &[1.0, -0.1]),
        f: DenseMatrix::zeros(2, 0),
        f_components: vec![f1, f2],
        g_components: vec![],
    };
    BoundedSystem {
        system,
        f_bounds,
        g_bounds: SlopeBounds::empty(),
    }
}

/// Second-order equivalent-circuit cell; `ts` is in the same time unit as
/// the products R·C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub cn: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub c1: f64,
    pub c2: f64,
    pub ts: f64,
    /// OCV(s) coefficients, highest power first.
    pub ocv: [f64; 4],
    /// Slope interval of OCV over s ∈ [0, 1].
    pub ocv_slope: (f64, f64),
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            cn: 5.0,
            r0: 0.0314,
            r1: 0.0181,
            r2: 0.0281,
            c1: 1712.0,
            c2: 55257.0,
            ts: 0.02,
            ocv: [0.9206, -1.3781, 1.3905, 3.2416],
            ocv_slope: (0.7028, 1.3961),
        }
    }
}

impl BatteryParams {
    /// Rejects non-positive or non-finite values; returns warnings for an
    /// Euler step that is not small against the RC time constants.
    pub fn validate(&self) -> Result<Vec<String>, ParamError> {
        for (name, v) in [
            ("cn", self.cn),
            ("r0", self.r0),
            ("r1", self.r1),
            ("r2", self.r2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("ts", self.ts),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ParamError(format!("{name} must be positive, got {v}")));
            }
        }
        if self.ocv.iter().any(|c| !c.is_finite()) {
            return Err(ParamError("OCV coefficients must be finite".into()));
        }
        if !(self.ocv_slope.0 <= self.ocv_slope.1) {
            return Err(ParamError("OCV slope interval is inverted".into()));
        }
        let mut warnings = Vec::new();
        let tau = (self.r1 * self.c1).min(self.r2 * self.c2);
        if self.ts >= tau {
            warnings.push(format!("ts = {} is not below the fastest RC constant {tau}", self.ts));
        }
        Ok(warnings)
    }

    pub fn ocv_fn(&self) -> ScalarFn {
        ScalarFn::OcvCubic {
            coeffs: self.ocv,
            weights: vec![1.0],
        }
    }
}

/// Euler discretization with states (V₁, V₂, SoC), input current I and a
/// single scalar disturbance entering through E = B₁ and D = 1.
pub fn build_battery(p: &BatteryParams) -> Result<BoundedSystem, ParamError> {
    p.validate()?;
    let a = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        1.0 - p.ts / (p.r1 * p.c1),
        1.0 - p.ts / (p.r2 * p.c2),
        1.0,
    ]));
    let b1 = DenseMatrix::from_column_slice(3, 1, &[p.ts / p.c1, p.ts / p.c2, -p.ts / p.cn]);
    let ocv = NonlinearityComponent::new(DenseMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]), p.ocv_fn(), vec![(0.0, 1.0)])
        .expect("1 row");
    let system = DetailedSystem {
        a,
        g: DenseMatrix::zeros(3, 0),
        b1: b1.clone(),
        b2: DenseMatrix::from_element(1, 1, -p.r0),
        c: DenseMatrix::from_row_slice(1, 3, &[-1.0, -1.0, 0.0]),
        e: b1,
        d: DenseMatrix::from_element(1, 1, 1.0),
        f: DenseMatrix::from_element(1, 1, 1.0),
        f_components: vec![],
        g_components: vec![ocv],
    };
    let g_bounds = SlopeBounds::new(vec![vec![p.ocv_slope.0]], vec![vec![p.ocv_slope.1]]).map_err(|e| ParamError(e.to_string()))?;
    Ok(BoundedSystem {
        system,
        f_bounds: SlopeBounds::empty(),
        g_bounds,
    })
}
