//! Plant model `x⁺ = A x + G f(x) + B₁ u + E ω`, `y = C x + F g(x) + B₂ u + D ω`
//! with detailed-form nonlinearities, and the matrices of the estimation
//! error recursion it induces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lipschitz::{NonlinearityComponent, SlopeBounds};
use crate::matrixcore::{DenseMatrix, DenseVector};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("inconsistent system: {0}")]
pub struct SystemError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailedSystem {
    pub a: DenseMatrix,
    pub g: DenseMatrix,
    pub b1: DenseMatrix,
    pub b2: DenseMatrix,
    pub c: DenseMatrix,
    pub e: DenseMatrix,
    pub d: DenseMatrix,
    pub f: DenseMatrix,
    /// Components of f (one per column of G).
    pub f_components: Vec<NonlinearityComponent>,
    /// Components of g (one per column of F).
    pub g_components: Vec<NonlinearityComponent>,
}

/// A plant together with the slope intervals of both nonlinearity families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedSystem {
    pub system: DetailedSystem,
    pub f_bounds: SlopeBounds,
    pub g_bounds: SlopeBounds,
}

impl DetailedSystem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn q(&self) -> usize {
        self.e.ncols()
    }
    pub fn inputs(&self) -> usize {
        self.b1.ncols()
    }
    pub fn m(&self) -> usize {
        self.g.ncols()
    }
    pub fn r(&self) -> usize {
        self.f.ncols()
    }
    /// Shared inner dimension of the f family (n̄), 0 when empty.
    pub fn nbar(&self) -> usize {
        self.f_components.first().map_or(0, |c| c.inner_dim())
    }
    /// Shared inner dimension of the g family (p̄), 0 when empty.
    pub fn pbar(&self) -> usize {
        self.g_components.first().map_or(0, |c| c.inner_dim())
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let (n, p, q, s) = (self.n(), self.p(), self.q(), self.inputs());
        let check = |name: &str, m: &DenseMatrix, rows: usize, cols: usize| {
            if m.nrows() != rows || m.ncols() != cols {
                Err(SystemError(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        if n == 0 || p == 0 {
            return Err(SystemError("state and output dimensions must be positive".into()));
        }
        check("A", &self.a, n, n)?;
        check("G", &self.g, n, self.m())?;
        check("B1", &self.b1, n, s)?;
        check("B2", &self.b2, p, s)?;
        check("C", &self.c, p, n)?;
        check("E", &self.e, n, q)?;
        check("D", &self.d, p, q)?;
        check("F", &self.f, p, self.r())?;
        if self.f_components.len() != self.m() {
            return Err(SystemError(format!(
                "G has {} columns but f has {} components",
                self.m(),
                self.f_components.len()
            )));
        }
        if self.g_components.len() != self.r() {
            return Err(SystemError(format!(
                "F has {} columns but g has {} components",
                self.r(),
                self.g_components.len()
            )));
        }
        for (family, comps, inner) in [("f", &self.f_components, self.nbar()), ("g", &self.g_components, self.pbar())] {
            for (i, c) in comps.iter().enumerate() {
                if c.inner_dim() != inner {
                    return Err(SystemError(format!("{family}_{i} has inner dimension {}, family uses {inner}", c.inner_dim())));
                }
                if c.projection.ncols() != n {
                    return Err(SystemError(format!("{family}_{i} projection has {} columns", c.projection.ncols())));
                }
            }
        }
        Ok(())
    }

    pub fn eval_f(&self, x: &DenseVector) -> DenseVector {
        DenseVector::from_iterator(self.m(), self.f_components.iter().map(|c| c.eval_state(x)))
    }

    pub fn eval_g(&self, x: &DenseVector) -> DenseVector {
        DenseVector::from_iterator(self.r(), self.g_components.iter().map(|c| c.eval_state(x)))
    }

    pub fn step(&self, x: &DenseVector, u: &DenseVector, w: &DenseVector) -> DenseVector {
        &self.a * x + &self.g * self.eval_f(x) + &self.b1 * u + &self.e * w
    }

    pub fn output(&self, x: &DenseVector, u: &DenseVector, w: &DenseVector) -> DenseVector {
        &self.c * x + &self.f * self.eval_g(x) + &self.b2 * u + &self.d * w
    }

    /// Σ_ij coef_ij · G 𝓗_ij F_i, the state-nonlinearity part of the error map.
    pub fn f_term(&self, coef: &[Vec<f64>]) -> DenseMatrix {
        let mut acc = DenseMatrix::zeros(self.n(), self.n());
        for (i, comp) in self.f_components.iter().enumerate() {
            for (j, &h) in coef[i].iter().enumerate() {
                if h != 0.0 {
                    acc += h * self.g.column(i) * comp.projection.row(j);
                }
            }
        }
        acc
    }

    /// Σ_ij coef_ij · F 𝓖_ij G_i, the output-nonlinearity part (p×n).
    pub fn g_term(&self, coef: &[Vec<f64>]) -> DenseMatrix {
        let mut acc = DenseMatrix::zeros(self.p(), self.n());
        for (i, comp) in self.g_components.iter().enumerate() {
            for (j, &h) in coef[i].iter().enumerate() {
                if h != 0.0 {
                    acc += h * self.f.column(i) * comp.projection.row(j);
                }
            }
        }
        acc
    }

    /// Error transition 𝔸 = A − LC + Σ f_ij G𝓗_ij F_i − Σ g_ij LF𝓖_ij G_i.
    pub fn error_transition(&self, l: &DenseMatrix, fcoef: &[Vec<f64>], gcoef: &[Vec<f64>]) -> DenseMatrix {
        &self.a - l * &self.c + self.f_term(fcoef) - l * self.g_term(gcoef)
    }

    /// Noise map 𝔼 = E − L D.
    pub fn error_noise(&self, l: &DenseMatrix) -> DenseMatrix {
        &self.e - l * &self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::ScalarFn;

    fn scalar_system() -> DetailedSystem {
        let comp = NonlinearityComponent::new(
            DenseMatrix::identity(1, 1),
            ScalarFn::SinTheta { theta: 1.0, weights: vec![1.0] },
            vec![(-1.0, 1.0)],
        )
        .unwrap();
        DetailedSystem {
            a: DenseMatrix::from_element(1, 1, 0.5),
            g: DenseMatrix::from_element(1, 1, 0.1),
            b1: DenseMatrix::zeros(1, 0),
            b2: DenseMatrix::zeros(1, 0),
            c: DenseMatrix::identity(1, 1),
            e: DenseMatrix::identity(1, 1),
            d: DenseMatrix::identity(1, 1),
            f: DenseMatrix::zeros(1, 0),
            f_components: vec![comp],
            g_components: vec![],
        }
    }

    #[test]
    fn validates_dimensions() {
        let mut s = scalar_system();
        s.validate().unwrap();
        s.c = DenseMatrix::zeros(1, 2);
        assert!(s.validate().is_err());
        let mut s = scalar_system();
        s.f_components.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn error_transition_matches_hand_formula() {
        let s = scalar_system();
        let l = DenseMatrix::from_element(1, 1, 0.3);
        let a = s.error_transition(&l, &[vec![0.7]], &[]);
        assert!((a[(0, 0)] - (0.5 - 0.3 + 0.1 * 0.7)).abs() < 1e-15);
        assert!((s.error_noise(&l)[(0, 0)] - 0.7).abs() < 1e-15);
    }
}
