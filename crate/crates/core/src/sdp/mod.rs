//! Semidefinite programs `min cᵀx  s.t.  F₀ + Σ xᵢ Fᵢ ⪰ 0` (one such
//! inequality per block), an interior-point solver and SDPA file I/O.

mod sdpa;
mod solver;

pub use sdpa::{export_sdpa, import_sdpa, read_sdpa, write_sdpa, SdpaError};
pub use solver::{solve, IterationRecord, SdpSolution, SolveOptions, SolveStatus, InfeasibilityKind};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixcore::{sym_eigvals, DenseMatrix, SymMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("x has length {found}, problem has {expected} variables")]
    Length { expected: usize, found: usize },
}

/// Upper-triangle entries `(i, j, value)` with `i ≤ j`.
pub type SparseSym = Vec<(usize, usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiBlock {
    pub dim: usize,
    pub constant: DenseMatrix,
    /// (variable index, upper-triangle coefficient entries), sorted by variable.
    pub coefficients: Vec<(usize, SparseSym)>,
}

impl LmiBlock {
    pub fn new(constant: SymMatrix) -> Self {
        Self {
            dim: constant.dim(),
            constant: constant.into_dense(),
            coefficients: Vec::new(),
        }
    }

    /// Adds `value` at (i, j) and its mirror in the coefficient of `var`.
    pub fn add_entry(&mut self, var: usize, i: usize, j: usize, value: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let pos = match self.coefficients.binary_search_by_key(&var, |(v, _)| *v) {
            Ok(p) => p,
            Err(p) => {
                self.coefficients.insert(p, (var, Vec::new()));
                p
            }
        };
        let entries = &mut self.coefficients[pos].1;
        match entries.iter_mut().find(|(a, b, _)| *a == i && *b == j) {
            Some(e) => e.2 += value,
            None => entries.push((i, j, value)),
        }
    }

    pub fn coefficient_dense(&self, var: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.dim, self.dim);
        if let Ok(p) = self.coefficients.binary_search_by_key(&var, |(v, _)| *v) {
            add_sparse(&mut out, &self.coefficients[p].1, 1.0);
        }
        out
    }

    /// F₀ + Σ xᵢ Fᵢ
    pub fn evaluate(&self, x: &[f64]) -> SymMatrix {
        let mut out = self.constant.clone();
        self.accumulate(&mut out, x);
        SymMatrix::from_upper(out).expect("block is square")
    }

    /// Adds Σ xᵢ Fᵢ (no constant) into `out`.
    pub(crate) fn accumulate(&self, out: &mut DenseMatrix, x: &[f64]) {
        for (var, entries) in &self.coefficients {
            if x[*var] != 0.0 {
                add_sparse(out, entries, x[*var]);
            }
        }
    }

    /// ⟨Fᵢ, Y⟩ for a symmetric `Y`, given Fᵢ's upper-triangle entries.
    pub(crate) fn sparse_inner(entries: &SparseSym, y: &DenseMatrix) -> f64 {
        entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * y[(i, i)] } else { 2.0 * v * y[(i, j)] })
            .sum()
    }
}

pub(crate) fn add_sparse(out: &mut DenseMatrix, entries: &SparseSym, alpha: f64) {
    for &(i, j, v) in entries {
        out[(i, j)] += alpha * v;
        if i != j {
            out[(j, i)] += alpha * v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

impl SdpProblem {
    pub fn new(num_vars: usize, objective: Vec<f64>) -> Self {
        Self {
            num_vars,
            objective,
            blocks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |s: String| Err(SdpError::Malformed(s));
        if self.objective.len() != self.num_vars {
            return bad(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.num_vars
            ));
        }
        if self.blocks.is_empty() {
            return bad("no constraint blocks".into());
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return bad("non-finite objective coefficient".into());
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.dim == 0 || b.constant.nrows() != b.dim || b.constant.ncols() != b.dim {
                return bad(format!("block {k} has inconsistent dimension"));
            }
            if (&b.constant - b.constant.transpose()).amax() > 1e-12 * b.constant.amax().max(1.0) {
                return bad(format!("block {k} constant is not symmetric"));
            }
            let mut last = None;
            for (var, entries) in &b.coefficients {
                if *var >= self.num_vars {
                    return bad(format!("block {k} references variable {var}"));
                }
                if last.is_some_and(|l| l >= *var) {
                    return bad(format!("block {k} coefficients are not sorted by variable"));
                }
                last = Some(*var);
                for &(i, j, v) in entries {
                    if i > j || j >= b.dim || !v.is_finite() {
                        return bad(format!("block {k}, variable {var}: bad entry ({i}, {j}, {v})"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }
}

/// Minimum eigenvalue of every block of `F(x)`.
pub fn check_feasibility(problem: &SdpProblem, x: &[f64]) -> Result<Vec<f64>, SdpError> {
    if x.len() != problem.num_vars {
        return Err(SdpError::Length {
            expected: problem.num_vars,
            found: x.len(),
        });
    }
    Ok(problem
        .blocks
        .iter()
        .map(|b| {
            let m = b.evaluate(x);
            sym_eigvals(&m).map(|v| v[0]).unwrap_or(f64::NAN)
        })
        .collect())
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// min x s.t. [[x, 1], [1, x]] ⪰ 0
    pub fn min_x() -> SdpProblem {
        let mut b = LmiBlock::new(SymMatrix::from_upper(DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap());
        b.add_entry(0, 0, 0, 1.0);
        b.add_entry(0, 1, 1, 1.0);
        let mut p = SdpProblem::new(1, vec![1.0]);
        p.blocks.push(b);
        p
    }

    /// min x₁ + x₂ s.t. diag(x₁ − 1, x₂ − 2) ⪰ 0
    pub fn diagonal_lp() -> SdpProblem {
        let mut b = LmiBlock::new(SymMatrix::from_diagonal(&[-1.0, -2.0]));
        b.add_entry(0, 0, 0, 1.0);
        b.add_entry(1, 1, 1, 1.0);
        let mut p = SdpProblem::new(2, vec![1.0, 1.0]);
        p.blocks.push(b);
        p
    }

    /// −I + x·0 ⪰ 0
    pub fn constant_infeasible() -> SdpProblem {
        let mut p = SdpProblem::new(1, vec![0.0]);
        p.blocks.push(LmiBlock::new(SymMatrix::identity(2).scaled(-1.0)));
        p
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn feasibility_report_examples() {
        let p = min_x();
        let at0 = check_feasibility(&p, &[0.0]).unwrap();
        assert!((at0[0] + 1.0).abs() < 1e-14);
        let mut id = SdpProblem::new(1, vec![0.0]);
        id.blocks.push(LmiBlock::new(SymMatrix::identity(3)));
        assert!((check_feasibility(&id, &[7.0]).unwrap()[0] - 1.0).abs() < 1e-14);
        assert!(check_feasibility(&p, &[]).is_err());
    }

    #[test]
    fn validation_catches_bad_entries() {
        let mut p = min_x();
        p.validate().unwrap();
        p.blocks[0].coefficients[0].1.push((1, 0, 1.0));
        assert!(p.validate().is_err());
        let mut p = min_x();
        p.objective.push(0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn add_entry_mirrors_lower_triangle() {
        let mut b = LmiBlock::new(SymMatrix::zeros(2));
        b.add_entry(4, 1, 0, 2.0);
        b.add_entry(4, 0, 1, 1.0);
        assert_eq!(b.coefficients, vec![(4, vec![(0, 1, 3.0)])]);
    }
}
