//! Matrices that depend affinely on scalar decision variables.

use std::collections::BTreeMap;

use crate::matrixcore::{dim_err, offsets, DenseMatrix, MatrixError, SymMatrix};

pub type VarId = usize;

/// Sparse coefficient pattern of one variable: (row, col) → value.
pub type Coefficient = BTreeMap<(usize, usize), f64>;

/// `constant + Σ_k x_k · coefficient_k`, rows × cols.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    rows: usize,
    cols: usize,
    constant: DenseMatrix,
    terms: BTreeMap<VarId, Coefficient>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            constant: DenseMatrix::zeros(rows, cols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: DenseMatrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    /// `x_var · I_dim`.
    pub fn scalar_identity(var: VarId, dim: usize) -> Self {
        let mut out = Self::zeros(dim, dim);
        for i in 0..dim {
            out.add_term(var, i, i, 1.0);
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn constant_part(&self) -> &DenseMatrix {
        &self.constant
    }

    pub fn terms(&self) -> &BTreeMap<VarId, Coefficient> {
        &self.terms
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().copied()
    }

    pub fn add_term(&mut self, var: VarId, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let coef = self.terms.entry(var).or_default();
        let slot = coef.entry((i, j)).or_insert(0.0);
        *slot += v;
        if *slot == 0.0 {
            coef.remove(&(i, j));
            if coef.is_empty() {
                self.terms.remove(&var);
            }
        }
    }

    fn same_shape(&self, other: &Self) -> Result<(), MatrixError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dim_err(
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, MatrixError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.constant += &other.constant;
        for (&var, coef) in &other.terms {
            for (&(i, j), &v) in coef {
                out.add_term(var, i, j, v);
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MatrixError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::zeros(self.rows, self.cols);
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant * alpha,
            terms: self
                .terms
                .iter()
                .map(|(&k, c)| (k, c.iter().map(|(&ij, &v)| (ij, v * alpha)).collect()))
                .collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|(&k, c)| (k, c.iter().map(|(&(i, j), &v)| ((j, i), v)).collect()))
                .collect(),
        }
    }

    /// `self · m`
    pub fn mul_right(&self, m: &DenseMatrix) -> Result<Self, MatrixError> {
        if m.nrows() != self.cols {
            return Err(dim_err(format!("{} rows", self.cols), format!("{} rows", m.nrows())));
        }
        let mut out = Self::constant(&self.constant * m);
        for (&var, coef) in &self.terms {
            for (&(i, k), &v) in coef {
                for j in 0..m.ncols() {
                    let w = m[(k, j)];
                    if w != 0.0 {
                        out.add_term(var, i, j, v * w);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `m · self`
    pub fn mul_left(&self, m: &DenseMatrix) -> Result<Self, MatrixError> {
        Ok(self.transpose().mul_right(&m.transpose())?.transpose())
    }

    pub fn evaluate(&self, x: &[f64]) -> DenseMatrix {
        let mut out = self.constant.clone();
        for (&var, coef) in &self.terms {
            let xv = x[var];
            if xv != 0.0 {
                for (&(i, j), &v) in coef {
                    out[(i, j)] += xv * v;
                }
            }
        }
        out
    }

    /// Dense coefficient matrix of one variable.
    pub fn coefficient_dense(&self, var: VarId) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        if let Some(c) = self.terms.get(&var) {
            for (&(i, j), &v) in c {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Block partition of affine matrices; unplaced cells are zero.
#[derive(Debug, Clone)]
pub struct AffineBlocks {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    blocks: BTreeMap<(usize, usize), AffineMatrix>,
}

impl AffineBlocks {
    pub fn square(sizes: Vec<usize>) -> Self {
        Self {
            row_sizes: sizes.clone(),
            col_sizes: sizes,
            blocks: BTreeMap::new(),
        }
    }

    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Self {
        Self {
            row_sizes,
            col_sizes,
            blocks: BTreeMap::new(),
        }
    }

    pub fn place(&mut self, br: usize, bc: usize, m: AffineMatrix) -> Result<(), MatrixError> {
        let (rows, cols) = (self.row_sizes[br], self.col_sizes[bc]);
        if m.rows() != rows || m.cols() != cols {
            return Err(dim_err(
                format!("{rows}x{cols} at block ({br},{bc})"),
                format!("{}x{}", m.rows(), m.cols()),
            ));
        }
        self.blocks.insert((br, bc), m);
        Ok(())
    }

    /// Places `m` at (br, bc) and its transpose at (bc, br).
    pub fn place_sym(&mut self, br: usize, bc: usize, m: AffineMatrix) -> Result<(), MatrixError> {
        if br != bc {
            self.place(bc, br, m.transpose())?;
        }
        self.place(br, bc, m)
    }

    pub fn assemble(&self) -> AffineMatrix {
        let ro = offsets(&self.row_sizes);
        let co = offsets(&self.col_sizes);
        let mut out = AffineMatrix::zeros(self.row_sizes.iter().sum(), self.col_sizes.iter().sum());
        for (&(br, bc), m) in &self.blocks {
            let (r0, c0) = (ro[br], co[bc]);
            out.constant
                .view_mut((r0, c0), (m.rows(), m.cols()))
                .copy_from(&m.constant);
            for (&var, coef) in &m.terms {
                for (&(i, j), &v) in coef {
                    out.add_term(var, r0 + i, c0 + j, v);
                }
            }
        }
        out
    }
}

/// Square affine matrix whose constant and every coefficient are symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSymMatrix(AffineMatrix);

impl AffineSymMatrix {
    /// Accepts `m` if it is symmetric to within 1e-12 (relative), keeping the
    /// upper triangle and mirroring it.
    pub fn new(m: AffineMatrix) -> Result<Self, MatrixError> {
        if m.rows != m.cols {
            return Err(dim_err("square", format!("{}x{}", m.rows, m.cols)));
        }
        let tol = 1e-12;
        let c = SymMatrix::try_from_dense(m.constant.clone(), tol)?;
        let mut out = AffineMatrix::constant(c.into_dense());
        for (&var, coef) in &m.terms {
            for (&(i, j), &v) in coef {
                let mirror = coef.get(&(j, i)).copied().unwrap_or(0.0);
                if (v - mirror).abs() > tol * v.abs().max(1.0) {
                    return Err(MatrixError::NotSymmetric { asymmetry: (v - mirror).abs() });
                }
                if i <= j {
                    out.add_term(var, i, j, v);
                    if i != j {
                        out.add_term(var, j, i, v);
                    }
                }
            }
        }
        Ok(Self(out))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn inner(&self) -> &AffineMatrix {
        &self.0
    }

    pub fn evaluate(&self, x: &[f64]) -> SymMatrix {
        SymMatrix::from_upper(self.0.evaluate(x)).expect("square, non-empty")
    }

    /// Upper-triangle entries (i ≤ j) of each variable's coefficient.
    pub fn upper_coefficients(&self) -> Vec<(VarId, Vec<(usize, usize, f64)>)> {
        self.0
            .terms
            .iter()
            .map(|(&var, coef)| {
                let entries = coef
                    .iter()
                    .filter(|(&(i, j), _)| i <= j)
                    .map(|(&(i, j), &v)| (i, j, v))
                    .collect();
                (var, entries)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_follow_dense_algebra() {
        let mut a = AffineMatrix::zeros(2, 2);
        a.add_term(0, 0, 1, 2.0);
        a.add_term(1, 1, 0, -1.0);
        let m = DenseMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 3.0, 0.5]);
        let x = [0.7, -1.3];
        let right = a.mul_right(&m).unwrap().evaluate(&x);
        assert!((right - a.evaluate(&x) * &m).norm() < 1e-14);
        let l = DenseMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, -1.0, 4.0, 1.0]);
        let left = a.mul_left(&l).unwrap().evaluate(&x);
        assert!((left - &l * a.evaluate(&x)).norm() < 1e-14);
    }

    #[test]
    fn cancellation_drops_terms() {
        let mut a = AffineMatrix::zeros(1, 1);
        a.add_term(3, 0, 0, 1.5);
        a.add_term(3, 0, 0, -1.5);
        assert!(a.terms().is_empty());
    }

    #[test]
    fn symmetric_wrapper_rejects_asymmetry() {
        let mut a = AffineMatrix::zeros(2, 2);
        a.add_term(0, 0, 1, 1.0);
        assert!(AffineSymMatrix::new(a.clone()).is_err());
        a.add_term(0, 1, 0, 1.0);
        let s = AffineSymMatrix::new(a).unwrap();
        assert_eq!(s.upper_coefficients(), vec![(0, vec![(0, 1, 1.0)])]);
    }
}
