//! Dense real linear algebra for small symmetric and general matrices.
//!
//! Storage and factorizations are backed by `nalgebra`. This module adds the
//! pieces the LMI compiler and the interior-point solver lean on: a symmetric
//! matrix type whose upper triangle is authoritative, block assembly with
//! dimension checking, definiteness tests and SPD solves.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-major semantic, column-major storage dense matrix.
pub type DenseMatrix = DMatrix<f64>;
pub type DenseVector = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("symmetric eigensolver did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
}

pub(crate) fn dim_err(expected: impl Into<String>, found: impl Into<String>) -> MatrixError {
    MatrixError::DimensionMismatch {
        expected: expected.into(),
        found: found.into(),
    }
}

/// Numeric tolerances shared by the factorization helpers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericPolicy {
    /// Smallest Cholesky pivot (relative to the largest diagonal entry) that
    /// is trusted without an eigenvalue cross-check.
    pub pivot_floor: f64,
    /// Largest tolerated |a_ij - a_ji| when importing a dense matrix as symmetric.
    pub symmetry_tol: f64,
    /// Iteration cap for the symmetric eigensolver (0 = unlimited).
    pub eig_max_iter: usize,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            pivot_floor: 1e-12,
            symmetry_tol: 1e-12,
            eig_max_iter: 0,
        }
    }
}

/// Symmetric matrix. Entries are stored densely but the type guarantees
/// `a[(i, j)] == a[(j, i)]` bit-for-bit; every constructor mirrors the upper
/// triangle onto the lower one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DenseMatrix", try_from = "DenseMatrix")]
pub struct SymMatrix(DenseMatrix);

impl From<SymMatrix> for DenseMatrix {
    fn from(s: SymMatrix) -> Self {
        s.0
    }
}

impl TryFrom<DenseMatrix> for SymMatrix {
    type Error = MatrixError;
    fn try_from(m: DenseMatrix) -> Result<Self, Self::Error> {
        SymMatrix::try_from_dense(m, NumericPolicy::default().symmetry_tol)
    }
}

impl SymMatrix {
    /// Builds from the upper triangle of `m`; the lower triangle is ignored.
    pub fn from_upper(mut m: DenseMatrix) -> Result<Self, MatrixError> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(dim_err("non-empty square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(Self(m))
    }

    /// Accepts a dense matrix whose asymmetry is within `tol` (relative to
    /// max(1, max |a_ij|)); the result is the symmetric part.
    pub fn try_from_dense(m: DenseMatrix, tol: f64) -> Result<Self, MatrixError> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(dim_err("non-empty square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let asym = asymmetry(&m);
        let scale = m.amax().max(1.0);
        if asym > tol * scale {
            return Err(MatrixError::NotSymmetric { asymmetry: asym });
        }
        Ok(Self::symmetric_part(&m))
    }

    /// (M + Mᵀ)/2, always symmetric.
    pub fn symmetric_part(m: &DenseMatrix) -> Self {
        let n = m.nrows();
        let mut out = m.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Self(out)
    }

    pub fn identity(n: usize) -> Self {
        Self(DenseMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DenseMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DenseMatrix::from_diagonal(&DenseVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets both (i, j) and (j, i).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(&self.0 * alpha)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `self - shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= shift;
        }
        Self(m)
    }

    /// Congruence `Tᵀ · self · T`, symmetric by construction.
    pub fn congruence(&self, t: &DenseMatrix) -> Self {
        Self::symmetric_part(&(t.transpose() * &self.0 * t))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Trace inner product ⟨A, B⟩ = tr(A B).
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn eigvals(&self) -> Result<Vec<f64>, MatrixError> {
        sym_eigvals(self)
    }

    pub fn lambda_min(&self) -> Result<f64, MatrixError> {
        Ok(self.eigvals()?[0])
    }

    pub fn lambda_max(&self) -> Result<f64, MatrixError> {
        Ok(*self.eigvals()?.last().expect("non-empty"))
    }
}

fn asymmetry(m: &DenseMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Column `i` (0-based) of the s×s identity.
pub fn canonical_basis(s: usize, i: usize) -> Result<DenseMatrix, MatrixError> {
    if i >= s {
        return Err(MatrixError::IndexOutOfRange { index: i, dim: s });
    }
    let mut v = DenseMatrix::zeros(s, 1);
    v[(i, 0)] = 1.0;
    Ok(v)
}

/// `e_m(i) e_nᵀ(j)`: a single one at (i, j) (0-based) in an m×n matrix.
pub fn unit_outer(m: usize, n: usize, i: usize, j: usize) -> Result<DenseMatrix, MatrixError> {
    Ok(canonical_basis(m, i)? * canonical_basis(n, j)?.transpose())
}

/// Ascending eigenvalues and the matching orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymEigen {
    pub fn reconstruct(&self) -> DenseMatrix {
        let d = DenseMatrix::from_diagonal(&DenseVector::from_column_slice(&self.values));
        &self.vectors * d * self.vectors.transpose()
    }
}

pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen, MatrixError> {
    sym_eigen_with(m, &NumericPolicy::default())
}

/// Householder tridiagonalization followed by implicit symmetric QR (nalgebra).
pub fn sym_eigen_with(m: &SymMatrix, policy: &NumericPolicy) -> Result<SymEigen, MatrixError> {
    let eig = SymmetricEigen::try_new(m.as_dense().clone(), f64::EPSILON, policy.eig_max_iter)
        .ok_or_else(|| MatrixError::NoConvergence { residual: f64::NAN })?;
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    let out = SymEigen { values, vectors };
    let residual = (out.reconstruct() - m.as_dense()).norm();
    if !residual.is_finite() || residual > 1e-10 * m.frobenius_norm().max(1.0) {
        return Err(MatrixError::NoConvergence { residual });
    }
    Ok(out)
}

/// Ascending eigenvalues.
pub fn sym_eigvals(m: &SymMatrix) -> Result<Vec<f64>, MatrixError> {
    Ok(sym_eigen(m)?.values)
}

/// True iff λ_min(M) > margin. Cholesky of M − margin·I decides the clear
/// cases; pivots below the policy floor fall back to the eigenvalues.
pub fn is_pd(m: &SymMatrix, margin: f64) -> bool {
    is_pd_with(m, margin, &NumericPolicy::default())
}

pub fn is_pd_with(m: &SymMatrix, margin: f64, policy: &NumericPolicy) -> bool {
    let shifted = m.shifted(margin);
    let scale = shifted
        .as_dense()
        .diagonal()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    if let Some(chol) = Cholesky::new(shifted.as_dense().clone()) {
        let l = chol.l_dirty();
        let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot > policy.pivot_floor * scale {
            return true;
        }
    }
    match sym_eigvals(m) {
        Ok(vals) => vals[0] > margin,
        Err(_) => false,
    }
}

/// Solves M X = B for SPD M by Cholesky.
pub fn solve_spd(m: &SymMatrix, b: &DenseMatrix) -> Result<DenseMatrix, MatrixError> {
    if b.nrows() != m.dim() {
        return Err(dim_err(format!("{} rows", m.dim()), format!("{} rows", b.nrows())));
    }
    let chol = Cholesky::new(m.as_dense().clone()).ok_or(MatrixError::NotPositiveDefinite)?;
    let mut x = chol.solve(b);
    // one step of iterative refinement
    let r = b - m.as_dense() * &x;
    x += chol.solve(&r);
    Ok(x)
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Block partition of a matrix; unplaced cells are zero.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
    blocks: BTreeMap<(usize, usize), DenseMatrix>,
}

impl BlockLayout {
    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Self {
        Self {
            row_sizes,
            col_sizes,
            blocks: BTreeMap::new(),
        }
    }

    /// Square symmetric partition.
    pub fn square(sizes: Vec<usize>) -> Self {
        Self::new(sizes.clone(), sizes)
    }

    pub fn place(&mut self, br: usize, bc: usize, m: DenseMatrix) -> Result<&mut Self, MatrixError> {
        let rows = *self
            .row_sizes
            .get(br)
            .ok_or(MatrixError::IndexOutOfRange { index: br, dim: self.row_sizes.len() })?;
        let cols = *self
            .col_sizes
            .get(bc)
            .ok_or(MatrixError::IndexOutOfRange { index: bc, dim: self.col_sizes.len() })?;
        if m.nrows() != rows || m.ncols() != cols {
            return Err(dim_err(
                format!("{rows}x{cols} at block ({br},{bc})"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        self.blocks.insert((br, bc), m);
        Ok(self)
    }

    /// Places `m` at (br, bc) and `mᵀ` at (bc, br).
    pub fn place_sym(&mut self, br: usize, bc: usize, m: DenseMatrix) -> Result<&mut Self, MatrixError> {
        if br != bc {
            self.place(bc, br, m.transpose())?;
        }
        self.place(br, bc, m)
    }

    pub fn rows(&self) -> usize {
        self.row_sizes.iter().sum()
    }

    pub fn cols(&self) -> usize {
        self.col_sizes.iter().sum()
    }

    pub fn assemble(&self) -> DenseMatrix {
        let row_off = offsets(&self.row_sizes);
        let col_off = offsets(&self.col_sizes);
        let mut out = DenseMatrix::zeros(self.rows(), self.cols());
        for (&(br, bc), m) in &self.blocks {
            out.view_mut((row_off[br], col_off[bc]), (m.nrows(), m.ncols())).copy_from(m);
        }
        out
    }
}

pub(crate) fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    sizes
        .iter()
        .map(|s| {
            let o = acc;
            acc += s;
            o
        })
        .collect()
}

/// Block-diagonal stacking of square or rectangular blocks.
pub fn block_diag(blocks: &[DenseMatrix]) -> DenseMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stacking; all blocks must share the column count.
pub fn vstack(blocks: &[DenseMatrix], cols: usize) -> Result<DenseMatrix, MatrixError> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        if b.ncols() != cols {
            return Err(dim_err(format!("{cols} columns"), format!("{} columns", b.ncols())));
        }
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    Ok(out)
}

/// Builds a matrix from row lists, the inline format used by scenario files.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DenseMatrix, MatrixError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(dim_err("rows of equal length", "ragged rows"));
    }
    Ok(DenseMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn canonical_basis_examples() {
        // 0-based: position 1 of 3
        assert_eq!(canonical_basis(3, 1).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(canonical_basis(1, 0).unwrap().as_slice(), &[1.0]);
        assert_eq!(canonical_basis(4, 3).unwrap().as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(canonical_basis(3, 3), Err(MatrixError::IndexOutOfRange { .. })));
    }

    #[test]
    fn unit_outer_examples() {
        let h = unit_outer(2, 3, 0, 2).unwrap();
        assert_eq!(h.sum(), 1.0);
        assert_eq!(h[(0, 2)], 1.0);
        assert_eq!(unit_outer(1, 1, 0, 0).unwrap()[(0, 0)], 1.0);
        let d = unit_outer(3, 3, 1, 1).unwrap();
        assert_eq!(d[(1, 1)], 1.0);
        assert_eq!(d.sum(), 1.0);
        assert!(unit_outer(2, 2, 0, 2).is_err());
    }

    #[test]
    fn eigvals_small_cases() {
        let d = SymMatrix::from_diagonal(&[3.0, 1.0, 2.0]);
        assert_eq!(d.eigvals().unwrap(), vec![1.0, 2.0, 3.0]);
        let swap = SymMatrix::from_upper(DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let v = swap.eigvals().unwrap();
        assert_relative_eq!(v[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn is_pd_examples() {
        assert!(is_pd(&SymMatrix::identity(3), 0.0));
        assert!(!is_pd(&SymMatrix::zeros(2), 0.0));
        let m = SymMatrix::from_upper(DenseMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!(is_pd(&m, 0.9));
        assert!(!is_pd(&m, 1.0));
    }

    #[test]
    fn solve_spd_examples() {
        let b = DenseMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(solve_spd(&SymMatrix::identity(3), &b).unwrap(), b);
        let m = SymMatrix::from_diagonal(&[2.0, 4.0]);
        let x = solve_spd(&m, &DenseMatrix::from_column_slice(2, 1, &[2.0, 8.0])).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0);
        assert_relative_eq!(x[(1, 0)], 2.0);
        let neg = SymMatrix::from_diagonal(&[1.0, -1.0]);
        assert_eq!(
            solve_spd(&neg, &DenseMatrix::zeros(2, 1)),
            Err(MatrixError::NotPositiveDefinite)
        );
    }

    #[test]
    fn layout_rejects_bad_block() {
        let mut l = BlockLayout::square(vec![2, 1]);
        assert!(l.place(0, 1, DenseMatrix::zeros(2, 2)).is_err());
        assert!(l.place(2, 0, DenseMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn layout_identities_and_single_cell() {
        let mut l = BlockLayout::square(vec![2, 3]);
        l.place(0, 0, DenseMatrix::identity(2, 2)).unwrap();
        l.place(1, 1, DenseMatrix::identity(3, 3)).unwrap();
        assert_eq!(l.assemble(), DenseMatrix::identity(5, 5));

        let blk = DenseMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let mut single = BlockLayout::new(vec![2], vec![3]);
        single.place(0, 0, blk.clone()).unwrap();
        assert_eq!(single.assemble(), blk);
    }

    #[test]
    fn from_upper_ignores_lower() {
        let m = SymMatrix::from_upper(DenseMatrix::from_row_slice(2, 2, &[1.0, 5.0, -7.0, 2.0])).unwrap();
        assert_eq!(m.get(1, 0), 5.0);
        assert!(SymMatrix::try_from_dense(DenseMatrix::from_row_slice(2, 2, &[1.0, 5.0, -7.0, 2.0]), 1e-12).is_err());
    }
}
