//! Multiplier matrices ℤ (state family) and 𝕊 (output family).
//!
//! The multiplier is partitioned into `groups · inner` cells of size
//! `inner × inner`; cell k = i·inner + j belongs to component i, slot j.
//! Diagonal cells are positive definite, off-diagonal cells positive
//! semidefinite. Every cell is symmetric, so the mirrored cell (l, k)
//! reuses the variables of (k, l).

use serde::{Deserialize, Serialize};

use super::affine::{AffineBlocks, AffineMatrix, AffineSymMatrix};
use super::registry::{Family, VarOrigin, VarRegistry};
use super::{LmiConstraint, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierLevel {
    ScalarIdentity,
    BlockDiagonal,
    FullGeneralized,
}

impl MultiplierLevel {
    pub const ALL: [MultiplierLevel; 3] = [Self::ScalarIdentity, Self::BlockDiagonal, Self::FullGeneralized];

    pub fn name(&self) -> &'static str {
        match self {
            Self::ScalarIdentity => "scalar-identity",
            Self::BlockDiagonal => "block-diagonal",
            Self::FullGeneralized => "full-generalized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s || format!("{l:?}").eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplierStructure {
    pub family: Family,
    /// Number of components (m or r).
    pub groups: usize,
    /// Inner dimension (n̄ or p̄).
    pub inner: usize,
    pub level: MultiplierLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Diagonal,
    WithinGroup,
    CrossGroup,
}

impl MultiplierStructure {
    pub fn cells(&self) -> usize {
        self.groups * self.inner
    }

    pub fn dim(&self) -> usize {
        self.cells() * self.inner
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    pub fn cell_kind(&self, k: usize, l: usize) -> CellKind {
        if k == l {
            CellKind::Diagonal
        } else if k / self.inner == l / self.inner {
            CellKind::WithinGroup
        } else {
            CellKind::CrossGroup
        }
    }

    /// Upper-triangle cells (k ≤ l) that carry variables at this level.
    pub fn active_cells(&self) -> Vec<(usize, usize)> {
        let n = self.cells();
        match self.level {
            MultiplierLevel::ScalarIdentity => vec![],
            MultiplierLevel::BlockDiagonal => (0..n).map(|k| (k, k)).collect(),
            MultiplierLevel::FullGeneralized => (0..n).flat_map(|l| (0..=l).map(move |k| (k, l))).collect(),
        }
    }

    fn symbol(&self) -> &'static str {
        match self.family {
            Family::Z => "Z",
            Family::S => "S",
        }
    }
}

/// Builds the multiplier and its side constraints (relations carry no
/// margin; the caller applies ε).
pub fn build_multiplier(reg: &mut VarRegistry, st: &MultiplierStructure) -> (AffineSymMatrix, Vec<LmiConstraint>) {
    let dim = st.dim();
    let sym = st.symbol();
    if st.level == MultiplierLevel::ScalarIdentity {
        let zeta = reg.scalar(VarOrigin::MultiplierScale { family: st.family });
        let m = AffineSymMatrix::new(AffineMatrix::scalar_identity(zeta, dim)).expect("identity is symmetric");
        let side = LmiConstraint {
            label: format!("{sym} scale > 0"),
            matrix: AffineSymMatrix::new(AffineMatrix::scalar_identity(zeta, 1)).expect("1x1"),
            relation: Relation::PosDef,
        };
        return (m, vec![side]);
    }

    let inner = st.inner;
    let mut blocks = AffineBlocks::square(vec![inner; st.cells()]);
    let mut side = Vec::new();
    for (k, l) in st.active_cells() {
        let family = st.family;
        let cell = reg.symmetric(inner, |row, col| VarOrigin::Multiplier {
            family,
            block_row: k,
            block_col: l,
            row,
            col,
        });
        let (relation, tag) = match st.cell_kind(k, l) {
            CellKind::Diagonal => (Relation::PosDef, "> 0"),
            _ => (Relation::PosSemiDef, ">= 0"),
        };
        side.push(LmiConstraint {
            label: format!("{sym}[{},{}] {tag}", k + 1, l + 1),
            matrix: AffineSymMatrix::new(cell.clone()).expect("registry matrix is symmetric"),
            relation,
        });
        blocks.place(k, l, cell.clone()).expect("cell size");
        if k != l {
            blocks.place(l, k, cell).expect("cell size");
        }
    }
    let m = AffineSymMatrix::new(blocks.assemble()).expect("mirrored symmetric cells");
    if st.level == MultiplierLevel::FullGeneralized && st.cells() > 1 {
        side.push(LmiConstraint {
            label: format!("{sym} > 0"),
            matrix: m.clone(),
            relation: Relation::PosDef,
        });
    }
    (m, side)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn structure(level: MultiplierLevel) -> MultiplierStructure {
        MultiplierStructure {
            family: Family::Z,
            groups: 2,
            inner: 2,
            level,
        }
    }

    #[test]
    fn scalar_identity_uses_one_variable() {
        let mut reg = VarRegistry::new();
        let st = MultiplierStructure {
            family: Family::Z,
            groups: 1,
            inner: 2,
            level: MultiplierLevel::ScalarIdentity,
        };
        let (z, side) = build_multiplier(&mut reg, &st);
        assert_eq!(reg.len(), 1);
        assert_eq!(z.dim(), 4);
        assert_eq!(z.evaluate(&[3.0]).as_dense(), &(crate::matrixcore::DenseMatrix::identity(4, 4) * 3.0));
        assert_eq!(side.len(), 1);
    }

    #[test]
    fn block_diagonal_has_four_cells() {
        let mut reg = VarRegistry::new();
        let (z, side) = build_multiplier(&mut reg, &structure(MultiplierLevel::BlockDiagonal));
        assert_eq!(z.dim(), 8);
        assert_eq!(side.len(), 4);
        assert_eq!(reg.len(), 4 * 3);
        let v = z.evaluate(&vec![1.0; reg.len()]);
        assert_eq!(v.get(0, 2), 0.0);
        assert_eq!(v.get(1, 0), 1.0);
    }

    #[test]
    fn full_generalized_cell_census() {
        let st = structure(MultiplierLevel::FullGeneralized);
        let cells = st.active_cells();
        let count = |kind| cells.iter().filter(|&&(k, l)| st.cell_kind(k, l) == kind).count();
        assert_eq!(count(CellKind::Diagonal), 4);
        assert_eq!(count(CellKind::WithinGroup), 2);
        assert_eq!(count(CellKind::CrossGroup), 4);
        let mut reg = VarRegistry::new();
        let (z, side) = build_multiplier(&mut reg, &st);
        assert_eq!(reg.len(), 10 * 3);
        assert_eq!(side.len(), 11);
        let x: Vec<f64> = (0..reg.len()).map(|i| i as f64).collect();
        let v = z.evaluate(&x);
        assert_eq!(v.get(0, 4), v.get(4, 0));
        assert_eq!(v.get(0, 5), v.get(4, 1));
    }

    #[test]
    fn level_names_parse() {
        for l in MultiplierLevel::ALL {
            assert_eq!(MultiplierLevel::parse(l.name()), Some(l));
        }
        assert_eq!(MultiplierLevel::parse("nope"), None);
    }
}
