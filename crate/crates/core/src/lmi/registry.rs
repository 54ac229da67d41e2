use serde::{Deserialize, Serialize};

use super::affine::{AffineMatrix, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Multiplier of the state nonlinearity (ℤ).
    Z,
    /// Multiplier of the output nonlinearity (𝕊).
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarOrigin {
    P { row: usize, col: usize },
    R { row: usize, col: usize },
    Mu,
    /// Entry (row, col) of the block at cell (block_row, block_col).
    Multiplier {
        family: Family,
        block_row: usize,
        block_col: usize,
        row: usize,
        col: usize,
    },
    MultiplierScale { family: Family },
}

/// Ordered scalar decision variables, each tagged with where it came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarRegistry {
    origins: Vec<VarOrigin>,
}

impl VarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn origin(&self, id: VarId) -> Option<&VarOrigin> {
        self.origins.get(id)
    }

    pub fn origins(&self) -> &[VarOrigin] {
        &self.origins
    }

    pub fn scalar(&mut self, origin: VarOrigin) -> VarId {
        self.origins.push(origin);
        self.origins.len() - 1
    }

    /// Symmetric matrix variable; only (i ≤ j) entries are registered and
    /// the mirrored entry aliases the same scalar.
    pub fn symmetric(&mut self, dim: usize, origin: impl Fn(usize, usize) -> VarOrigin) -> AffineMatrix {
        let mut m = AffineMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..=j {
                let id = self.scalar(origin(i, j));
                m.add_term(id, i, j, 1.0);
                if i != j {
                    m.add_term(id, j, i, 1.0);
                }
            }
        }
        m
    }

    pub fn general(&mut self, rows: usize, cols: usize, origin: impl Fn(usize, usize) -> VarOrigin) -> AffineMatrix {
        let mut m = AffineMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let id = self.scalar(origin(i, j));
                m.add_term(id, i, j, 1.0);
            }
        }
        m
    }

    pub fn count_where(&self, pred: impl Fn(&VarOrigin) -> bool) -> usize {
        self.origins.iter().filter(|o| pred(o)).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_aliases_mirror() {
        let mut reg = VarRegistry::new();
        let p = reg.symmetric(3, |row, col| VarOrigin::P { row, col });
        assert_eq!(reg.len(), 6);
        let x: Vec<f64> = (1..=6).map(f64::from).collect();
        let v = p.evaluate(&x);
        assert_eq!(v, v.transpose());
        for o in reg.origins() {
            if let VarOrigin::P { row, col } = o {
                assert!(row <= col);
            }
        }
    }

    #[test]
    fn general_registers_every_entry() {
        let mut reg = VarRegistry::new();
        reg.scalar(VarOrigin::Mu);
        let r = reg.general(2, 3, |row, col| VarOrigin::R { row, col });
        assert_eq!(reg.len(), 7);
        assert_eq!(r.vars().collect::<Vec<_>>(), (1..7).collect::<Vec<_>>());
    }
}
