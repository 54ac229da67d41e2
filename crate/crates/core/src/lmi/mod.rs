//! LMI compiler for observer synthesis: decision variables, the block
//! matrices of both synthesis conditions, and their emission as an
//! [`SdpProblem`](crate::sdp::SdpProblem).

pub mod affine;
mod assemble;
pub mod multiplier;
pub mod registry;
mod result;

pub use affine::{AffineBlocks, AffineMatrix, AffineSymMatrix, VarId};
pub use assemble::{
    assemble, assemble_theorem1, assemble_theorem2, build_sigma, build_stacks, vertex_coefficients, CompiledProblem, DecisionVars,
    ProblemFingerprint, Stacks,
};
pub use multiplier::{build_multiplier, MultiplierLevel, MultiplierStructure};
pub use registry::{Family, VarOrigin, VarRegistry};
pub use result::{
    dissipation_matrix, extract_gain, synthesize, verify_synthesis, SolverDiagnostics, SynthesisOutcome, SynthesisResult, VerificationReport,
    Violation,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lipschitz::SlopeBounds;
use crate::matrixcore::MatrixError;
use crate::system::{BoundedSystem, DetailedSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("slope bounds are not normalized (nonzero lower bound)")]
    NotNormalized,
    #[error("{0} requires an empty output nonlinearity family")]
    CorollaryNeedsLinearOutput(Theorem),
    #[error("{count} vertices exceed the cap of {cap}; use T1 instead")]
    VertexCap { count: u128, cap: usize },
    #[error("missing bounds: {0}")]
    MissingBounds(String),
    #[error("system: {0}")]
    System(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("P is numerically singular (condition number {0:.3e})")]
    SingularP(f64),
    #[error("solver returned no solution: {0}")]
    NoSolution(String),
    #[error("sdp: {0}")]
    Sdp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// M ≺ 0, compiled as −M − εI ⪰ 0.
    NegDef,
    /// M ≻ 0, compiled as M − εI ⪰ 0.
    PosDef,
    PosSemiDef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub label: String,
    pub matrix: AffineSymMatrix,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    /// Single LMI with the bounds at their maxima.
    T1,
    /// One LMI per vertex of the slope box.
    T2,
    /// T1 for linear outputs.
    C1,
    /// T2 for linear outputs.
    C2,
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Theorem::T1 => "T1",
            Theorem::T2 => "T2",
            Theorem::C1 => "C1",
            Theorem::C2 => "C2",
        })
    }
}

impl Theorem {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" | "THEOREM1" => Some(Theorem::T1),
            "T2" | "THEOREM2" => Some(Theorem::T2),
            "C1" | "COROLLARY1" => Some(Theorem::C1),
            "C2" | "COROLLARY2" => Some(Theorem::C2),
            _ => None,
        }
    }

    pub fn is_vertex_form(&self) -> bool {
        matches!(self, Theorem::T2 | Theorem::C2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub theorem: Theorem,
    pub z_level: MultiplierLevel,
    pub s_level: MultiplierLevel,
    /// ε = margin_base · (1 + ‖constant part‖₂).
    pub margin_base: f64,
    pub vertex_cap: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            theorem: Theorem::T2,
            z_level: MultiplierLevel::FullGeneralized,
            s_level: MultiplierLevel::FullGeneralized,
            margin_base: 1e-7,
            vertex_cap: 4096,
        }
    }
}

/// A normalized system with its bounds and the compilation choices.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisProblem {
    pub system: DetailedSystem,
    pub f_bounds: SlopeBounds,
    pub g_bounds: SlopeBounds,
    pub options: SynthesisOptions,
}

impl SynthesisProblem {
    /// Uses `bs` as given; assembly fails unless its bounds are normalized.
    pub fn new(bs: &BoundedSystem, options: SynthesisOptions) -> Result<Self, LmiError> {
        bs.system.validate().map_err(|e| LmiError::System(e.0))?;
        let prob = Self {
            system: bs.system.clone(),
            f_bounds: bs.f_bounds.clone(),
            g_bounds: bs.g_bounds.clone(),
            options,
        };
        prob.check_bounds()?;
        Ok(prob)
    }

    /// Normalizes `bs` first.
    pub fn normalized(bs: &BoundedSystem, options: SynthesisOptions) -> Result<Self, LmiError> {
        Self::new(&crate::lipschitz::normalize(bs), options)
    }

    fn check_bounds(&self) -> Result<(), LmiError> {
        let s = &self.system;
        for (name, b, count, inner) in [
            ("f", &self.f_bounds, s.m(), s.nbar()),
            ("g", &self.g_bounds, s.r(), s.pbar()),
        ] {
            if b.components() != count || (count > 0 && b.inner_dim() != inner) {
                return Err(LmiError::MissingBounds(format!(
                    "{name} bounds are {}x{}, system needs {count}x{inner}",
                    b.components(),
                    b.inner_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn z_structure(&self) -> MultiplierStructure {
        MultiplierStructure {
            family: Family::Z,
            groups: self.system.m(),
            inner: self.system.nbar(),
            level: self.options.z_level,
        }
    }

    pub fn s_structure(&self) -> MultiplierStructure {
        MultiplierStructure {
            family: Family::S,
            groups: self.system.r(),
            inner: self.system.pbar(),
            level: self.options.s_level,
        }
    }

    pub fn vertex_count(&self) -> u128 {
        let bits = self.system.m() * self.system.nbar() + self.system.r() * self.system.pbar();
        if bits >= 127 {
            u128::MAX
        } else {
            1u128 << bits
        }
    }
}
