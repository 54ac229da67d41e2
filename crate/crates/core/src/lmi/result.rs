use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble, vertex_coefficients, CompiledProblem, ProblemFingerprint};
use super::{LmiError, SynthesisProblem};
use crate::matrixcore::{solve_spd, spectral_radius, BlockLayout, DenseMatrix, SymMatrix};
use crate::sdp::{solve, SdpSolution, SolveOptions, SolveStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub dual_objective: f64,
    pub min_block_eig: f64,
    pub message: String,
}

impl SolverDiagnostics {
    pub fn from_solution(sol: &SdpSolution) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            objective: sol.objective,
            dual_objective: sol.dual_objective,
            min_block_eig: sol.block_min_eig.iter().copied().fold(f64::INFINITY, f64::min),
            message: sol.message.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub p: SymMatrix,
    pub r: DenseMatrix,
    /// Observer gain, n×p.
    pub l: DenseMatrix,
    pub mu: f64,
    /// λ_max(P), the weight on ‖e₀‖² in the attenuation bound.
    pub nu: f64,
    pub z: Option<DenseMatrix>,
    pub s: Option<DenseMatrix>,
    pub diagnostics: SolverDiagnostics,
    pub fingerprint: ProblemFingerprint,
    pub verification: Option<VerificationReport>,
}

impl SynthesisResult {
    pub fn sqrt_mu(&self) -> f64 {
        self.mu.sqrt()
    }
}

/// Reads P, R, μ, the multipliers and the gain L = P⁻¹Rᵀ from a solution.
pub fn extract_gain(compiled: &CompiledProblem, sol: &SdpSolution) -> Result<SynthesisResult, LmiError> {
    if !sol.status.has_solution() {
        return Err(LmiError::NoSolution(sol.status.label().into()));
    }
    let x = &sol.x;
    let p = SymMatrix::from_upper(compiled.vars.p.evaluate(x))?;
    let eig = p.eigvals()?;
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    if !(lo > 0.0) || hi / lo > 1e12 {
        return Err(LmiError::SingularP(if lo > 0.0 { hi / lo } else { f64::INFINITY }));
    }
    let r = compiled.vars.r.evaluate(x);
    let l = solve_spd(&p, &r.transpose())?;
    Ok(SynthesisResult {
        p,
        r,
        l,
        mu: x[compiled.vars.mu],
        nu: hi,
        z: compiled.z.as_ref().map(|z| z.evaluate(x).into_dense()),
        s: compiled.s.as_ref().map(|s| s.evaluate(x).into_dense()),
        diagnostics: SolverDiagnostics::from_solution(sol),
        fingerprint: compiled.fingerprint.clone(),
        verification: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub f_coef: Vec<Vec<f64>>,
    pub g_coef: Vec<Vec<f64>>,
    pub lambda_max: f64,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub vertices: usize,
    pub tol: f64,
    pub max_lambda: f64,
    pub max_spectral_radius: f64,
    pub violation_count: usize,
    /// The first few offending coefficient sets.
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

const KEEP_VIOLATIONS: usize = 20;
const VERTEX_CHECK_CAP: u128 = 4096;

/// The dissipation matrix [[I−P+𝔸ᵀP𝔸, 𝔸ᵀP𝔼], [⋆, 𝔼ᵀP𝔼−μI]] at one coefficient set.
pub fn dissipation_matrix(
    prob: &SynthesisProblem,
    p: &SymMatrix,
    l: &DenseMatrix,
    mu: f64,
    fcoef: &[Vec<f64>],
    gcoef: &[Vec<f64>],
) -> (SymMatrix, DenseMatrix) {
    let sys = &prob.system;
    let a = sys.error_transition(l, fcoef, gcoef);
    let e = sys.error_noise(l);
    let pm = p.as_dense();
    let (n, q) = (sys.n(), sys.q());
    let mut lay = BlockLayout::square(vec![n, q]);
    lay.place(0, 0, DenseMatrix::identity(n, n) - pm + a.transpose() * pm * &a).expect("n×n");
    lay.place_sym(0, 1, a.transpose() * pm * &e).expect("n×q");
    lay.place(1, 1, e.transpose() * pm * &e - DenseMatrix::identity(q, q) * mu).expect("q×q");
    (SymMatrix::symmetric_part(&lay.assemble()), a)
}

/// Checks the dissipation inequality and stability of the error map at every
/// vertex of the slope box (when there are at most 4096) and at `samples`
/// uniform draws. The matrix is convex in the coefficients, so the vertex
/// checks cover the whole box.
pub fn verify_synthesis(result: &SynthesisResult, prob: &SynthesisProblem, samples: usize, seed: u64) -> VerificationReport {
    let tol = 1e-9 * result.p.lambda_max().unwrap_or(1.0).max(1.0);
    let mut rep = VerificationReport {
        samples: 0,
        vertices: 0,
        tol,
        max_lambda: f64::NEG_INFINITY,
        max_spectral_radius: 0.0,
        violation_count: 0,
        violations: Vec::new(),
    };
    let check = |fc: Vec<Vec<f64>>, gc: Vec<Vec<f64>>, rep: &mut VerificationReport| {
        let (q, a) = dissipation_matrix(prob, &result.p, &result.l, result.mu, &fc, &gc);
        let lam = q.lambda_max().unwrap_or(f64::INFINITY);
        let rho = spectral_radius(&a);
        rep.max_lambda = rep.max_lambda.max(lam);
        rep.max_spectral_radius = rep.max_spectral_radius.max(rho);
        if !(lam <= tol) || !(rho < 1.0) {
            rep.violation_count += 1;
            if rep.violations.len() < KEEP_VIOLATIONS {
                rep.violations.push(Violation {
                    f_coef: fc,
                    g_coef: gc,
                    lambda_max: lam,
                    spectral_radius: rho,
                });
            }
        }
    };

    let count = prob.vertex_count();
    if count <= VERTEX_CHECK_CAP {
        for v in 0..count {
            let (fc, gc) = vertex_coefficients(&prob.f_bounds, &prob.g_bounds, v);
            check(fc, gc, &mut rep);
            rep.vertices += 1;
        }
    }
    if count == 1 {
        return rep;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        b.iter()
            .map(|row| row.iter().map(|&u| u * rng.random::<f64>()).collect())
            .collect()
    };
    for _ in 0..samples {
        let fc = draw(&prob.f_bounds.upper);
        let gc = draw(&prob.g_bounds.upper);
        check(fc, gc, &mut rep);
        rep.samples += 1;
    }
    rep
}

/// Outcome of compiling and solving one synthesis problem.
#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub compiled: CompiledProblem,
    pub solution: SdpSolution,
    pub result: Option<SynthesisResult>,
}

impl SynthesisOutcome {
    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }
}

/// Assembles, solves, extracts the gain and (for `verify_samples > 0` or a
/// linear system) verifies it.
pub fn synthesize(
    prob: &SynthesisProblem,
    solve_opts: &SolveOptions,
    verify_samples: usize,
    seed: u64,
) -> Result<SynthesisOutcome, LmiError> {
    let compiled = assemble(prob)?;
    let solution = solve(&compiled.sdp, solve_opts).map_err(|e| LmiError::Sdp(e.to_string()))?;
    let result = if solution.status.has_solution() {
        let mut r = extract_gain(&compiled, &solution)?;
        r.verification = Some(verify_synthesis(&r, prob, verify_samples, seed));
        Some(r)
    } else {
        None
    };
    Ok(SynthesisOutcome {
        compiled,
        solution,
        result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{InfeasibilityKind, SdpProblem};

    fn fake(x: Vec<f64>, status: SolveStatus) -> SdpSolution {
        SdpSolution {
            status,
            x,
            dual: vec![],
            objective: 0.0,
            dual_objective: 0.0,
            block_min_eig: vec![],
            iterations: 0,
            certificate_residual: None,
            trace: vec![],
            message: String::new(),
        }
    }

    fn compiled_2x1() -> CompiledProblem {
        use super::super::assemble::DecisionVars;
        use super::super::registry::{VarOrigin, VarRegistry};
        let mut reg = VarRegistry::new();
        let p = reg.symmetric(2, |row, col| VarOrigin::P { row, col });
        let r = reg.general(1, 2, |row, col| VarOrigin::R { row, col });
        let mu = reg.scalar(VarOrigin::Mu);
        CompiledProblem {
            sdp: SdpProblem::new(reg.len(), vec![0.0; reg.len()]),
            registry: reg,
            vars: DecisionVars { p, r, mu },
            z: None,
            s: None,
            constraints: vec![],
            epsilon: 0.0,
            fingerprint: ProblemFingerprint {
                theorem: super::super::Theorem::C2,
                n: 2,
                p: 1,
                q: 1,
                m: 0,
                r: 0,
                nbar: 0,
                pbar: 0,
                variables: 6,
                constraints: 0,
                total_dim: 0,
                z_level: super::super::MultiplierLevel::BlockDiagonal,
                s_level: super::super::MultiplierLevel::BlockDiagonal,
                vertices: 1,
                epsilon: 0.0,
            },
        }
    }

    #[test]
    fn gain_from_diagonal_p() {
        // P = diag(2, 4) → entries (0,0), (0,1), (1,1); Rᵀ = [2; 8]
        let c = compiled_2x1();
        let r = extract_gain(&c, &fake(vec![2.0, 0.0, 4.0, 2.0, 8.0, 0.5], SolveStatus::Optimal)).unwrap();
        assert!((r.l[(0, 0)] - 1.0).abs() < 1e-12 && (r.l[(1, 0)] - 2.0).abs() < 1e-12);
        assert_eq!(r.nu, 4.0);
        assert_eq!(r.mu, 0.5);
    }

    #[test]
    fn identity_p_gives_r_transpose() {
        let c = compiled_2x1();
        let r = extract_gain(&c, &fake(vec![1.0, 0.0, 1.0, -3.0, 0.25, 1.0], SolveStatus::Feasible)).unwrap();
        assert_eq!(r.l, r.r.transpose());
    }

    #[test]
    fn refuses_singular_or_missing_solutions() {
        let c = compiled_2x1();
        let sing = extract_gain(&c, &fake(vec![1.0, 0.0, 1e-14, 0.0, 0.0, 1.0], SolveStatus::Optimal));
        assert!(matches!(sing, Err(LmiError::SingularP(_))));
        let inf = extract_gain(&c, &fake(vec![0.0; 6], SolveStatus::Infeasible(InfeasibilityKind::Primal)));
        assert!(matches!(inf, Err(LmiError::NoSolution(_))));
    }
}
