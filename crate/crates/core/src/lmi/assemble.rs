use serde::{Deserialize, Serialize};

use super::affine::{AffineBlocks, AffineMatrix, AffineSymMatrix, VarId};
use super::multiplier::{build_multiplier, MultiplierLevel, MultiplierStructure};
use super::registry::{VarOrigin, VarRegistry};
use super::{LmiConstraint, LmiError, Relation, SynthesisProblem, Theorem};
use crate::lipschitz::SlopeBounds;
use crate::matrixcore::{DenseMatrix, SymMatrix};
use crate::sdp::{LmiBlock, SdpProblem};
use crate::system::DetailedSystem;

/// P (n×n symmetric), R (p×n) and μ.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVars {
    pub p: AffineMatrix,
    pub r: AffineMatrix,
    pub mu: VarId,
}

impl DecisionVars {
    pub fn register(reg: &mut VarRegistry, sys: &DetailedSystem) -> Self {
        let p = reg.symmetric(sys.n(), |row, col| VarOrigin::P { row, col });
        let r = reg.general(sys.p(), sys.n(), |row, col| VarOrigin::R { row, col });
        let mu = reg.scalar(VarOrigin::Mu);
        Self { p, r, mu }
    }
}

/// Σ = [[I−P, 0, AᵀP−CᵀR], [0, −μI, EᵀP−DᵀR], [PA−RᵀC, PE−RᵀD, −P]].
pub fn build_sigma(vars: &DecisionVars, sys: &DetailedSystem) -> Result<AffineSymMatrix, LmiError> {
    let (n, q) = (sys.n(), sys.q());
    let mut b = AffineBlocks::square(vec![n, q, n]);
    let i_minus_p = AffineMatrix::constant(DenseMatrix::identity(n, n)).sub(&vars.p)?;
    b.place(0, 0, i_minus_p)?;
    b.place(1, 1, AffineMatrix::scalar_identity(vars.mu, q).scale(-1.0))?;
    b.place(2, 2, vars.p.scale(-1.0))?;
    let pa_rc = vars.p.mul_right(&sys.a)?.sub(&vars.r.transpose().mul_right(&sys.c)?)?;
    let pe_rd = vars.p.mul_right(&sys.e)?.sub(&vars.r.transpose().mul_right(&sys.d)?)?;
    b.place_sym(2, 0, pa_rc)?;
    b.place_sym(2, 1, pe_rd)?;
    Ok(AffineSymMatrix::new(b.assemble())?)
}

/// Stacked blocks of both nonlinearity families. Each family is split into
/// cells (i, j), lexicographic, each `inner` rows high and `2n+q` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct Stacks {
    /// 𝕌: cell (i, j) = [0, 0, (PG𝓗ᵢⱼ)ᵀ].
    pub u: AffineMatrix,
    /// 𝕄: cell (i, j) = [0, 0, (−RᵀF𝓖ᵢⱼ)ᵀ].
    pub m: AffineMatrix,
    /// ℍᵢ = [Fᵢ, 0, 0] per component.
    pub h_blocks: Vec<DenseMatrix>,
    /// 𝔾ᵢ = [Gᵢ, 0, 0] per component.
    pub g_blocks: Vec<DenseMatrix>,
    pub nbar: usize,
    pub pbar: usize,
    pub width: usize,
}

impl Stacks {
    /// ℍΦ for the given f coefficients: cell (i, j) = f_ij ℍᵢ.
    pub fn h_phi(&self, coef: &[Vec<f64>]) -> DenseMatrix {
        Self::scaled_stack(&self.h_blocks, self.nbar, coef, self.width)
    }

    /// 𝔾Ψ for the given g coefficients.
    pub fn g_psi(&self, coef: &[Vec<f64>]) -> DenseMatrix {
        Self::scaled_stack(&self.g_blocks, self.pbar, coef, self.width)
    }

    fn scaled_stack(blocks: &[DenseMatrix], inner: usize, coef: &[Vec<f64>], width: usize) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(blocks.len() * inner * inner, width);
        for (i, hb) in blocks.iter().enumerate() {
            for j in 0..inner {
                let r0 = (i * inner + j) * inner;
                out.view_mut((r0, 0), (inner, width)).copy_from(&(hb * coef[i][j]));
            }
        }
        out
    }
}

fn padded(left: &DenseMatrix, width: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(left.nrows(), width);
    out.view_mut((0, 0), (left.nrows(), left.ncols())).copy_from(left);
    out
}

pub fn build_stacks(vars: &DecisionVars, sys: &DetailedSystem) -> Result<Stacks, LmiError> {
    let (n, q) = (sys.n(), sys.q());
    let width = 2 * n + q;
    let (nbar, pbar) = (sys.nbar(), sys.pbar());

    let mut ub = AffineBlocks::new(vec![nbar; sys.m() * nbar], vec![n + q, n]);
    for i in 0..sys.m() {
        for j in 0..nbar {
            // (G𝓗ᵢⱼ)ᵀP: only row j is nonzero and equals G[:, i]ᵀP.
            let mut sel = DenseMatrix::zeros(nbar, n);
            sel.row_mut(j).copy_from(&sys.g.column(i).transpose());
            ub.place(i * nbar + j, 1, vars.p.mul_left(&sel)?)?;
        }
    }
    let mut mb = AffineBlocks::new(vec![pbar; sys.r() * pbar], vec![n + q, n]);
    for i in 0..sys.r() {
        for j in 0..pbar {
            // (−RᵀF𝓖ᵢⱼ)ᵀ = −(F𝓖ᵢⱼ)ᵀR: only row j, equal to −F[:, i]ᵀR.
            let mut sel = DenseMatrix::zeros(pbar, sys.p());
            sel.row_mut(j).copy_from(&(-sys.f.column(i).transpose()));
            mb.place(i * pbar + j, 1, vars.r.mul_left(&sel)?)?;
        }
    }
    let assemble = |b: AffineBlocks, rows: usize| {
        if rows == 0 {
            AffineMatrix::zeros(0, width)
        } else {
            b.assemble()
        }
    };
    Ok(Stacks {
        u: assemble(ub, sys.m() * nbar * nbar),
        m: assemble(mb, sys.r() * pbar * pbar),
        h_blocks: sys.f_components.iter().map(|c| padded(&c.projection, width)).collect(),
        g_blocks: sys.g_components.iter().map(|c| padded(&c.projection, width)).collect(),
        nbar,
        pbar,
        width,
    })
}

/// Coefficients at vertex `v`: bit t of the (i, j)-lexicographic listing of
/// all f cells then all g cells, most significant first, selects the upper
/// bound.
pub fn vertex_coefficients(f: &SlopeBounds, g: &SlopeBounds, v: u128) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let bits = f.upper.iter().map(Vec::len).sum::<usize>() + g.upper.iter().map(Vec::len).sum::<usize>();
    let mut t = 0;
    let mut pick = |upper: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        upper
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&b| {
                        let on = (v >> (bits - 1 - t)) & 1 == 1;
                        t += 1;
                        if on {
                            b
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let fc = pick(&f.upper);
    let gc = pick(&g.upper);
    (fc, gc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFingerprint {
    pub theorem: Theorem,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub r: usize,
    pub nbar: usize,
    pub pbar: usize,
    pub variables: usize,
    pub constraints: usize,
    pub total_dim: usize,
    pub z_level: MultiplierLevel,
    pub s_level: MultiplierLevel,
    pub vertices: u128,
    pub epsilon: f64,
}

/// An assembled synthesis problem and everything needed to read back a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledProblem {
    pub sdp: SdpProblem,
    pub registry: VarRegistry,
    pub vars: DecisionVars,
    pub z: Option<AffineSymMatrix>,
    pub s: Option<AffineSymMatrix>,
    /// Constraints in SDP block order.
    pub constraints: Vec<LmiConstraint>,
    pub epsilon: f64,
    pub fingerprint: ProblemFingerprint,
}

impl CompiledProblem {
    /// Evaluates constraint `k` as the matrix the SDP requires to be ⪰ 0.
    pub fn block_matrix(&self, k: usize, x: &[f64]) -> SymMatrix {
        self.sdp.blocks[k].evaluate(x)
    }
}

struct Common {
    reg: VarRegistry,
    vars: DecisionVars,
    sigma: AffineSymMatrix,
    stacks: Stacks,
    z: Option<(AffineSymMatrix, Vec<LmiConstraint>)>,
    s: Option<(AffineSymMatrix, Vec<LmiConstraint>)>,
}

fn common(prob: &SynthesisProblem, requested: Theorem) -> Result<Common, LmiError> {
    let sys = &prob.system;
    if !prob.f_bounds.is_normalized() || !prob.g_bounds.is_normalized() {
        return Err(LmiError::NotNormalized);
    }
    if matches!(requested, Theorem::C1 | Theorem::C2) && sys.r() > 0 {
        return Err(LmiError::CorollaryNeedsLinearOutput(requested));
    }
    let mut reg = VarRegistry::new();
    let vars = DecisionVars::register(&mut reg, sys);
    let sigma = build_sigma(&vars, sys)?;
    let stacks = build_stacks(&vars, sys)?;
    let mult = |reg: &mut VarRegistry, st: MultiplierStructure| (!st.is_empty()).then(|| build_multiplier(reg, &st));
    let z = mult(&mut reg, prob.z_structure());
    let s = mult(&mut reg, prob.s_structure());
    Ok(Common {
        reg,
        vars,
        sigma,
        stacks,
        z,
        s,
    })
}

fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn to_block(c: &LmiConstraint, eps: f64) -> LmiBlock {
    let (sign, shift) = match c.relation {
        Relation::NegDef => (-1.0, eps),
        Relation::PosDef => (1.0, eps),
        Relation::PosSemiDef => (1.0, 0.0),
    };
    let dim = c.matrix.dim();
    let constant = c.matrix.inner().constant_part() * sign - DenseMatrix::identity(dim, dim) * shift;
    let mut block = LmiBlock::new(SymMatrix::from_upper(constant).expect("square"));
    block.coefficients = c
        .matrix
        .upper_coefficients()
        .into_iter()
        .map(|(v, e)| (v, e.into_iter().map(|(i, j, x)| (i, j, sign * x)).collect()))
        .collect();
    block
}

fn finish(prob: &SynthesisProblem, theorem: Theorem, c: Common, main: Vec<LmiConstraint>, vertices: u128) -> CompiledProblem {
    let sys = &prob.system;
    let worst = main
        .iter()
        .map(|l| spectral_norm(l.matrix.inner().constant_part()))
        .fold(0.0, f64::max);
    let eps = prob.options.margin_base * (1.0 + worst);

    let mut constraints = main;
    constraints.push(LmiConstraint {
        label: "P > 0".into(),
        matrix: AffineSymMatrix::new(c.vars.p.clone()).expect("P is symmetric"),
        relation: Relation::PosDef,
    });
    constraints.push(LmiConstraint {
        label: "mu > 0".into(),
        matrix: AffineSymMatrix::new(AffineMatrix::scalar_identity(c.vars.mu, 1)).expect("1x1"),
        relation: Relation::PosDef,
    });
    let (z, s) = (c.z, c.s);
    for (_, side) in z.iter().chain(s.iter()) {
        constraints.extend(side.iter().cloned());
    }

    let mut objective = vec![0.0; c.reg.len()];
    objective[c.vars.mu] = 1.0;
    let mut sdp = SdpProblem::new(c.reg.len(), objective);
    sdp.blocks = constraints.iter().map(|l| to_block(l, eps)).collect();

    let fingerprint = ProblemFingerprint {
        theorem,
        n: sys.n(),
        p: sys.p(),
        q: sys.q(),
        m: sys.m(),
        r: sys.r(),
        nbar: sys.nbar(),
        pbar: sys.pbar(),
        variables: c.reg.len(),
        constraints: constraints.len(),
        total_dim: sdp.total_dim(),
        z_level: prob.options.z_level,
        s_level: prob.options.s_level,
        vertices,
        epsilon: eps,
    };
    CompiledProblem {
        sdp,
        registry: c.reg,
        vars: c.vars,
        z: z.map(|(m, _)| m),
        s: s.map(|(m, _)| m),
        constraints,
        epsilon: eps,
        fingerprint,
    }
}

/// Single block LMI with the slope bounds at their maxima.
pub fn assemble_theorem1(prob: &SynthesisProblem) -> Result<CompiledProblem, LmiError> {
    let requested = prob.options.theorem;
    let theorem = if prob.system.r() == 0 { Theorem::C1 } else { Theorem::T1 };
    let c = common(prob, if requested == Theorem::C1 { Theorem::C1 } else { Theorem::T1 })?;
    let d = c.stacks.width;
    let mut sizes = vec![d];
    let mut lower: Vec<(AffineMatrix, AffineMatrix)> = Vec::new();
    if let Some((z, _)) = &c.z {
        let zh = z.inner().mul_right(&c.stacks.h_phi(&prob.f_bounds.upper))?;
        let neg = z.inner().scale(-1.0);
        lower.push((c.stacks.u.clone(), neg.clone()));
        lower.push((zh, neg));
    }
    if let Some((s, _)) = &c.s {
        let sg = s.inner().mul_right(&c.stacks.g_psi(&prob.g_bounds.upper))?;
        let neg = s.inner().scale(-1.0);
        lower.push((c.stacks.m.clone(), neg.clone()));
        lower.push((sg, neg));
    }
    sizes.extend(lower.iter().map(|(col, _)| col.rows()));
    let mut b = AffineBlocks::square(sizes);
    b.place(0, 0, c.sigma.inner().clone())?;
    for (k, (col, diag)) in lower.into_iter().enumerate() {
        b.place_sym(k + 1, 0, col)?;
        b.place(k + 1, k + 1, diag)?;
    }
    let main = vec![LmiConstraint {
        label: format!("{theorem} LMI"),
        matrix: AffineSymMatrix::new(b.assemble())?,
        relation: Relation::NegDef,
    }];
    Ok(finish(prob, theorem, c, main, 1))
}

/// One LMI per vertex of the slope box, in binary-counting order.
pub fn assemble_theorem2(prob: &SynthesisProblem) -> Result<CompiledProblem, LmiError> {
    let requested = prob.options.theorem;
    let theorem = if prob.system.r() == 0 { Theorem::C2 } else { Theorem::T2 };
    let count = prob.vertex_count();
    if count > prob.options.vertex_cap as u128 {
        return Err(LmiError::VertexCap {
            count,
            cap: prob.options.vertex_cap,
        });
    }
    let c = common(prob, if requested == Theorem::C2 { Theorem::C2 } else { Theorem::T2 })?;
    let mut main = Vec::with_capacity(count as usize);
    for v in 0..count {
        let (fc, gc) = vertex_coefficients(&prob.f_bounds, &prob.g_bounds, v);
        let mut sizes = vec![c.stacks.width];
        let mut lower: Vec<(AffineMatrix, AffineMatrix)> = Vec::new();
        if let Some((z, _)) = &c.z {
            let col = c.stacks.u.add(&z.inner().mul_right(&c.stacks.h_phi(&fc))?)?;
            lower.push((col, z.inner().scale(-2.0)));
        }
        if let Some((s, _)) = &c.s {
            let col = c.stacks.m.add(&s.inner().mul_right(&c.stacks.g_psi(&gc))?)?;
            lower.push((col, s.inner().scale(-2.0)));
        }
        sizes.extend(lower.iter().map(|(col, _)| col.rows()));
        let mut b = AffineBlocks::square(sizes);
        b.place(0, 0, c.sigma.inner().clone())?;
        for (k, (col, diag)) in lower.into_iter().enumerate() {
            b.place_sym(k + 1, 0, col)?;
            b.place(k + 1, k + 1, diag)?;
        }
        main.push(LmiConstraint {
            label: format!("{theorem} vertex {v}"),
            matrix: AffineSymMatrix::new(b.assemble())?,
            relation: Relation::NegDef,
        });
    }
    Ok(finish(prob, theorem, c, main, count))
}

pub fn assemble(prob: &SynthesisProblem) -> Result<CompiledProblem, LmiError> {
    if prob.options.theorem.is_vertex_form() {
        assemble_theorem2(prob)
    } else {
        assemble_theorem1(prob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::{NonlinearityComponent, ScalarFn};

    fn scalar(a: f64, c: f64, e: f64, d: f64, gain: Option<f64>) -> DetailedSystem {
        let comps: Vec<NonlinearityComponent> = gain
            .map(|_| {
                NonlinearityComponent::new(
                    DenseMatrix::identity(1, 1),
                    ScalarFn::SinTheta { theta: 1.0, weights: vec![1.0] },
                    vec![(-1.0, 1.0)],
                )
                .unwrap()
            })
            .into_iter()
            .collect();
        DetailedSystem {
            a: DenseMatrix::from_element(1, 1, a),
            g: DenseMatrix::from_element(1, comps.len(), gain.unwrap_or(0.0)),
            b1: DenseMatrix::zeros(1, 0),
            b2: DenseMatrix::zeros(1, 0),
            c: DenseMatrix::from_element(1, 1, c),
            e: DenseMatrix::from_element(1, 1, e),
            d: DenseMatrix::from_element(1, 1, d),
            f: DenseMatrix::zeros(1, 0),
            f_components: comps,
            g_components: vec![],
        }
    }

    #[test]
    fn sigma_scalar_hand_expansion() {
        let sys = scalar(0.9, 2.0, 0.5, 0.3, None);
        let mut reg = VarRegistry::new();
        let vars = DecisionVars::register(&mut reg, &sys);
        let sigma = build_sigma(&vars, &sys).unwrap();
        // variables: P, R, μ
        let (p, r, mu) = (1.7, -0.4, 0.25);
        let v = sigma.evaluate(&[p, r, mu]);
        let expect = DenseMatrix::from_row_slice(
            3,
            3,
            &[
                1.0 - p,
                0.0,
                0.9 * p - 2.0 * r,
                0.0,
                -mu,
                0.5 * p - 0.3 * r,
                0.9 * p - 2.0 * r,
                0.5 * p - 0.3 * r,
                -p,
            ],
        );
        assert!((v.as_dense() - expect).amax() < 1e-15);
    }

    #[test]
    fn sigma_at_identity_point() {
        let sys = scalar(0.9, 2.0, 0.5, 0.3, None);
        let mut reg = VarRegistry::new();
        let vars = DecisionVars::register(&mut reg, &sys);
        let v = build_sigma(&vars, &sys).unwrap().evaluate(&[1.0, 0.0, 1.0]);
        let expect = DenseMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.9, 0.0, -1.0, 0.5, 0.9, 0.5, -1.0]);
        assert!((v.as_dense() - expect).amax() < 1e-15);
    }

    #[test]
    fn smallest_stack_by_hand() {
        let sys = scalar(0.5, 1.0, 1.0, 1.0, Some(0.3));
        let mut reg = VarRegistry::new();
        let vars = DecisionVars::register(&mut reg, &sys);
        let st = build_stacks(&vars, &sys).unwrap();
        let u = st.u.evaluate(&[2.0, 0.0, 0.0]);
        assert_eq!(u.shape(), (1, 3));
        assert!((u[(0, 2)] - 0.6).abs() < 1e-15 && u[(0, 0)] == 0.0 && u[(0, 1)] == 0.0);
        let hphi = st.h_phi(&[vec![0.8]]);
        assert_eq!(hphi, DenseMatrix::from_row_slice(1, 3, &[0.8, 0.0, 0.0]));
    }

    #[test]
    fn zero_g_gives_zero_u() {
        let sys = scalar(0.5, 1.0, 1.0, 1.0, Some(0.0));
        let mut reg = VarRegistry::new();
        let vars = DecisionVars::register(&mut reg, &sys);
        let st = build_stacks(&vars, &sys).unwrap();
        assert!(st.u.terms().is_empty());
    }

    #[test]
    fn vertex_order_is_binary_counting() {
        let f = SlopeBounds::from_upper(vec![vec![1.0, 2.0]]).unwrap();
        let g = SlopeBounds::from_upper(vec![vec![3.0]]).unwrap();
        let (fc, gc) = vertex_coefficients(&f, &g, 0b101);
        assert_eq!(fc, vec![vec![1.0, 0.0]]);
        assert_eq!(gc, vec![vec![3.0]]);
        let (fc, gc) = vertex_coefficients(&f, &g, 0b010);
        assert_eq!(fc, vec![vec![0.0, 2.0]]);
        assert_eq!(gc, vec![vec![0.0]]);
    }
}
