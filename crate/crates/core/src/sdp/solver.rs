//! Primal-dual interior-point method on the homogeneous self-dual embedding,
//! with Nesterov–Todd scaling and Mehrotra predictor-corrector steps.
//!
//! Primal: `min cᵀx  s.t.  S = F₀ + Σ xᵢFᵢ ⪰ 0`.
//! Dual:   `max −⟨F₀, Z⟩  s.t.  ⟨Fᵢ, Z⟩ = cᵢ,  Z ⪰ 0`.
//!
//! The embedding adds τ, κ ≥ 0 with `S = τF₀ + A(x)`, `A*(Z) = τc`,
//! `κ = −cᵀx − ⟨F₀, Z⟩`; a solution with τ > 0 gives an optimal pair
//! `(x/τ, Z/τ)`, and one with κ > 0 yields an infeasibility certificate.

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use super::{LmiBlock, SdpError, SdpProblem};
use crate::matrixcore::{sym_eigvals, DenseMatrix, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Starting point `S = Z = ρI`; `None` picks ρ from the data norms.
    pub initial_radius: Option<f64>,
    /// Threshold on the normalized certificate residual.
    pub infeas_tol: f64,
    pub step_fraction: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            initial_radius: None,
            infeas_tol: 1e-8,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibilityKind {
    /// Z ⪰ 0 with A*(Z) ≈ 0 and ⟨F₀, Z⟩ < 0: no x makes F(x) ⪰ 0.
    Primal,
    /// x with A(x) ⪰ 0 and cᵀx < 0: the objective is unbounded below.
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "certificate")]
pub enum SolveStatus {
    Optimal,
    /// Stopped early at a point that satisfies every block to `feas_tol`.
    Feasible,
    Infeasible(InfeasibilityKind),
    NumericalFailure,
    IterationLimit,
}

impl SolveStatus {
    pub fn has_solution(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible(InfeasibilityKind::Primal) => "infeasible",
            SolveStatus::Infeasible(InfeasibilityKind::Dual) => "unbounded",
            SolveStatus::NumericalFailure => "numerical_failure",
            SolveStatus::IterationLimit => "iteration_limit",
        }
    }
}

/// Quantities of one iterate, measured at `(x/τ, Z/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub pobj: f64,
    pub dobj: f64,
    /// ⟨S, Z⟩/τ², never negative.
    pub complementarity: f64,
    /// `pobj − dobj − complementarity`; vanishes as the residuals do.
    pub residual_term: f64,
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
    pub tau: f64,
    pub kappa: f64,
    pub mu: f64,
    /// Centering parameter and step length of the step taken from this iterate.
    pub sigma: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub dual: Vec<DenseMatrix>,
    pub objective: f64,
    pub dual_objective: f64,
    pub block_min_eig: Vec<f64>,
    pub iterations: usize,
    /// Normalized residual of the infeasibility certificate, when one was found.
    pub certificate_residual: Option<f64>,
    pub trace: Vec<IterationRecord>,
    pub message: String,
}

struct Scaling {
    g: DenseMatrix,
    ginv: DenseMatrix,
    winv: DenseMatrix,
    lambda: DVector<f64>,
}

fn nt_scaling(s: &DenseMatrix, z: &DenseMatrix) -> Option<Scaling> {
    let ls = Cholesky::new(s.clone())?.l();
    let lz = Cholesky::new(z.clone())?.l();
    let svd = (lz.transpose() * &ls).svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let lambda = svd.singular_values;
    if lambda.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let isq = DenseMatrix::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt()));
    let g = ls * vt.transpose() * &isq;
    let ginv = &isq * u.transpose() * lz.transpose();
    let winv = ginv.transpose() * &ginv;
    Some(Scaling { g, ginv, winv, lambda })
}

fn sym(m: DenseMatrix) -> DenseMatrix {
    (&m + m.transpose()) * 0.5
}

fn inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.dot(b)
}

/// Largest α ≤ ∞ with Λ + α D ⪰ 0, for scaled direction `d`.
fn max_step(lambda: &DVector<f64>, d: &DenseMatrix) -> f64 {
    let n = lambda.len();
    let m = DenseMatrix::from_fn(n, n, |i, j| d[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    let lmin = SymMatrix::symmetric_part(&m).lambda_min().unwrap_or(f64::NEG_INFINITY);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn scalar_step(v: f64, dv: f64) -> f64 {
    if dv < 0.0 {
        -v / dv
    } else {
        f64::INFINITY
    }
}

struct Direction {
    dx: DVector<f64>,
    dtau: f64,
    dkappa: f64,
    ds: Vec<DenseMatrix>,
    dz: Vec<DenseMatrix>,
}

struct Snapshot {
    iter: usize,
    merit: f64,
    x: DVector<f64>,
    tau: f64,
    kappa: f64,
    s: Vec<DenseMatrix>,
    z: Vec<DenseMatrix>,
}

struct Solver<'a> {
    p: &'a SdpProblem,
    opts: SolveOptions,
    c: DVector<f64>,
    nu: f64,
    norm_f0: f64,
    norm_c: f64,
    x: DVector<f64>,
    tau: f64,
    kappa: f64,
    s: Vec<DenseMatrix>,
    z: Vec<DenseMatrix>,
}

/// Residuals of the embedding at the current iterate.
struct Residuals {
    rp: Vec<DenseMatrix>,
    rd: DVector<f64>,
    rtau: f64,
    mu: f64,
}

/// Per-iteration linear system data shared by predictor and corrector.
struct Newton {
    scal: Vec<Scaling>,
    m: DenseMatrix,
    chol: SchurFactor,
    h: DVector<f64>,
    h0: f64,
    q: DVector<f64>,
}

enum SchurKind {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Factorization of the diagonally equilibrated Schur matrix D·M·D.
struct SchurFactor {
    kind: SchurKind,
    d: DVector<f64>,
}

impl SchurFactor {
    fn new(m: &DenseMatrix) -> Option<Self> {
        let n = m.nrows();
        let d = DVector::from_fn(n, |i, _| {
            let v = m[(i, i)].abs();
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        });
        let scaled = DenseMatrix::from_fn(n, n, |i, j| m[(i, j)] * d[i] * d[j]);
        let mut delta = 1e-14;
        for _ in 0..6 {
            let mut reg = scaled.clone();
            for i in 0..n {
                reg[(i, i)] += delta;
            }
            if let Some(c) = Cholesky::new(reg) {
                return Some(SchurFactor { kind: SchurKind::Chol(c), d });
            }
            delta *= 100.0;
        }
        let lu = scaled.lu();
        lu.is_invertible().then_some(SchurFactor { kind: SchurKind::Lu(lu), d })
    }

    fn raw(&self, b: &DVector<f64>) -> DVector<f64> {
        let sb = b.component_mul(&self.d);
        let y = match &self.kind {
            SchurKind::Chol(c) => c.solve(&sb),
            SchurKind::Lu(l) => l.solve(&sb).unwrap_or_else(|| DVector::zeros(sb.len())),
        };
        y.component_mul(&self.d)
    }

    /// Solve with up to three steps of iterative refinement against `m`.
    fn solve(&self, b: &DVector<f64>, m: &DenseMatrix) -> DVector<f64> {
        let mut x = self.raw(b);
        let mut best = (b - m * &x).norm();
        for _ in 0..3 {
            let r = b - m * &x;
            let cand = &x + self.raw(&r);
            let res = (b - m * &cand).norm();
            if !(res < best) {
                break;
            }
            x = cand;
            best = res;
        }
        x
    }
}

impl<'a> Solver<'a> {
    fn new(p: &'a SdpProblem, opts: SolveOptions) -> Self {
        let data_norm = p
            .blocks
            .iter()
            .flat_map(|b| {
                std::iter::once(b.constant.norm())
                    .chain(b.coefficients.iter().map(|(_, e)| e.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt()))
            })
            .fold(0.0, f64::max);
        let rho = opts.initial_radius.unwrap_or(data_norm.max(1.0));
        let c = DVector::from_column_slice(&p.objective);
        Self {
            p,
            opts,
            norm_c: c.norm(),
            c,
            nu: p.total_dim() as f64,
            norm_f0: p.blocks.iter().map(|b| b.constant.norm_squared()).sum::<f64>().sqrt(),
            x: DVector::zeros(p.num_vars),
            tau: 1.0,
            kappa: 1.0,
            s: p.blocks.iter().map(|b| DenseMatrix::identity(b.dim, b.dim) * rho).collect(),
            z: p.blocks.iter().map(|b| DenseMatrix::identity(b.dim, b.dim) * rho).collect(),
        }
    }

    fn a_op(&self, b: &LmiBlock, x: &DVector<f64>) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(b.dim, b.dim);
        b.accumulate(&mut out, x.as_slice());
        out
    }

    fn a_adj(&self, z: &[DenseMatrix]) -> DVector<f64> {
        let mut out = DVector::zeros(self.p.num_vars);
        for (b, zk) in self.p.blocks.iter().zip(z) {
            for (var, e) in &b.coefficients {
                out[*var] += LmiBlock::sparse_inner(e, zk);
            }
        }
        out
    }

    fn f0_inner(&self, z: &[DenseMatrix]) -> f64 {
        self.p.blocks.iter().zip(z).map(|(b, zk)| inner(&b.constant, zk)).sum()
    }

    fn residuals(&self) -> Residuals {
        let rp = self
            .p
            .blocks
            .iter()
            .zip(&self.s)
            .map(|(b, s)| s - &b.constant * self.tau - self.a_op(b, &self.x))
            .collect();
        let rd = &self.c * self.tau - self.a_adj(&self.z);
        let rtau = self.c.dot(&self.x) + self.f0_inner(&self.z) + self.kappa;
        let sz: f64 = self.s.iter().zip(&self.z).map(|(s, z)| inner(s, z)).sum();
        Residuals {
            rp,
            rd,
            rtau,
            mu: (sz + self.tau * self.kappa) / (self.nu + 1.0),
        }
    }

    fn record(&self, iter: usize, r: &Residuals) -> IterationRecord {
        let t = self.tau;
        let pobj = self.c.dot(&self.x) / t;
        let dobj = -self.f0_inner(&self.z) / t;
        let compl: f64 = self.s.iter().zip(&self.z).map(|(s, z)| inner(s, z)).sum::<f64>() / (t * t);
        let rp_norm = r.rp.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        IterationRecord {
            iter,
            pobj,
            dobj,
            complementarity: compl,
            residual_term: pobj - dobj - compl,
            pres: rp_norm / t / (1.0 + self.norm_f0),
            dres: r.rd.norm() / t / (1.0 + self.norm_c),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            tau: t,
            kappa: self.kappa,
            mu: r.mu,
            sigma: f64::NAN,
            step: f64::NAN,
        }
    }

    fn x_hat(&self) -> Vec<f64> {
        (&self.x / self.tau).iter().copied().collect()
    }

    fn block_min_eigs(&self, x: &[f64]) -> Vec<f64> {
        self.p
            .blocks
            .iter()
            .map(|b| sym_eigvals(&b.evaluate(x)).map(|v| v[0]).unwrap_or(f64::NAN))
            .collect()
    }

    fn primal_certificate(&self) -> Option<f64> {
        let f0z = self.f0_inner(&self.z);
        if f0z >= 0.0 {
            return None;
        }
        let res = self.a_adj(&self.z).norm() / -f0z;
        (res <= self.opts.infeas_tol).then_some(res)
    }

    fn dual_certificate(&self) -> Option<f64> {
        let cx = self.c.dot(&self.x);
        if !(cx < 0.0) {
            return None;
        }
        let xs = &self.x / -cx;
        let worst = self
            .p
            .blocks
            .iter()
            .map(|b| SymMatrix::symmetric_part(&self.a_op(b, &xs)).lambda_min().unwrap_or(f64::NEG_INFINITY))
            .fold(f64::INFINITY, f64::min);
        (worst >= -self.opts.infeas_tol).then_some(-worst.min(0.0))
    }

    fn newton(&self) -> Option<Newton> {
        let nv = self.p.num_vars;
        let scal: Vec<Scaling> = self
            .s
            .iter()
            .zip(&self.z)
            .map(|(s, z)| nt_scaling(s, z))
            .collect::<Option<_>>()?;
        let mut m = DenseMatrix::zeros(nv, nv);
        let mut h = DVector::zeros(nv);
        let mut h0 = 0.0;
        for (b, sc) in self.p.blocks.iter().zip(&scal) {
            let w = &sc.winv;
            let y0 = sym(w * &b.constant * w);
            h0 += inner(&b.constant, &y0);
            let mut y = DenseMatrix::zeros(b.dim, b.dim);
            for (k, (vj, ej)) in b.coefficients.iter().enumerate() {
                y.fill(0.0);
                for &(i, j, v) in ej {
                    let (ci, cj) = (w.column(i), w.column(j));
                    if i == j {
                        y.ger(v, &ci, &ci, 1.0);
                    } else {
                        y.ger(v, &ci, &cj, 1.0);
                        y.ger(v, &cj, &ci, 1.0);
                    }
                }
                h[*vj] += LmiBlock::sparse_inner(ej, &y0);
                for (vi, ei) in &b.coefficients[..=k] {
                    let val = LmiBlock::sparse_inner(ei, &y);
                    m[(*vi, *vj)] += val;
                    if vi != vj {
                        m[(*vj, *vi)] += val;
                    }
                }
            }
        }
        let chol = SchurFactor::new(&m)?;
        let q = chol.solve(&(&self.c + &h), &m);
        if q.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Newton { scal, m, chol, h, h0, q })
    }

    /// Solves the linearized embedding for complementarity target `rc`
    /// (scaled, per block), residual reduction `eta` and τκ target `rkappa`.
    fn direction(&self, nt: &Newton, r: &Residuals, rc: &[DenseMatrix], eta: f64, rkappa: f64) -> Option<Direction> {
        let (tau, kappa) = (self.tau, self.kappa);
        let mut t_blocks = Vec::with_capacity(rc.len());
        let mut g = DVector::zeros(self.p.num_vars);
        let mut g0 = 0.0;
        for ((b, sc), (rck, rpk)) in self.p.blocks.iter().zip(&nt.scal).zip(rc.iter().zip(&r.rp)) {
            let n = b.dim;
            let xk = DenseMatrix::from_fn(n, n, |i, j| 2.0 * rck[(i, j)] / (sc.lambda[i] + sc.lambda[j]));
            let tk = sym(&sc.g * xk * sc.g.transpose());
            let qk = sym(&sc.winv * (&tk + rpk * eta) * &sc.winv);
            for (var, e) in &b.coefficients {
                g[*var] += LmiBlock::sparse_inner(e, &qk);
            }
            g0 += inner(&b.constant, &qk);
            t_blocks.push(tk);
        }
        let p = nt.chol.solve(&(&g - &r.rd * eta), &nt.m);
        let cmh = &self.c - &nt.h;
        let num = eta * r.rtau + cmh.dot(&p) + g0 + rkappa / tau;
        let den = cmh.dot(&nt.q) + nt.h0 + kappa / tau;
        let dtau = num / den;
        let mut dx = p - &nt.q * dtau;
        let dkappa = (rkappa - kappa * dtau) / tau;
        let build = |dx: &DVector<f64>| -> (Vec<DenseMatrix>, Vec<DenseMatrix>) {
            let mut ds = Vec::with_capacity(rc.len());
            let mut dz = Vec::with_capacity(rc.len());
            for (((b, sc), tk), rpk) in self.p.blocks.iter().zip(&nt.scal).zip(&t_blocks).zip(&r.rp) {
                let dsk = &b.constant * dtau + self.a_op(b, dx) - rpk * eta;
                let dzk = sym(&sc.winv * (tk - &dsk) * &sc.winv);
                ds.push(dsk);
                dz.push(dzk);
            }
            (ds, dz)
        };
        let (mut ds, mut dz) = build(&dx);
        // Refine against the linearized dual equation c·dτ − A*(ΔZ) = −η·r_d,
        // which loses accuracy once W is badly conditioned.
        let defect = |dz: &[DenseMatrix]| &self.c * dtau - self.a_adj(dz) + &r.rd * eta;
        let scale = 1.0 + r.rd.norm() * eta + self.c.norm() * dtau.abs();
        let mut err = defect(&dz).norm();
        for _ in 0..2 {
            if !(err > 1e-14 * scale) {
                break;
            }
            let cand_dx = &dx - nt.chol.solve(&defect(&dz), &nt.m);
            let (cs, cz) = build(&cand_dx);
            let cand_err = defect(&cz).norm();
            if !(cand_err < err) {
                break;
            }
            (dx, ds, dz, err) = (cand_dx, cs, cz, cand_err);
        }
        let ok = dtau.is_finite() && dkappa.is_finite() && dx.iter().all(|v| v.is_finite());
        ok.then_some(Direction { dx, dtau, dkappa, ds, dz })
    }

    /// Scaled directions G⁻¹ΔSG⁻ᵀ and GᵀΔZG of every block.
    fn scaled(&self, nt: &Newton, d: &Direction) -> Vec<(DenseMatrix, DenseMatrix)> {
        nt.scal
            .iter()
            .zip(d.ds.iter().zip(&d.dz))
            .map(|(sc, (ds, dz))| {
                (
                    sym(&sc.ginv * ds * sc.ginv.transpose()),
                    sym(sc.g.transpose() * dz * &sc.g),
                )
            })
            .collect()
    }

    fn max_alpha(&self, nt: &Newton, d: &Direction, scaled: &[(DenseMatrix, DenseMatrix)]) -> f64 {
        let mut a = scalar_step(self.tau, d.dtau).min(scalar_step(self.kappa, d.dkappa));
        for (sc, (dss, dzs)) in nt.scal.iter().zip(scaled) {
            a = a.min(max_step(&sc.lambda, dss)).min(max_step(&sc.lambda, dzs));
        }
        a
    }

    fn take_step(&mut self, d: &Direction, alpha: f64) {
        self.x += &d.dx * alpha;
        self.tau += alpha * d.dtau;
        self.kappa += alpha * d.dkappa;
        for (s, ds) in self.s.iter_mut().zip(&d.ds) {
            *s = sym(&*s + ds * alpha);
        }
        for (z, dz) in self.z.iter_mut().zip(&d.dz) {
            *z = sym(&*z + dz * alpha);
        }
    }

    fn finish(&self, status: SolveStatus, iterations: usize, trace: Vec<IterationRecord>, cert: Option<f64>, message: String) -> SdpSolution {
        let (x, dual, objective, dual_objective) = match status {
            SolveStatus::Infeasible(InfeasibilityKind::Primal) => {
                let scale = -self.f0_inner(&self.z);
                (self.x_hat(), self.z.iter().map(|z| z / scale).collect(), f64::INFINITY, f64::INFINITY)
            }
            SolveStatus::Infeasible(InfeasibilityKind::Dual) => {
                let scale = -self.c.dot(&self.x);
                let x: Vec<f64> = self.x.iter().map(|v| v / scale).collect();
                (x, self.z.iter().map(|z| z / self.tau).collect(), f64::NEG_INFINITY, f64::NEG_INFINITY)
            }
            _ => {
                let x = self.x_hat();
                let dual: Vec<DenseMatrix> = self.z.iter().map(|z| z / self.tau).collect();
                let obj = self.c.dot(&self.x) / self.tau;
                let dobj = -self.f0_inner(&dual);
                (x, dual, obj, dobj)
            }
        };
        let block_min_eig = self.block_min_eigs(&x);
        SdpSolution {
            status,
            x,
            dual,
            objective,
            dual_objective,
            block_min_eig,
            iterations,
            certificate_residual: cert,
            trace,
            message,
        }
    }

    fn primal_ok(&self) -> bool {
        self.tau > 0.0 && self.block_min_eigs(&self.x_hat()).iter().all(|&e| e >= -self.opts.feas_tol)
    }

    /// Ends a run that stopped before meeting the optimality tolerances: the
    /// last iterate, or else the iterate with the smallest residuals seen so
    /// far, is reported as `Feasible` when it satisfies every block.
    fn stop_early(mut self, fallback: SolveStatus, iter: usize, trace: Vec<IterationRecord>, msg: &str, best: Option<Snapshot>) -> SdpSolution {
        if self.primal_ok() {
            return self.finish(SolveStatus::Feasible, iter, trace, None, msg.into());
        }
        if let Some(b) = best {
            let k = b.iter;
            (self.x, self.tau, self.kappa, self.s, self.z) = (b.x, b.tau, b.kappa, b.s, b.z);
            if self.primal_ok() {
                return self.finish(SolveStatus::Feasible, iter, trace, None, format!("{msg}; returning iterate {k}"));
            }
        }
        self.finish(fallback, iter, trace, None, msg.into())
    }

    fn run(mut self) -> SdpSolution {
        let mut trace = Vec::new();
        let mut stalls = 0;
        let mut best: Option<Snapshot> = None;
        for iter in 0..=self.opts.max_iter {
            let r = self.residuals();
            let mut rec = self.record(iter, &r);
            let merit = rec.pres.max(rec.dres).max(rec.gap);
            if self.tau > 0.0 && merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.merit) {
                best = Some(Snapshot {
                    iter,
                    merit,
                    x: self.x.clone(),
                    tau: self.tau,
                    kappa: self.kappa,
                    s: self.s.clone(),
                    z: self.z.clone(),
                });
            }
            if ![rec.pobj, rec.dobj, rec.pres, rec.dres, self.tau, self.kappa].iter().all(|v| v.is_finite()) {
                trace.push(rec);
                return self.stop_early(SolveStatus::NumericalFailure, iter, trace, "non-finite iterate", best);
            }
            if rec.pres <= self.opts.feas_tol && rec.dres <= self.opts.feas_tol && rec.gap <= self.opts.gap_tol {
                let eigs = self.block_min_eigs(&self.x_hat());
                if eigs.iter().all(|&e| e >= -self.opts.feas_tol) {
                    trace.push(rec);
                    return self.finish(SolveStatus::Optimal, iter, trace, None, "converged".into());
                }
            }
            if let Some(res) = self.primal_certificate() {
                trace.push(rec);
                let msg = format!("primal infeasibility certificate, residual {res:.3e}");
                return self.finish(SolveStatus::Infeasible(InfeasibilityKind::Primal), iter, trace, Some(res), msg);
            }
            if let Some(res) = self.dual_certificate() {
                trace.push(rec);
                let msg = format!("dual infeasibility certificate, residual {res:.3e}");
                return self.finish(SolveStatus::Infeasible(InfeasibilityKind::Dual), iter, trace, Some(res), msg);
            }
            if iter == self.opts.max_iter {
                trace.push(rec);
                return self.stop_early(SolveStatus::IterationLimit, iter, trace, "iteration limit", best);
            }

            let Some(nt) = self.newton() else {
                trace.push(rec);
                return self.stop_early(SolveStatus::NumericalFailure, iter, trace, "scaling or Schur factorization failed", best);
            };

            // Predictor: pure Newton step towards complementarity.
            let rc_aff: Vec<DenseMatrix> = nt
                .scal
                .iter()
                .map(|sc| DenseMatrix::from_diagonal(&sc.lambda.map(|l| -l * l)))
                .collect();
            let Some(aff) = self.direction(&nt, &r, &rc_aff, 1.0, -self.tau * self.kappa) else {
                trace.push(rec);
                return self.stop_early(SolveStatus::NumericalFailure, iter, trace, "predictor direction failed", best);
            };
            let aff_scaled = self.scaled(&nt, &aff);
            let a_aff = self.max_alpha(&nt, &aff, &aff_scaled).min(1.0);
            let mut sz_aff = (self.tau + a_aff * aff.dtau) * (self.kappa + a_aff * aff.dkappa);
            for (s, (z, (ds, dz))) in self.s.iter().zip(self.z.iter().zip(aff.ds.iter().zip(&aff.dz))) {
                sz_aff += inner(&(s + ds * a_aff), &(z + dz * a_aff));
            }
            let mu_aff = sz_aff / (self.nu + 1.0);
            let sigma = (mu_aff / r.mu).clamp(0.0, 1.0).powi(3);

            // Corrector with second-order term.
            let target = sigma * r.mu;
            let rc: Vec<DenseMatrix> = nt
                .scal
                .iter()
                .zip(&aff_scaled)
                .map(|(sc, (dsa, dza))| {
                    let n = sc.lambda.len();
                    let cross = (dsa * dza + dza * dsa) * 0.5;
                    DenseMatrix::from_fn(n, n, |i, j| {
                        let base = if i == j { target - sc.lambda[i] * sc.lambda[i] } else { 0.0 };
                        base - cross[(i, j)]
                    })
                })
                .collect();
            let rkappa = target - self.tau * self.kappa - aff.dtau * aff.dkappa;
            let Some(dir) = self.direction(&nt, &r, &rc, 1.0 - sigma, rkappa) else {
                trace.push(rec);
                return self.stop_early(SolveStatus::NumericalFailure, iter, trace, "corrector direction failed", best);
            };
            let dir_scaled = self.scaled(&nt, &dir);
            let alpha = (self.opts.step_fraction * self.max_alpha(&nt, &dir, &dir_scaled)).min(1.0);
            rec.sigma = sigma;
            rec.step = alpha;
            trace.push(rec);
            if !(alpha > 1e-10) {
                stalls += 1;
                if stalls >= 3 {
                    return self.stop_early(SolveStatus::NumericalFailure, iter + 1, trace, "step length collapsed", best);
                }
                continue;
            }
            stalls = 0;
            self.take_step(&dir, alpha);
        }
        unreachable!("loop returns at max_iter")
    }
}

/// Solves `problem`; deterministic for identical inputs and options.
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    Ok(Solver::new(problem, *opts).run())
}
