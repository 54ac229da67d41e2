use lipobs::apps::{build_battery, build_example1, BatteryParams, ScenarioConfig};
use lipobs::lipschitz::{decompose, normalize, NonlinearityComponent};
use lipobs::lmi::{AffineMatrix, MultiplierLevel, SynthesisOptions, SynthesisProblem, Theorem};
use lipobs::matrixcore::{is_pd, sym_eigen, unit_outer, BlockLayout, DenseMatrix, DenseVector, SymMatrix};
use lipobs::sdp::{read_sdpa, solve, write_sdpa, LmiBlock, SdpProblem, SolveOptions, SolveStatus};
use lipobs::system::DetailedSystem;
use proptest::prelude::*;

fn dense(n: usize, m: usize, v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_row_slice(n, m, &v[..n * m])
}

fn lam_max(m: &DenseMatrix) -> f64 {
    SymMatrix::symmetric_part(m).lambda_max().unwrap()
}

fn spd(n: usize, v: &[f64], shift: f64) -> DenseMatrix {
    let b = dense(n, n, v);
    &b * b.transpose() + DenseMatrix::identity(n, n) * shift
}

fn telescoping_residual(comps: &[NonlinearityComponent], psi: &DenseVector, phi: &DenseVector) -> f64 {
    let h = decompose(comps, psi, phi).unwrap();
    let m = comps.len();
    let nbar = comps[0].inner_dim();
    let mut lhs = DenseVector::zeros(m);
    for (i, c) in comps.iter().enumerate() {
        for j in 0..nbar {
            lhs += unit_outer(m, nbar, i, j).unwrap() * &c.projection * (psi - phi) * h[i][j];
        }
    }
    let rhs = DenseVector::from_iterator(m, comps.iter().map(|c| c.eval_state(psi) - c.eval_state(phi)));
    (lhs - rhs).amax()
}

fn vec3() -> impl Strategy<Value = DenseVector> {
    prop::collection::vec(-2.0f64..2.0, 3).prop_map(DenseVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn telescoping_example1(psi in vec3(), phi in vec3(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let bs = build_example1(t1, t2);
        let comps = &bs.system.f_components;
        prop_assert!(telescoping_residual(comps, &psi, &phi) <= 1e-10);
        let h = decompose(comps, &psi, &phi).unwrap();
        for (i, row) in h.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                prop_assert!(bs.f_bounds.contains(i, j, v, 1e-12));
            }
        }
    }

    #[test]
    fn telescoping_battery(psi in prop::collection::vec(0.0f64..1.0, 3), phi in prop::collection::vec(0.0f64..1.0, 3)) {
        let bs = build_battery(&BatteryParams::default()).unwrap();
        let (psi, phi) = (DenseVector::from_vec(psi), DenseVector::from_vec(phi));
        let comps = &bs.system.g_components;
        prop_assert!(telescoping_residual(comps, &psi, &phi) <= 1e-10);
        let h = decompose(comps, &psi, &phi).unwrap();
        prop_assert!(bs.g_bounds.contains(0, 0, h[0][0], 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn young_inequalities(
        n in 1usize..5,
        k in 1usize..4,
        xs in prop::collection::vec(-3.0f64..3.0, 16),
        ys in prop::collection::vec(-3.0f64..3.0, 16),
        zs in prop::collection::vec(-1.0f64..1.0, 16),
        shift in 0.1f64..2.0,
    ) {
        let x = dense(n, k, &xs);
        let y = dense(n, k, &ys);
        let z = spd(n, &zs, shift);
        let zinv = z.clone().try_inverse().unwrap();
        let cross = x.transpose() * &y + y.transpose() * &x;
        let standard = x.transpose() * &zinv * &x + y.transpose() * &z * &y;
        let w = &x + &z * &y;
        let variant = w.transpose() * (&zinv * 0.5) * &w;
        let scale = 1.0 + standard.amax();
        prop_assert!(lam_max(&(&cross - standard)) <= 1e-10 * scale);
        prop_assert!(lam_max(&(cross - variant)) <= 1e-10 * scale);
    }

    #[test]
    fn structured_multiplier_inequality(
        groups in 1usize..4,
        inner in 1usize..4,
        seeds in prop::collection::vec(-1.0f64..1.0, 160),
        ab in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3),
    ) {
        // Z with PD diagonal cells, PSD symmetric off-diagonal cells.
        let s = inner;
        let mut it = seeds.chunks(s * s).cycle();
        let mut cells = vec![vec![DenseMatrix::zeros(s, s); groups]; groups];
        for i in 0..groups {
            for j in (i + 1)..groups {
                let c = spd(s, it.next().unwrap(), 0.0);
                cells[i][j] = c.clone();
                cells[j][i] = c;
            }
        }
        for i in 0..groups {
            let off: f64 = (0..groups).filter(|&j| j != i).map(|j| lam_max(&cells[i][j])).sum();
            cells[i][i] = spd(s, it.next().unwrap(), 0.1 + off);
        }
        let mut lay = BlockLayout::square(vec![s; groups]);
        for (i, row) in cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                lay.place(i, j, c.clone()).unwrap();
            }
        }
        let z = lay.assemble();
        prop_assert!(is_pd(&SymMatrix::symmetric_part(&z), 0.0));
        let (a, b): (Vec<f64>, Vec<f64>) = ab[..groups].iter().map(|&(u, v)| (u * v, v)).unzip();
        let stack = |w: &[f64]| {
            let blocks: Vec<DenseMatrix> = w.iter().map(|&c| DenseMatrix::identity(s, s) * c).collect();
            lipobs::matrixcore::vstack(&blocks, s).unwrap()
        };
        let (xm, ym) = (stack(&a), stack(&b));
        let diff = xm.transpose() * &z * &xm - ym.transpose() * &z * &ym;
        prop_assert!(lam_max(&diff) <= 1e-10 * (1.0 + z.amax()));
    }

    #[test]
    fn congruence_identity(
        r in 1usize..4,
        ca in 1usize..4,
        cb in 1usize..4,
        av in prop::collection::vec(-2.0f64..2.0, 16),
        bv in prop::collection::vec(-2.0f64..2.0, 16),
        cv in prop::collection::vec(-2.0f64..2.0, 16),
    ) {
        let a = dense(r, ca, &av);
        let b = dense(r, cb, &bv);
        let c = SymMatrix::symmetric_part(&dense(r, r, &cv));
        let cm = c.as_dense();
        let mut lay = BlockLayout::square(vec![ca, cb]);
        lay.place(0, 0, a.transpose() * cm * &a).unwrap();
        lay.place_sym(0, 1, a.transpose() * cm * &b).unwrap();
        lay.place(1, 1, b.transpose() * cm * &b).unwrap();
        let mut ab = DenseMatrix::zeros(r, ca + cb);
        ab.columns_mut(0, ca).copy_from(&a);
        ab.columns_mut(ca, cb).copy_from(&b);
        let rhs = c.congruence(&ab);
        prop_assert!((lay.assemble() - rhs.as_dense()).amax() <= 1e-12);
    }

    #[test]
    fn eigen_trace_and_reconstruction(n in 1usize..6, v in prop::collection::vec(-5.0f64..5.0, 36)) {
        let m = SymMatrix::symmetric_part(&dense(n, n, &v));
        let e = sym_eigen(&m).unwrap();
        let sum: f64 = e.values.iter().sum();
        prop_assert!((sum - m.as_dense().trace()).abs() <= 1e-10);
        let det: f64 = e.values.iter().product();
        prop_assert!((det - m.as_dense().determinant()).abs() <= 1e-8 * (1.0 + det.abs()));
        prop_assert!((e.reconstruct() - m.as_dense()).amax() <= 1e-10);
    }

    #[test]
    fn pd_is_monotone(n in 1usize..5, v in prop::collection::vec(-1.0f64..1.0, 25), w in prop::collection::vec(-1.0f64..1.0, 25)) {
        let a = SymMatrix::symmetric_part(&spd(n, &v, 0.05));
        let psd = SymMatrix::symmetric_part(&spd(n, &w, 0.0));
        prop_assert!(is_pd(&a, 0.0));
        prop_assert!(is_pd(&a.add(&psd), 0.0));
    }

    #[test]
    fn affine_superposition(
        coef in prop::collection::vec((0usize..4, 0usize..3, 0usize..3, -2.0f64..2.0), 1..12),
        x in prop::collection::vec(-3.0f64..3.0, 4),
        y in prop::collection::vec(-3.0f64..3.0, 4),
        c in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let mut m = AffineMatrix::constant(dense(3, 3, &c));
        for (var, i, j, v) in coef {
            m.add_term(var, i, j, v);
        }
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let lhs = m.evaluate(&sum);
        let rhs = m.evaluate(&x) + m.evaluate(&y) - m.constant_part();
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }
}

fn random_sdp(dims: &[usize], nvars: usize, vals: &[f64]) -> SdpProblem {
    let mut it = vals.iter().cycle();
    let mut p = SdpProblem::new(nvars, (0..nvars).map(|_| *it.next().unwrap()).collect());
    for &d in dims {
        let c = DenseMatrix::from_fn(d, d, |_, _| *it.next().unwrap());
        let mut b = LmiBlock::new(SymMatrix::symmetric_part(&c));
        for var in 0..nvars {
            for i in 0..d {
                for j in i..d {
                    let v = *it.next().unwrap();
                    if v.abs() > 0.5 {
                        b.add_entry(var, i, j, v);
                    }
                }
            }
        }
        p.blocks.push(b);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sdpa_round_trip(
        dims in prop::collection::vec(1usize..5, 1..4),
        nvars in 1usize..5,
        vals in prop::collection::vec(-1e3f64..1e3, 64),
    ) {
        let vals: Vec<f64> = vals.iter().map(|v| v / 7.0).collect();
        let p = random_sdp(&dims, nvars, &vals);
        let q = read_sdpa(&write_sdpa(&p, "round trip")).unwrap();
        prop_assert_eq!(q.num_vars, p.num_vars);
        prop_assert!(p.objective.iter().zip(&q.objective).all(|(a, b)| (a - b).abs() <= 1e-15 * a.abs().max(1.0)));
        for (a, b) in p.blocks.iter().zip(&q.blocks) {
            prop_assert!((&a.constant - &b.constant).amax() <= 1e-15 * a.constant.amax().max(1.0));
            for v in 0..p.num_vars {
                let (ca, cb) = (a.coefficient_dense(v), b.coefficient_dense(v));
                prop_assert!((&ca - &cb).amax() <= 1e-15 * ca.amax().max(1.0));
            }
        }
    }
}

/// min t s.t. t·I − M ⪰ 0 for a symmetric M: t* = λ_max(M).
fn lambda_max_sdp(m: &SymMatrix) -> SdpProblem {
    let n = m.dim();
    let mut b = LmiBlock::new(m.scaled(-1.0));
    for i in 0..n {
        b.add_entry(0, i, i, 1.0);
    }
    let mut p = SdpProblem::new(1, vec![1.0]);
    p.blocks.push(b);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solver_invariants(n in 1usize..5, v in prop::collection::vec(-3.0f64..3.0, 16), alpha in 0.1f64..10.0) {
        let m = SymMatrix::symmetric_part(&dense(n, n, &v));
        let p = lambda_max_sdp(&m);
        let opts = SolveOptions::default();
        let s1 = solve(&p, &opts).unwrap();
        let s2 = solve(&p, &opts).unwrap();
        prop_assert_eq!(s1.status, SolveStatus::Optimal);
        prop_assert!((s1.objective - m.lambda_max().unwrap()).abs() <= 1e-6);
        prop_assert_eq!(s1.iterations, s2.iterations);
        prop_assert_eq!(s1.objective.to_bits(), s2.objective.to_bits());
        for r in &s1.trace {
            prop_assert!(r.complementarity >= 0.0);
            prop_assert!((r.pobj - r.dobj - r.complementarity - r.residual_term).abs() <= 1e-8 * (1.0 + r.pobj.abs() + r.dobj.abs()));
        }
        let slack = p.blocks[0].evaluate(&s1.x);
        let comp = slack.as_dense().dot(&s1.dual[0]).abs();
        prop_assert!(comp <= 10.0 * opts.gap_tol * (1.0 + s1.objective.abs()));
        let mut scaled = p.clone();
        scaled.objective[0] *= alpha;
        let s3 = solve(&scaled, &opts).unwrap();
        prop_assert!((s3.objective - alpha * s1.objective).abs() <= 1e-6 * alpha.max(1.0));
        prop_assert!((s3.x[0] - s1.x[0]).abs() <= 1e-6);
    }

    #[test]
    fn normalization_preserves_error_dynamics(
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
        u in prop::collection::vec(0.0f64..1.0, 6),
        lv in prop::collection::vec(-1.0f64..1.0, 6),
        e0 in vec3(),
    ) {
        let bs = build_example1(t1, t2);
        let nb = normalize(&bs);
        let l = dense(3, 2, &lv);
        let lower = &bs.f_bounds.lower;
        let upper = &bs.f_bounds.upper;
        let coef: Vec<Vec<f64>> = (0..2)
            .map(|i| (0..3).map(|j| lower[i][j] + u[3 * i + j] * (upper[i][j] - lower[i][j])).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = coef.iter().zip(lower).map(|(c, a)| c.iter().zip(a).map(|(x, y)| x - y).collect()).collect();
        let a1 = bs.system.error_transition(&l, &coef, &[]);
        let a2 = nb.system.error_transition(&l, &shifted, &[]);
        let (mut e1, mut e2) = (e0.clone(), e0);
        for _ in 0..20 {
            e1 = &a1 * e1;
            e2 = &a2 * e2;
            prop_assert!((&e1 - &e2).amax() <= 1e-12 * (1.0 + e1.amax()));
        }
    }

    #[test]
    fn normalization_battery_output(s in 0.0f64..1.0, lv in prop::collection::vec(-1.0f64..1.0, 3)) {
        let bs = build_battery(&BatteryParams::default()).unwrap();
        let nb = normalize(&bs);
        let lo = bs.g_bounds.lower[0][0];
        let hi = bs.g_bounds.upper[0][0];
        let h = lo + s * (hi - lo);
        let l = DenseMatrix::from_column_slice(3, 1, &lv);
        let a1 = bs.system.error_transition(&l, &[], &[vec![h]]);
        let a2 = nb.system.error_transition(&l, &[], &[vec![h - lo]]);
        prop_assert!((a1 - a2).amax() <= 1e-12);
        prop_assert!(nb.g_bounds.lower[0][0] == 0.0);
    }

    #[test]
    fn battery_eigenvalues_in_unit_interval(
        r1 in 0.005f64..0.1,
        r2 in 0.005f64..0.1,
        c1 in 500.0f64..5000.0,
        c2 in 5000.0f64..1e5,
        ts in 0.001f64..1.0,
    ) {
        let p = BatteryParams { r1, r2, c1, c2, ts, ..BatteryParams::default() };
        let bs = build_battery(&p).unwrap();
        for i in 0..3 {
            let lam = bs.system.a[(i, i)];
            prop_assert!(lam > 0.0 && lam <= 1.0);
        }
    }

    #[test]
    fn scenario_round_trip(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, seed in 0u64..1000, horizon in 1usize..500) {
        let mut cfg = ScenarioConfig::example1(t1, t2);
        cfg.simulation.seed = seed;
        cfg.simulation.horizon = horizon;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

fn error_map_direct(sys: &DetailedSystem, l: &DenseMatrix, fc: &[Vec<f64>], e: &DenseVector) -> DenseVector {
    let mut out = (&sys.a - l * &sys.c) * e;
    for (i, comp) in sys.f_components.iter().enumerate() {
        let v = &comp.projection * e;
        let mut acc = 0.0;
        for (j, h) in fc[i].iter().enumerate() {
            acc += h * v[j];
        }
        out += sys.g.column(i) * acc;
    }
    out
}

#[test]
fn error_transition_matches_direct_recursion() {
    let bs = build_example1(0.3, 0.2);
    let l = dense(3, 2, &[0.1, -0.2, 0.3, 0.0, 0.5, 0.4]);
    let fc = vec![vec![0.0, 0.0, 0.2], vec![0.0, -0.1, 0.15]];
    let e = DenseVector::from_vec(vec![1.0, -0.5, 2.0]);
    let a = bs.system.error_transition(&l, &fc, &[]);
    assert!((&a * &e - error_map_direct(&bs.system, &l, &fc, &e)).amax() < 1e-14);
}

#[test]
fn nonlinear_error_follows_decomposition() {
    // e⁺ = (A − LC)e + G(f(x) − f(x̂)) for ω = 0 and u = 0; the decomposition
    // turns the nonlinear increment into the coefficient-dependent map.
    let bs = build_example1(0.5, 0.5);
    let sys = &bs.system;
    let l = dense(3, 2, &[0.2, 0.0, 0.1, 0.3, 0.0, 0.4]);
    let x = DenseVector::from_vec(vec![0.7, -1.1, 0.3]);
    let xh = DenseVector::from_vec(vec![-0.2, 0.5, 1.4]);
    let u = DenseVector::zeros(1);
    let w = DenseVector::zeros(1);
    let y = sys.output(&x, &u, &w);
    let xh_next = sys.step(&xh, &u, &w) + &l * (&y - sys.output(&xh, &u, &w));
    let e_next = sys.step(&x, &u, &w) - xh_next;
    let h = decompose(&sys.f_components, &x, &xh).unwrap();
    let via_map = sys.error_transition(&l, &h, &[]) * (&x - &xh);
    assert!((e_next - via_map).amax() < 1e-12);
}

#[test]
fn synthesis_is_deterministic() {
    let bs = build_example1(0.2, 0.1);
    let opts = SynthesisOptions {
        theorem: Theorem::T1,
        z_level: MultiplierLevel::BlockDiagonal,
        s_level: MultiplierLevel::BlockDiagonal,
        ..SynthesisOptions::default()
    };
    let prob = SynthesisProblem::normalized(&bs, opts).unwrap();
    let run = || lipobs::lmi::synthesize(&prob, &SolveOptions::default(), 0, 1).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.solution.iterations, b.solution.iterations);
    assert_eq!(a.solution.x, b.solution.x);
}
