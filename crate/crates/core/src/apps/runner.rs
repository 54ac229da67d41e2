//! Executes a scenario end to end and persists the result bundle.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Builtin, ConfigError, ScenarioConfig};
use crate::lmi::{synthesize, MultiplierLevel, ProblemFingerprint, SolverDiagnostics, SynthesisProblem, Theorem, VerificationReport};
use crate::matrixcore::{from_rows, to_rows, DenseMatrix, DenseVector, SymMatrix};
use crate::sdp::{write_sdpa, SolveStatus};
use crate::sim::{
    ekf_baseline, error_series, hinf_check, read_series_csv, rmse, simulate_observer, simulate_plant, write_trajectories_csv, InputProfile,
    MetricsReport, NoiseKind, NoiseSpec, SeriesColumn, SimError,
};
use crate::system::DetailedSystem;

pub const SYNTHESIS_FILE: &str = "synthesis.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const PROBLEM_FILE: &str = "problem.dat-s";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SCENARIO_FILE: &str = "scenario.toml";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot create output directory under {0}: {1}")]
    OutputDir(PathBuf, std::io::Error),
    #[error("cannot read synthesis record {0}: {1}")]
    Record(PathBuf, String),
}

/// The persisted synthesis outcome; matrices are row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub scenario: String,
    pub theorem: Theorem,
    pub z_level: MultiplierLevel,
    pub s_level: MultiplierLevel,
    pub feasible: bool,
    pub verified: Option<bool>,
    pub p: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<f64>>>,
    pub l: Option<Vec<Vec<f64>>>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub sqrt_mu: Option<f64>,
    pub diagnostics: SolverDiagnostics,
    pub fingerprint: ProblemFingerprint,
    pub verification: Option<VerificationReport>,
}

impl SynthesisRecord {
    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Record(path.to_path_buf(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| RunError::Record(path.to_path_buf(), e.to_string()))
    }

    pub fn gain(&self) -> Option<DenseMatrix> {
        self.l.as_ref().and_then(|l| from_rows(l).ok())
    }

    pub fn lyapunov(&self) -> Option<SymMatrix> {
        self.p.as_ref().and_then(|p| from_rows(p).ok()).map(|p| SymMatrix::symmetric_part(&p))
    }

    pub fn status(&self) -> SolveStatus {
        self.diagnostics.status
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub truncated_at: Option<usize>,
    pub observer_rmse: Vec<f64>,
    pub ekf_rmse: Option<Vec<f64>>,
    pub ekf_error: Option<String>,
    pub hinf: MetricsReport,
}

/// Contents of metrics.json; no wall-clock data so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario: String,
    pub horizon: usize,
    pub runs: usize,
    pub observer_rmse_mean: Vec<f64>,
    pub ekf_rmse_mean: Option<Vec<f64>>,
    pub hinf_all_satisfied: bool,
    pub truncated_runs: usize,
    pub per_run: Vec<RunMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Infeasible,
    VerificationFailed,
    StageFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: String,
    pub ok: bool,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub status: RunStatus,
    pub synthesis: Option<SynthesisRecord>,
    pub metrics: Option<ScenarioMetrics>,
    pub stages: Vec<StageLog>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Success => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunMode {
    /// Synthesis and verification only.
    Design,
    /// Synthesis, verification, simulation and metrics.
    Full,
    /// Simulation with a previously persisted design.
    Simulate(Box<SynthesisRecord>),
}

/// Creates `root/name`, or `root/name-1`, `root/name-2`, … when taken.
pub fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf, RunError> {
    fs::create_dir_all(root).map_err(|e| RunError::OutputDir(root.to_path_buf(), e))?;
    for i in 0usize.. {
        let dir = if i == 0 { root.join(name) } else { root.join(format!("{name}-{i}")) };
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(RunError::OutputDir(root.to_path_buf(), e)),
        }
    }
    unreachable!("unbounded suffix search")
}

struct Stages(Vec<StageLog>);

impl Stages {
    fn ok(&mut self, stage: &str, message: impl Into<String>) {
        self.0.push(StageLog {
            stage: stage.into(),
            ok: true,
            message: message.into(),
        });
    }

    fn fail(&mut self, stage: &str, message: impl Into<String>) {
        self.0.push(StageLog {
            stage: stage.into(),
            ok: false,
            message: message.into(),
        });
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

/// Validates, then runs the requested stages in a fresh directory under
/// `root`. Configuration errors return before anything is written.
pub fn run_scenario(cfg: &ScenarioConfig, root: &Path, mode: RunMode) -> Result<RunOutcome, RunError> {
    let warnings = cfg.validate()?;
    let bs = cfg.build_system()?;
    let dir = create_run_dir(root, &cfg.name)?;
    let mut st = Stages(Vec::new());
    st.ok("config", if warnings.is_empty() { "valid".to_string() } else { warnings.join("; ") });
    if let Err(e) = cfg.to_toml_string().map_err(|e| e.to_string()).and_then(|t| {
        fs::write(dir.join(SCENARIO_FILE), t).map_err(|e| e.to_string())
    }) {
        st.fail("config", e);
    }

    let wants_sim = !matches!(mode, RunMode::Design) && cfg.simulation.enabled;
    let mut status = RunStatus::Success;
    let record = match mode {
        RunMode::Simulate(rec) => {
            st.ok("synthesis", "loaded from an existing record");
            if let Err(e) = write_json(&dir.join(SYNTHESIS_FILE), &rec) {
                st.fail("synthesis", e);
            }
            Some(*rec)
        }
        _ => design_stage(cfg, &bs, &dir, &mut st),
    };
    match &record {
        None => status = RunStatus::StageFailed,
        Some(r) if !r.feasible => status = RunStatus::Infeasible,
        Some(r) if r.verified == Some(false) => status = RunStatus::VerificationFailed,
        _ => {}
    }

    let mut metrics = None;
    if wants_sim && status == RunStatus::Success {
        let rec = record.as_ref().expect("success implies a record");
        match simulate_stage(cfg, &bs.system, rec, &dir) {
            Ok(m) => {
                let mut msg = format!("{} run(s), observer RMSE {:?}", m.runs, m.observer_rmse_mean);
                if let Some(e) = &m.ekf_rmse_mean {
                    let _ = write!(msg, ", EKF RMSE {e:?}");
                }
                st.ok("simulate", msg);
                st.ok(
                    "metrics",
                    format!("H-inf inequality holds on all runs: {}; truncated runs: {}", m.hinf_all_satisfied, m.truncated_runs),
                );
                metrics = Some(m);
            }
            Err(e) => {
                st.fail("simulate", e);
                status = RunStatus::StageFailed;
            }
        }
    } else if wants_sim {
        st.fail("simulate", "skipped: no verified design");
    }

    let outcome = RunOutcome {
        dir,
        status,
        synthesis: record,
        metrics,
        stages: st.0,
    };
    write_summary(cfg, &outcome);
    Ok(outcome)
}

/// Runs independent scenarios on at most `workers` threads; results keep
/// the order of `cfgs`.
pub fn run_batch(cfgs: &[ScenarioConfig], root: &Path, mode: &RunMode, workers: usize) -> Vec<Result<RunOutcome, RunError>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutcome, RunError>>>> = cfgs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, cfgs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = cfgs.get(i) else { break };
                let res = run_scenario(cfg, root, mode.clone());
                *slots[i].lock().expect("slot lock") = Some(res);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}

fn design_stage(cfg: &ScenarioConfig, bs: &crate::system::BoundedSystem, dir: &Path, st: &mut Stages) -> Option<SynthesisRecord> {
    let prob = match SynthesisProblem::normalized(bs, cfg.synthesis.options()) {
        Ok(p) => p,
        Err(e) => {
            st.fail("synthesis", e.to_string());
            return None;
        }
    };
    let out = match synthesize(&prob, &cfg.solver, cfg.synthesis.verify_samples, cfg.synthesis.verify_seed) {
        Ok(o) => o,
        Err(e) => {
            st.fail("synthesis", e.to_string());
            return None;
        }
    };
    let comment = format!("{} {} z={} s={}", cfg.name, cfg.synthesis.theorem, cfg.synthesis.z_level.name(), cfg.synthesis.s_level.name());
    match fs::write(dir.join(PROBLEM_FILE), write_sdpa(&out.compiled.sdp, &comment)) {
        Ok(()) => st.ok("export", PROBLEM_FILE),
        Err(e) => st.fail("export", e.to_string()),
    }
    let diagnostics = SolverDiagnostics::from_solution(&out.solution);
    let res = out.result.as_ref();
    let record = SynthesisRecord {
        scenario: cfg.name.clone(),
        theorem: cfg.synthesis.theorem,
        z_level: cfg.synthesis.z_level,
        s_level: cfg.synthesis.s_level,
        feasible: res.is_some(),
        verified: res.and_then(|r| r.verification.as_ref()).map(|v| v.passed()),
        p: res.map(|r| to_rows(r.p.as_dense())),
        r: res.map(|r| to_rows(&r.r)),
        l: res.map(|r| to_rows(&r.l)),
        mu: res.map(|r| r.mu),
        nu: res.map(|r| r.nu),
        sqrt_mu: res.map(|r| r.sqrt_mu()),
        diagnostics,
        fingerprint: out.compiled.fingerprint.clone(),
        verification: res.and_then(|r| r.verification.clone()),
    };
    let msg = match &record.sqrt_mu {
        Some(s) => format!("{} after {} iterations, sqrt(mu) = {s:.6e}", out.status().label(), out.solution.iterations),
        None => format!("{}: {}", out.status().label(), out.solution.message),
    };
    if record.feasible {
        st.ok("synthesis", msg);
    } else {
        st.fail("synthesis", msg);
    }
    if let Some(v) = &record.verification {
        let msg = format!(
            "{} vertices + {} samples, max lambda {:.3e} (tol {:.1e}), max spectral radius {:.6}, {} violations",
            v.vertices, v.samples, v.max_lambda, v.tol, v.max_spectral_radius, v.violation_count
        );
        if v.passed() {
            st.ok("verify", msg);
        } else {
            st.fail("verify", msg);
        }
    }
    if let Err(e) = write_json(&dir.join(SYNTHESIS_FILE), &record) {
        st.fail("synthesis", e);
    }
    Some(record)
}

fn load_series(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    read_series_csv(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn common<'a>(a: &'a [DenseVector], b: &'a [DenseVector]) -> (&'a [DenseVector], &'a [DenseVector]) {
    let k = a.len().min(b.len());
    (&a[..k], &b[..k])
}

/// Simulates every seed of the scenario on the original plant with the
/// recorded gain and writes the trajectories of the first run.
fn simulate_stage(cfg: &ScenarioConfig, sys: &DetailedSystem, rec: &SynthesisRecord, dir: &Path) -> Result<ScenarioMetrics, String> {
    let s = &cfg.simulation;
    let l = rec.gain().ok_or("record has no gain")?;
    if l.nrows() != sys.n() || l.ncols() != sys.p() {
        return Err(format!("gain is {}x{}, system needs {}x{}", l.nrows(), l.ncols(), sys.n(), sys.p()));
    }
    let p = rec.lyapunov();
    let (mu, nu) = (rec.mu.unwrap_or(f64::NAN), rec.nu.unwrap_or(f64::NAN));
    let (x0, xh0) = cfg.initial_states(sys.n());
    let noise_kind = match &s.noise_file {
        Some(f) => NoiseKind::Series { values: load_series(f)? },
        None => s.noise.clone(),
    };
    let input = match &s.input_file {
        Some(f) => InputProfile::Series { values: load_series(f)? },
        None => s.input.clone(),
    };
    let u = input.generate(sys.inputs(), s.horizon).map_err(|e| e.to_string())?;
    let n = sys.n();
    let p0 = SymMatrix::from_diagonal(&s.ekf_p0.clone().unwrap_or_else(|| match cfg.system.builtin {
        Builtin::Battery => vec![1e-4, 1e-4, 1.0 / 12.0],
        _ => vec![1.0; n],
    }));
    let q = SymMatrix::symmetric_part(&(&sys.e * s.ekf_noise_var * sys.e.transpose()));
    let rn = SymMatrix::symmetric_part(&(&sys.d * s.ekf_noise_var * sys.d.transpose()));

    let mut per_run = Vec::with_capacity(s.runs);
    for i in 0..s.runs {
        let seed = s.seed.wrapping_add(i as u64);
        let w = NoiseSpec {
            kind: noise_kind.clone(),
            seed,
        }
        .generate(sys.q(), s.horizon)
        .map_err(|e| e.to_string())?;
        let plant = simulate_plant(sys, &x0, &u, &w).map_err(|e| e.to_string())?;
        let obs = simulate_observer(sys, &l, &xh0, &plant.outputs, &u).map_err(|e| e.to_string())?;
        let (tx, ox) = common(&plant.states, &obs.states);
        let observer_rmse = rmse(tx, ox).map_err(|e| e.to_string())?;
        let e = error_series(tx, ox);
        let hinf = hinf_check(&e, &w, mu, nu, p.as_ref());
        let (ekf, ekf_error) = if s.ekf {
            match ekf_baseline(sys, &xh0, &p0, &q, &rn, &plant.outputs, &u) {
                Ok(run) => (Some(run), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, None)
        };
        let ekf_rmse = match &ekf {
            Some(run) => {
                let (a, b) = common(&plant.states, &run.predicted.states);
                Some(rmse(a, b).map_err(|e: SimError| e.to_string())?)
            }
            None => None,
        };
        if i == 0 {
            let empty: Vec<DenseVector> = Vec::new();
            let ekf_states = ekf.as_ref().map_or(&empty, |r| &r.predicted.states);
            let mut cols = vec![
                SeriesColumn { name: "x", values: &plant.states },
                SeriesColumn { name: "xhat", values: &obs.states },
            ];
            if ekf.is_some() {
                cols.push(SeriesColumn { name: "ekf", values: ekf_states });
            }
            cols.push(SeriesColumn { name: "y", values: &plant.outputs });
            if sys.inputs() > 0 {
                cols.push(SeriesColumn { name: "u", values: &u });
            }
            cols.push(SeriesColumn { name: "w", values: &w });
            let file = fs::File::create(dir.join(TRAJECTORY_FILE)).map_err(|e| e.to_string())?;
            write_trajectories_csv(std::io::BufWriter::new(file), &cols).map_err(|e| e.to_string())?;
        }
        per_run.push(RunMetrics {
            seed,
            truncated_at: plant.truncated_at.or(obs.truncated_at),
            observer_rmse,
            ekf_rmse,
            ekf_error,
            hinf,
        });
    }
    let mean = |rows: Vec<&Vec<f64>>| -> Vec<f64> {
        let k = rows.len() as f64;
        let mut acc = vec![0.0; rows.first().map_or(0, |r| r.len())];
        for r in &rows {
            for (a, v) in acc.iter_mut().zip(r.iter()) {
                *a += v / k;
            }
        }
        acc
    };
    let ekf_rows: Vec<&Vec<f64>> = per_run.iter().filter_map(|r| r.ekf_rmse.as_ref()).collect();
    let metrics = ScenarioMetrics {
        scenario: cfg.name.clone(),
        horizon: s.horizon,
        runs: s.runs,
        observer_rmse_mean: mean(per_run.iter().map(|r| &r.observer_rmse).collect()),
        ekf_rmse_mean: if s.ekf && ekf_rows.len() == per_run.len() { Some(mean(ekf_rows)) } else { None },
        hinf_all_satisfied: per_run.iter().all(|r| r.hinf.hinf_satisfied),
        truncated_runs: per_run.iter().filter(|r| r.truncated_at.is_some()).count(),
        per_run,
    };
    write_json(&dir.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

fn write_summary(cfg: &ScenarioConfig, out: &RunOutcome) {
    let mut s = String::new();
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = writeln!(s, "scenario: {}", cfg.name);
    let _ = writeln!(s, "generated (unix seconds): {stamp}");
    let _ = writeln!(
        s,
        "synthesis: {} z={} s={}",
        cfg.synthesis.theorem,
        cfg.synthesis.z_level.name(),
        cfg.synthesis.s_level.name()
    );
    let _ = writeln!(s, "status: {:?} (exit {})", out.status, out.exit_code());
    if let Some(r) = &out.synthesis {
        if let (Some(sm), Some(nu)) = (r.sqrt_mu, r.nu) {
            let _ = writeln!(s, "sqrt(mu) = {sm:.6e}, nu = lambda_max(P) = {nu:.6e}");
        }
        if let Some(l) = &r.l {
            let _ = writeln!(s, "L = {l:?}");
        }
    }
    let _ = writeln!(s);
    for st in &out.stages {
        let _ = writeln!(s, "[{}] {}: {}", st.stage, if st.ok { "ok" } else { "FAILED" }, st.message);
    }
    let _ = fs::write(out.dir.join(SUMMARY_FILE), s);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_get_suffixes() {
        let tmp = tempfile::tempdir().unwrap();
        let a = create_run_dir(tmp.path(), "x").unwrap();
        let b = create_run_dir(tmp.path(), "x").unwrap();
        let c = create_run_dir(tmp.path(), "x").unwrap();
        assert_eq!(a.file_name().unwrap(), "x");
        assert_eq!(b.file_name().unwrap(), "x-1");
        assert_eq!(c.file_name().unwrap(), "x-2");
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ScenarioConfig::battery();
        cfg.system.battery.cn = -5.0;
        assert!(matches!(run_scenario(&cfg, tmp.path(), RunMode::Full), Err(RunError::Config(_))));
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }

    #[test]
    fn batch_preserves_order() {
        let tmp = tempfile::tempdir().unwrap();
        let cfgs: Vec<ScenarioConfig> = (0..3)
            .map(|i| {
                let mut c = ScenarioConfig::example1(0.0, 0.0);
                c.name = format!("lin{i}");
                c
            })
            .collect();
        let out = run_batch(&cfgs, tmp.path(), &RunMode::Design, 2);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap().dir.file_name().unwrap().to_string_lossy(), format!("lin{i}"));
        }
    }

    #[test]
    fn linear_example_bundle() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ScenarioConfig::example1(0.0, 0.0);
        cfg.simulation.horizon = 30;
        let out = run_scenario(&cfg, tmp.path(), RunMode::Full).unwrap();
        assert_eq!(out.status, RunStatus::Success, "{:?}", out.stages);
        for f in [SYNTHESIS_FILE, METRICS_FILE, TRAJECTORY_FILE, PROBLEM_FILE, SUMMARY_FILE, SCENARIO_FILE] {
            assert!(out.dir.join(f).exists(), "{f}");
        }
        let rec = SynthesisRecord::read(&out.dir.join(SYNTHESIS_FILE)).unwrap();
        assert_eq!(rec.gain().unwrap().shape(), (3, 2));
        assert!(out.metrics.unwrap().hinf_all_satisfied);
    }
}
